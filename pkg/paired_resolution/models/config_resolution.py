import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

from paired_resolution.errors import ConfigError
from paired_resolution.modules.family_multiplicity import FIXED_METHODS, METHODS, adjust_alpha
from paired_resolution.ops.distributions import norm_ppf, z_two_sided

FAMILIES = ("adjacent", "all-pairs")
GRIDS = ("uniform", "two-point", "beta")


@dataclass
class TestConfig:
    """Operating point shared by every test, inversion and stress test.

    Only two-sided tests are supported. `family_size` left as None means the
    size of the pre-declared family is derived from the number of models by
    `family` ("adjacent": K-1 pairs, "all-pairs": K(K-1)/2).
    """

    __test__ = False  # not a pytest class

    alpha: float = 0.05
    power: float = 0.8
    multiplicity: str = "none"
    family: str = "adjacent"
    family_size: Optional[int] = None
    seed: int = 42
    bootstrap_reps: int = 1000
    nstar_ci_reps: int = 500
    cluster_bootstrap_reps: int = 1000
    eprocess_grid: str = "uniform"
    anytime_psi: Optional[float] = None
    rho_shift: float = 0.10

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.power < 1.0:
            raise ConfigError(f"power must lie in (0, 1), got {self.power}")
        if self.multiplicity not in METHODS:
            raise ConfigError(f"Invalid multiplicity {self.multiplicity!r}; expected one of {METHODS}")
        if self.family not in FAMILIES:
            raise ConfigError(f"Invalid family {self.family!r}; expected one of {FAMILIES}")
        if self.family_size is not None and self.family_size < 1:
            raise ConfigError(f"family_size must be a positive integer, got {self.family_size}")
        if self.eprocess_grid not in GRIDS:
            raise ConfigError(f"Invalid e-process grid {self.eprocess_grid!r}; expected one of {GRIDS}")
        if self.anytime_psi is not None and not 0.0 < self.anytime_psi <= 1.0:
            raise ConfigError(f"anytime_psi must lie in (0, 1], got {self.anytime_psi}")
        for name in ("bootstrap_reps", "nstar_ci_reps", "cluster_bootstrap_reps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def beta(self):
        return 1.0 - self.power

    @property
    def m(self):
        return self.family_size or 1

    @property
    def design_alpha(self):
        """Per-test level used by the Wald inversions.

        Bonferroni and Sidak shrink alpha; the stepwise methods have no single
        per-test level, so the inversions keep the nominal alpha and the
        family procedure applies position-specific levels on top.
        """
        if self.multiplicity in FIXED_METHODS and self.m > 1:
            return adjust_alpha(self.alpha, self.m, self.multiplicity)
        return self.alpha

    @property
    def z_alpha(self):
        return z_two_sided(self.design_alpha)

    @property
    def z_beta(self):
        return norm_ppf(self.power)

    @property
    def z_sum(self):
        return self.z_alpha + self.z_beta

    @property
    def k_const(self):
        return self.z_sum ** 2

    def unadjusted(self):
        return replace(self, multiplicity="none", family_size=None)

    def with_family_size(self, m):
        if self.family_size is not None:
            return self
        return replace(self, family_size=m)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=4)

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

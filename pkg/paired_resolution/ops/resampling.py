# Copyright (c) 2025, paired-resolution authors.
"""Vectorised resampling kernels.

Binary pairs are resampled through their discordant counts: if (b, c) are the
discordant counts of n source items, a bootstrap sample of size n_total has
    B* ~ Bin(n_total, b / n),   C* | B* ~ Bin(n_total - B*, c / (n - b)),
which is the multinomial draw of the four 2x2 cells marginalised onto (B*, C*).
`binomial_chain_counts_ref` does the same thing by resampling item indices.
"""

import math

import torch
from einops import rearrange

from paired_resolution.ops.distributions import norm_ppf


def latent_bernoulli_pairs(p_a, p_b, rho_z, shape, generator):
    """Threshold correlated standard normals at Phi^-1(p_a), Phi^-1(p_b).

    Returns two float64 {0, 1} tensors of `shape`.
    """
    z = torch.randn(*shape, 2, generator=generator, dtype=torch.float64)
    z_a, z_b = z[..., 0], z[..., 1]
    z_b = rho_z * z_a + (1.0 - rho_z**2) ** 0.5 * z_b
    a = (z_a < norm_ppf(p_a)).to(torch.float64)
    b = (z_b < norm_ppf(p_b)).to(torch.float64)
    return a, b


def binomial_chain_counts(n_total, b, c, n_source, reps, generator):
    """Draw `reps` bootstrap discordant-count pairs (B*, C*) of size `n_total`."""
    assert 0 <= b + c <= n_source and n_source >= 1
    total = torch.full((reps,), float(n_total), dtype=torch.float64)
    p_b = torch.full((reps,), b / n_source, dtype=torch.float64)
    b_star = torch.binomial(total, p_b, generator=generator)
    rest = n_source - b
    p_c = torch.full((reps,), c / rest if rest > 0 else 0.0, dtype=torch.float64)
    c_star = torch.binomial(total - b_star, p_c, generator=generator)
    return b_star, c_star


def binomial_chain_counts_ref(n_total, b, c, n_source, reps, generator):
    d = torch.zeros(n_source, dtype=torch.float64)
    d[:b] = 1.0
    d[b:b + c] = -1.0
    idx = torch.randint(n_source, (reps, n_total), generator=generator)
    sample = d[idx]
    return (sample == 1.0).sum(-1).to(torch.float64), (sample == -1.0).sum(-1).to(torch.float64)


def bootstrap_means(d, reps, generator, chunk_size=2**22):
    """Means of `reps` with-replacement resamples of the 1-D tensor `d`."""
    n = d.shape[0]
    rows_per_chunk = max(1, chunk_size // max(n, 1))
    out = []
    done = 0
    while done < reps:
        rows = min(rows_per_chunk, reps - done)
        idx = torch.randint(n, (rows, n), generator=generator)
        out.append(d[idx].mean(-1))
        done += rows
    return torch.cat(out)


def resampled_sums(d, n_total, reps, generator, chunk_size=2**22):
    """Sums and sums of squares of `reps` resamples of size `n_total`."""
    n = d.shape[0]
    rows_per_chunk = max(1, chunk_size // max(n_total, 1))
    sums, sumsq = [], []
    done = 0
    while done < reps:
        rows = min(rows_per_chunk, reps - done)
        sample = d[torch.randint(n, (rows, n_total), generator=generator)]
        sums.append(sample.sum(-1))
        sumsq.append((sample * sample).sum(-1))
        done += rows
    return torch.cat(sums), torch.cat(sumsq)


def percentile_interval(values, lower, upper):
    """Percentile bounds by the inverted empirical CDF (no interpolation).

    `values` may contain +inf; it sorts above every finite value.
    """
    ordered, _ = torch.sort(values.flatten())
    n = ordered.shape[0]

    def pick(level):
        k = math.ceil(level * n - 1e-9)
        return ordered[min(max(k - 1, 0), n - 1)].item()

    return pick(lower), pick(upper)


def first_crossing(hits):
    """Index (1-based) of the first True along the last axis, 0 when there is none.

    hits: (..., length) bool
    """
    length = hits.shape[-1]
    flat = rearrange(hits, "... l -> (...) l")
    any_hit = flat.any(-1)
    first = torch.argmax(flat.to(torch.int32), dim=-1) + 1
    first = torch.where(any_hit, first, torch.zeros_like(first))
    assert first.numel() == 0 or first.max().item() <= length
    return first.reshape(hits.shape[:-1])

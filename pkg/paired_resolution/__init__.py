__version__ = "0.1.0"

from paired_resolution.models.config_resolution import TestConfig
from paired_resolution.models.diagnose import diagnose, emit_report, parse_report
from paired_resolution.modules.paired_core import mde, required_n, resolve, summarize_pair
from paired_resolution.utils.io import load_score_matrix

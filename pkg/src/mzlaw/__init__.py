"""Regular-variation numerics and Monte Carlo checks of Marcinkiewicz-Zygmund strong laws."""

__version__ = "0.1.0"

from .svf import SlowVaryFn, parse, to_text, iterated_log_weight  # noqa: E402
from .conjugate import conjugate_pair, conjugate_symbolic, NumericConjugate, asymptotic_inverse  # noqa: E402
from .normalizer import NormalizingSeq, sequence_from_L, karamata_tail_sum  # noqa: E402
from .distributions import parse_distribution, MomentSpec, moment_value  # noqa: E402
from .dependence import parse_dependence, generate_sequence  # noqa: E402
from .criterion import moment_series_check, tail_series_classify  # noqa: E402
from .harness import ExperimentConfig, run_slln, run_complete_convergence, run_petersburg  # noqa: E402

"""Sparse tensor decomposition on a linearized mode-agnostic format.

The pipeline: parse or build a ``CooTensor``, linearize it into an
``AltoTensor`` (bit-interleaved positions, sorted), then run MTTKRP-based
CP-ALS or multiplicative-update CP-APR on it. ``CpAls`` and ``CpApr`` wrap
the drivers in an estimator API; the ``alto`` console script exposes
conversion, statistics, benchmarking, and decomposition.
"""

from .encoding import (
    AltoLayout,
    TensorShape,
    UnsupportedShapeError,
    alto_metadata_bits,
    build_layout,
    coo_compression_ratio,
    delinearize,
    linearize,
    sfc_metadata_bits,
)
from .tensor import (
    AltoFormatError,
    AltoTensor,
    CooTensor,
    ParseError,
    TensorStats,
    compute_stats,
    parse_frostt,
    read_alto,
    write_alto,
    write_frostt,
)
from .partition import (
    ModeOrderedView,
    Segment,
    SegmentSet,
    make_mode_ordered_view,
    make_segments,
    overlap,
)
from .kernels import (
    Strategy,
    StrategyChoice,
    mttkrp,
    mttkrp_output_oriented,
    mttkrp_recursive,
    mttkrp_sequential,
    select_strategy,
)
from .cpd import (
    CpAlsConfig,
    CpAlsResult,
    CpAprConfig,
    CpAprResult,
    KruskalModel,
    cp_als,
    cp_apr_mu,
    init_factors,
    kkt_violation,
    phi_kernel,
    poisson_loglik,
    precompute_krp_rows,
    select_krp_memory_mode,
)
from .estimators import CpAls, CpApr
from .validation import NumericalError

__version__ = "0.1.0"

__all__ = [
    "AltoFormatError",
    "AltoLayout",
    "AltoTensor",
    "CooTensor",
    "CpAls",
    "CpAlsConfig",
    "CpAlsResult",
    "CpApr",
    "CpAprConfig",
    "CpAprResult",
    "KruskalModel",
    "ModeOrderedView",
    "NumericalError",
    "ParseError",
    "Segment",
    "SegmentSet",
    "Strategy",
    "StrategyChoice",
    "TensorShape",
    "TensorStats",
    "UnsupportedShapeError",
    "alto_metadata_bits",
    "build_layout",
    "compute_stats",
    "coo_compression_ratio",
    "cp_als",
    "cp_apr_mu",
    "delinearize",
    "init_factors",
    "kkt_violation",
    "linearize",
    "make_mode_ordered_view",
    "make_segments",
    "mttkrp",
    "mttkrp_output_oriented",
    "mttkrp_recursive",
    "mttkrp_sequential",
    "overlap",
    "parse_frostt",
    "phi_kernel",
    "poisson_loglik",
    "precompute_krp_rows",
    "read_alto",
    "select_krp_memory_mode",
    "select_strategy",
    "sfc_metadata_bits",
    "write_alto",
    "write_frostt",
]

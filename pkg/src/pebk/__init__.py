"""Paraexp exponential block Krylov (PEBK) time integration."""
from .ebk import EbkConfig, EbkConvergenceError, ebk_solve, propagate_homogeneous, solve_window
from .linalg import SparseOperator, factor_shifted, thin_svd
from .lowrank import LowRankSource, SampleGrid, low_rank_source
from .model import GridSpec, LinearIVP, NonlinearIVP
from .paraexp import Partition, RankRule, paraexp_solve
from .waveform import Waveform
from .wr import WrConfig, wr_run

__version__ = "0.1.0"

__all__ = [
    "EbkConfig", "EbkConvergenceError", "GridSpec", "LinearIVP", "LowRankSource", "NonlinearIVP",
    "Partition", "RankRule", "SampleGrid", "SparseOperator", "Waveform", "WrConfig", "ebk_solve",
    "factor_shifted", "low_rank_source", "paraexp_solve", "propagate_homogeneous", "solve_window",
    "thin_svd", "wr_run",
]

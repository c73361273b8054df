"""Two-stage parallel MCMC for nested Normal/Inverse-Gamma hierarchical models.

Stage 1 samples each group on its own data; stage 2 rebuilds the joint
posterior from those samples alone with Metropolis-Hastings-within-Gibbs.
A full-data Gibbs sampler and density-distance tools check the result.
"""

from .bank import SampleBank, load_bank, save_bank
from .chains import ChainStore
from .errors import DomainError, FormatError, H2SError, InputError, NumericalError
from .full import draw_mu, draw_sigma2_i, draw_tau2, draw_theta_i, run_full_gibbs
from .metrics import DensityEstimate, kde, relative_l1, relative_l2
from .diagnostics import effective_sample_size, split_rhat
from .model import (
    ChainState,
    GroupData,
    GroupStats,
    InvGammaPrior,
    ModelSpec,
    NormalPrior,
    compute_stats,
    log_group_likelihood,
    log_invgamma_density,
    log_normal_density,
)
from .report import ComparisonReport, compare, timing_table
from .simulate import SimConfig, simulate, simulate_four_level, simulate_three_level
from .stage1 import run_stage1_all, run_stage1_group
from .stage2 import MHStats, log_accept_ratio, mh_group_update, run_stage2

__version__ = "0.1.0"

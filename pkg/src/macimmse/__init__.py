"""Two-user Gaussian MAC with finite-alphabet inputs.

Posterior estimation, mutual information, MMSE and cross-estimate
statistics, closed-form gradients, precoder and power optimisation.
"""

__version__ = "0.1.0"

from macimmse.constellation import (
    Constellation,
    JointAlphabet,
    bpsk,
    by_name,
    cartesian_power,
    product,
    qam,
)
from macimmse.system import ChannelSample, MacSystem, PowerReport, power_check, scalar_system, synthesize
from macimmse.bayes import (
    PosteriorAtY,
    PosteriorStats,
    log_likelihood,
    posterior,
    posterior_stats,
    score_identity_residual,
    wiener_estimates,
)
from macimmse.info import (
    ImmseReport,
    McEstimate,
    conditional_mi,
    immse_identity_check,
    low_snr_expansion,
    mi_treat_as_noise,
    mutual_information,
)
from macimmse.grad import (
    GradientReport,
    compare,
    fd_gradient_oracle,
    grad_conditional,
    grad_h,
    grad_p,
    grad_p_genie,
    grad_p_treat_as_noise,
)
from macimmse.opt import (
    PowerAllocation,
    PrecoderSolution,
    SolverOptions,
    mercury_waterfilling,
    solve_power_allocation,
    solve_precoders,
    waterfilling,
)

__all__ = [
    "ChannelSample",
    "Constellation",
    "GradientReport",
    "ImmseReport",
    "JointAlphabet",
    "MacSystem",
    "McEstimate",
    "PosteriorAtY",
    "PosteriorStats",
    "PowerAllocation",
    "PowerReport",
    "PrecoderSolution",
    "SolverOptions",
    "bpsk",
    "by_name",
    "cartesian_power",
    "compare",
    "conditional_mi",
    "fd_gradient_oracle",
    "grad_conditional",
    "grad_h",
    "grad_p",
    "grad_p_genie",
    "grad_p_treat_as_noise",
    "immse_identity_check",
    "log_likelihood",
    "low_snr_expansion",
    "mercury_waterfilling",
    "mi_treat_as_noise",
    "mutual_information",
    "posterior",
    "posterior_stats",
    "power_check",
    "product",
    "qam",
    "scalar_system",
    "score_identity_residual",
    "solve_power_allocation",
    "solve_precoders",
    "synthesize",
    "waterfilling",
    "wiener_estimates",
]

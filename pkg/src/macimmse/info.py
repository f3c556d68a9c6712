"""Mutual-information estimators and the generalized I-MMSE check.

All estimators average an *information density* over sample sets from
:mod:`macimmse.bayes`.  For the joint mutual information the density is

    i(x1, x2, n) = -||n||^2 - n_r log(pi) - log p_y(y),

whose mean is ``I(x1, x2; y)`` in nats.  Using ``-||n||^2`` instead of its
mean ``-n_r`` removes the noise-energy fluctuation from every sample; with
antithetic noise (``n`` and ``-n`` share the inputs) the remaining first
order term in ``sqrt(snr)`` cancels as well, which is what keeps the
relative error small at very low snr.

Values are carried in nats and converted to bits only in
:class:`McEstimate` reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from macimmse import _streams
from macimmse.bayes import (
    LOG_PI,
    PosteriorStats,
    SampleSet,
    _Moments,
    auto_importance,
    boundary_sample_set,
    merge_all,
    mixture_log_density,
    posterior_stats,
    quadrature_sets,
)
from macimmse.system import MacSystem

__all__ = [
    "McEstimate",
    "ImmseReport",
    "mutual_information",
    "mi_treat_as_noise",
    "mi_treat_as_noise_exact",
    "conditional_mi",
    "immse_identity_check",
    "low_snr_expansion",
    "measured_second_order",
    "density_contrasts",
    "whitened_system",
]

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class McEstimate:
    """A scalar estimate with its standard error.

    ``unit`` is ``"bits"`` or ``"nats"``; quadrature estimates carry a zero
    standard error and ``seed = -1``.
    """

    value: float
    std_error: float
    n_samples: int
    seed: int
    unit: str = "bits"

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("estimate is not finite")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")

    def to(self, unit: str) -> "McEstimate":
        if unit == self.unit:
            return self
        f = 1.0 / LN2 if unit == "bits" else LN2
        return McEstimate(self.value * f, self.std_error * f, self.n_samples, self.seed, unit)

    @property
    def nats(self) -> float:
        return self.to("nats").value

    @property
    def bits(self) -> float:
        return self.to("bits").value


# ---------------------------------------------------------------------------
# information densities
# ---------------------------------------------------------------------------

Density = Callable[[MacSystem, SampleSet], np.ndarray]


def _outputs(sys: MacSystem, ss: SampleSet):
    s = np.sqrt(sys.snr)
    x1 = sys.c1.points[ss.index1]
    x2 = sys.c2.points[ss.index2]
    return x1, x2, s * x1 @ sys.a1.T + s * x2 @ sys.a2.T + ss.noise


def _noise_term(sys: MacSystem, noise: np.ndarray) -> np.ndarray:
    return -np.sum(noise.real ** 2 + noise.imag ** 2, axis=1) - sys.n_r * LOG_PI


def joint_density(sys: MacSystem, ss: SampleSet) -> np.ndarray:
    """Per-sample ``log p(y|x1,x2) - log p_y(y)``."""
    j = sys.joint()
    _, _, y = _outputs(sys, ss)
    with np.errstate(divide="ignore"):
        log_py, _ = mixture_log_density(y, sys.pair_means(j), np.log(j.probs))
    return _noise_term(sys, ss.noise) - log_py


def _single_user_log_density(sys: MacSystem, user: int, residual: np.ndarray) -> np.ndarray:
    """``log`` of the mixture over user ``user``'s alphabet evaluated at ``residual``."""
    c = sys.c1 if user == 1 else sys.c2
    a = sys.a1 if user == 1 else sys.a2
    means = np.sqrt(sys.snr) * c.points @ a.T
    with np.errstate(divide="ignore"):
        lp, _ = mixture_log_density(residual, means, np.log(c.probs))
    return lp


def genie_density(sys: MacSystem, ss: SampleSet, given_user: int) -> np.ndarray:
    """Per-sample ``log p(y|x1,x2) - log p(y|x_given)``: the known user is subtracted."""
    x1, x2, y = _outputs(sys, ss)
    s = np.sqrt(sys.snr)
    if given_user == 2:
        residual, free = y - s * x2 @ sys.a2.T, 1
    elif given_user == 1:
        residual, free = y - s * x1 @ sys.a1.T, 2
    else:
        raise ValueError("given_user must be 1 or 2")
    return _noise_term(sys, ss.noise) - _single_user_log_density(sys, free, residual)


def marginal_density(sys: MacSystem, ss: SampleSet, decode_user: int) -> np.ndarray:
    """Per-sample ``log p(y|x_d) - log p_y(y)`` with the other user's exact discrete law."""
    return joint_density(sys, ss) - genie_density(sys, ss, decode_user)


# ---------------------------------------------------------------------------
# estimation driver
# ---------------------------------------------------------------------------


def density_contrasts(
    systems: Sequence[MacSystem],
    coefficients: np.ndarray,
    seed: int,
    n_samples: int,
    *,
    density: Density = joint_density,
    method: str = "mc",
    nodes: Optional[int] = None,
    antithetic: bool = True,
    workers: int = 1,
    importance: bool = False,
) -> List[Tuple[float, float]]:
    """Means and standard errors of linear combinations of densities.

    Every system is evaluated on the *same* sample set (common random
    numbers), so a row of ``coefficients`` such as ``[1, -1] / (2 h)`` gives
    a finite difference whose error bar reflects only the difference.

    ``importance`` switches on boundary importance sampling of the noise
    (see :func:`macimmse.bayes.boundary_sample_set`), built from the first
    system's pair means.

    Returns one ``(mean, std_error)`` pair in nats per coefficient row.
    """
    coef = np.atleast_2d(np.asarray(coefficients, dtype=float))
    if coef.shape[1] != len(systems):
        raise ValueError("one coefficient column per system is required")
    ref = systems[0]

    def evaluate(ss: SampleSet) -> np.ndarray:
        vals = np.stack([density(s, ss) for s in systems])
        if antithetic and method == "mc":
            flipped = SampleSet(ss.index1, ss.index2, -ss.noise, ss.weight)
            vals = 0.5 * (vals + np.stack([density(s, flipped) for s in systems]))
        return coef @ vals

    if method == "quadrature":
        ss = quadrature_sets(ref, nodes)
        rows = evaluate(ss)
        return [(float(np.dot(ss.weight, r)), 0.0) for r in rows]
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")

    def run(chunk, start, size):
        ss = boundary_sample_set(ref, seed, chunk, size, importance)
        ones = np.ones(size)
        return [_Moments.of(r * ss.weight, ones) for r in evaluate(ss)]

    parts = _streams.map_chunks(run, n_samples, workers)
    out = []
    for k in range(coef.shape[0]):
        m = merge_all(p[k] for p in parts)
        out.append((m.mean, m.std_error()))
    return out


def _estimate(sys, seed, n_samples, density, method, nodes, antithetic, workers, unit="bits") -> McEstimate:
    (mean, se), = density_contrasts(
        [sys], np.ones((1, 1)), seed, n_samples,
        density=density, method=method, nodes=nodes, antithetic=antithetic, workers=workers,
    )
    est = McEstimate(mean, se, n_samples if method == "mc" else 0, seed if method == "mc" else -1, "nats")
    return est.to(unit)


def mutual_information(
    sys: MacSystem,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    method: str = "mc",
    nodes: Optional[int] = None,
    antithetic: bool = True,
    workers: int = 1,
    unit: str = "bits",
) -> McEstimate:
    """Joint mutual information ``I(x1, x2; y)``.

    Examples
    --------
    >>> from macimmse.system import scalar_system
    >>> round(mutual_information(scalar_system(snr=100.0), method="quadrature").value, 3)
    1.5
    """
    return _estimate(sys, seed, n_samples, joint_density, method, nodes, antithetic, workers, unit)


def whitened_system(sys: MacSystem, decode_user: int) -> MacSystem:
    """Single-user system seen by ``decode_user`` when the other user is Gaussian noise.

    The interferer is replaced by a Gaussian of covariance
    ``snr A_l A_l^H``; whitening by ``K^{-1/2}`` with
    ``K = I + snr A_l A_l^H`` leaves unit noise and channel
    ``K^{-1/2} H_d``.  The returned system has the interferer switched off.
    """
    hd, pd, hl, pl = sys.user_matrices(decode_user)
    al = hl @ pl
    k = np.eye(sys.n_r) + sys.snr * al @ al.conj().T
    w, v = np.linalg.eigh(k)
    k_isqrt = (v / np.sqrt(w)) @ v.conj().T
    h_white = k_isqrt @ hd
    zero = np.zeros_like(sys.p1)
    if decode_user == 1:
        return sys.with_(h1=h_white, h2=np.zeros_like(sys.h2), p2=zero)
    return sys.with_(h2=h_white, h1=np.zeros_like(sys.h1), p1=zero)


def mi_treat_as_noise(
    sys: MacSystem,
    decode_user: int = 2,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    method: str = "mc",
    nodes: Optional[int] = None,
    antithetic: bool = True,
    workers: int = 1,
    unit: str = "bits",
) -> McEstimate:
    """``I(x_d; y)`` with the other user's signal modelled as Gaussian noise."""
    if decode_user not in (1, 2):
        raise ValueError("decode_user must be 1 or 2")
    white = whitened_system(sys, decode_user)
    return _estimate(white, seed, n_samples, joint_density, method, nodes, antithetic, workers, unit)


def mi_treat_as_noise_exact(
    sys: MacSystem,
    decode_user: int = 2,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    method: str = "mc",
    nodes: Optional[int] = None,
    workers: int = 1,
    unit: str = "bits",
) -> McEstimate:
    """``I(x_d; y)`` with the other user's true discrete law marginalised out."""
    if decode_user not in (1, 2):
        raise ValueError("decode_user must be 1 or 2")

    def density(s, ss):
        return marginal_density(s, ss, decode_user)

    return _estimate(sys, seed, n_samples, density, method, nodes, False, workers, unit)


def conditional_mi(
    sys: MacSystem,
    given_user: int = 2,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    method: str = "mc",
    nodes: Optional[int] = None,
    antithetic: bool = True,
    workers: int = 1,
    unit: str = "bits",
) -> McEstimate:
    """``I(x_k; y | x_given)`` with the known user's contribution subtracted."""
    if given_user not in (1, 2):
        raise ValueError("given_user must be 1 or 2")

    def density(s, ss):
        return genie_density(s, ss, given_user)

    return _estimate(sys, seed, n_samples, density, method, nodes, antithetic, workers, unit)


# ---------------------------------------------------------------------------
# generalized I-MMSE identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImmseReport:
    """Finite-difference ``dI/dsnr`` against ``mmse_total + psi`` on a grid (nats)."""

    snr_grid: List[float]
    i_values: List[McEstimate]
    di_dsnr_fd: List[float]
    mmse_plus_psi: List[float]
    max_rel_error: float
    di_dsnr_se: List[float] = field(default_factory=list)
    mmse_only: List[float] = field(default_factory=list)
    psi: List[float] = field(default_factory=list)
    rel_errors: List[float] = field(default_factory=list)
    rel_errors_mmse_only: List[float] = field(default_factory=list)
    fd_steps: List[float] = field(default_factory=list)


def immse_identity_check(
    sys: MacSystem,
    snr_grid: Sequence[float],
    fd_step: Optional[float] = None,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    stats_method: Optional[str] = None,
    mi_method: str = "mc",
    nodes: Optional[int] = None,
    workers: int = 1,
    importance: Optional[bool] = None,
) -> ImmseReport:
    """Compare the snr-derivative of ``I`` with ``mmse_total + psi_oracle``.

    Parameters
    ----------
    sys : MacSystem
        Template; its ``snr`` is replaced by each grid value.
    fd_step : float, optional
        Absolute central-difference step.  The default is ``0.01 * snr``
        at each grid point; at ``0.05 * snr`` the truncation error alone
        reaches several percent once ``I`` saturates exponentially.
    stats_method : {"quadrature", "mc"}, optional
        Method for the MMSE side.  Defaults to quadrature for systems with a
        single receive dimension and Monte-Carlo otherwise.
    importance : bool, optional
        Boundary importance sampling for the Monte-Carlo ``I``; by default
        on whenever decision errors are rare (``snr * gain > 2``).
    """
    grid = [float(s) for s in snr_grid]
    if not grid or min(grid) <= 0:
        raise ValueError("snr_grid must be nonempty and strictly positive")
    steps = [fd_step if fd_step is not None else 0.01 * s for s in grid]
    if len(grid) > 1:
        arr = np.asarray(grid)
        gaps = np.abs(arr[:, None] - arr[None, :]) + np.diag(np.full(arr.size, np.inf))
        nearest = gaps.min(axis=1)
        if np.any(nearest <= 0):
            raise ValueError("snr_grid values must be distinct")
        if np.any(np.asarray(steps) >= nearest):
            raise ValueError("fd_step must be smaller than the spacing to the nearest grid point")
    if any(h <= 0 or h >= s for h, s in zip(steps, grid)):
        raise ValueError("fd_step must be positive and smaller than every snr")
    if stats_method is None:
        stats_method = "quadrature" if sys.n_r == 1 else "mc"

    i_vals, fds, fd_se, targets, mmse_only, psis, rel, rel_m = [], [], [], [], [], [], [], []
    for idx, (snr, h) in enumerate(zip(grid, steps)):
        point_seed = _streams.derived_seed(seed, idx)
        systems = [sys.with_(snr=snr), sys.with_(snr=snr + h), sys.with_(snr=snr - h)]
        coef = np.array([[1.0, 0.0, 0.0], [0.0, 1.0 / (2 * h), -1.0 / (2 * h)]])
        (iv, ise), (fd, se) = density_contrasts(
            systems, coef, point_seed, n_samples, method=mi_method, nodes=nodes, workers=workers,
            importance=auto_importance(systems[0]) if importance is None else importance,
        )
        st: PosteriorStats = posterior_stats(
            systems[0], point_seed, n_samples, method=stats_method, nodes=nodes, workers=workers
        )
        target = st.mmse_total + st.psi_oracle
        i_vals.append(McEstimate(iv, ise, n_samples, point_seed, "nats"))
        fds.append(fd)
        fd_se.append(se)
        targets.append(target)
        mmse_only.append(st.mmse_total)
        psis.append(st.psi_oracle)
        denom = max(abs(fd), 1e-300)
        rel.append(abs(fd - target) / denom)
        rel_m.append(abs(fd - st.mmse_total) / denom)
    return ImmseReport(
        snr_grid=grid,
        i_values=i_vals,
        di_dsnr_fd=fds,
        mmse_plus_psi=targets,
        max_rel_error=max(rel),
        di_dsnr_se=fd_se,
        mmse_only=mmse_only,
        psi=psis,
        rel_errors=rel,
        rel_errors_mmse_only=rel_m,
        fd_steps=steps,
    )


# ---------------------------------------------------------------------------
# low-snr behaviour
# ---------------------------------------------------------------------------


def low_snr_expansion(sys: MacSystem) -> Tuple[float, float]:
    """First- and second-order snr coefficients of ``I`` in nats, as displayed.

    With ``B_k = A_k A_k^H`` the coefficients are ``Tr B1 + Tr B2`` and
    ``-Tr B1^2 - Tr B2^2 + Tr B1 B2 - Tr B2 B1``.  The last two terms cancel
    for every pair of matrices, so the second coefficient carries no
    interference contribution; :func:`measured_second_order` reports what
    the channel actually does.
    """
    a1, a2 = sys.a1, sys.a2
    b1 = a1 @ a1.conj().T
    b2 = a2 @ a2.conj().T
    first = float(np.real(np.trace(b1) + np.trace(b2)))
    second = float(
        np.real(-np.trace(b1 @ b1) - np.trace(b2 @ b2) + np.trace(b1 @ b2) - np.trace(b2 @ b1))
    )
    return first, second


def measured_second_order(
    sys: MacSystem,
    snrs: Sequence[float] = (1e-3, 2e-3, 4e-3),
    *,
    method: str = "quadrature",
    seed: int = 0,
    n_samples: int = 1_000_000,
    nodes: Optional[int] = None,
) -> float:
    """Least-squares snr^2 coefficient of ``I - first_order * snr`` (nats).

    A cubic term is fitted alongside so that the estimate is not biased by
    the next order.
    """
    first, _ = low_snr_expansion(sys)
    s = np.asarray(snrs, dtype=float)
    vals = np.array(
        [mutual_information(sys.with_(snr=x), seed, n_samples, method=method, nodes=nodes, unit="nats").value for x in s]
    )
    resid = vals - first * s
    design = np.stack([s ** 2, s ** 3], axis=1)
    coef, *_ = np.linalg.lstsq(design, resid, rcond=None)
    return float(coef[0])

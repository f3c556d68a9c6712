"""Precoder and power optimisation under per-user power budgets.

Both solvers are first-order fixed-point iterations driven by the
closed-form gradients of :mod:`macimmse.grad`:

* precoders: ``P_k`` is moved towards ``M_k / nu_k`` where ``M_k`` is the
  gradient with respect to ``P_k`` and ``nu_k = ||M_k||_F / sqrt(Q_k)``
  places the target on the power boundary;
* diagonal power allocation: projected gradient ascent on the per-channel
  powers, the projection onto ``{p >= 0, sum p <= Q}`` being a clamp at a
  bisected water level.

Statistics come from Monte-Carlo (``"mc"``), from Gauss-Hermite quadrature
(``"quadrature"``) or from the closed-form Gaussian-input expressions
(``"gaussian"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from macimmse import _streams
from macimmse.bayes import PosteriorStats, gaussian_mi, gaussian_stats, posterior_stats
from macimmse.constellation import Constellation, bpsk
from macimmse.grad import grad_p
from macimmse.info import McEstimate, mutual_information
from macimmse.system import MacSystem, scalar_system

__all__ = [
    "SolverOptions",
    "PrecoderSolution",
    "PowerAllocation",
    "PrecoderStructure",
    "solve_precoders",
    "structure_decompose",
    "aligned_precoder",
    "solve_power_allocation",
    "mercury_waterfilling",
    "waterfilling",
    "scalar_mmse",
    "scalar_mmse_inverse",
    "ScalarMmseCurve",
    "mmse_curve",
    "low_snr_precoder",
    "covariance_to_precoder",
]

STAT_METHODS = ("mc", "quadrature", "gaussian")


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls shared by the precoder and power solvers.

    ``samples_initial`` is the Monte-Carlo budget of the first iteration;
    it doubles every ``double_every`` iterations.  ``restarts`` adds that
    many random-unitary initial points to the deterministic one.
    """

    damping: float = 0.25
    max_iters: int = 100
    tolerance: float = 1e-3
    seed: int = 0
    samples_initial: int = 20_000
    double_every: int = 10
    restarts: int = 0
    stats_method: str = "mc"
    nodes: Optional[int] = None
    min_damping: float = 1e-3
    step: float = 0.5

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.samples_initial < 1:
            raise ValueError("samples_initial must be at least 1")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")
        if self.stats_method not in STAT_METHODS:
            raise ValueError(f"stats_method must be one of {STAT_METHODS}")

    def samples_at(self, iteration: int) -> int:
        return self.samples_initial * 2 ** (iteration // self.double_every)


def _stats(sys: MacSystem, opts: SolverOptions, iteration: int, salt: int = 0) -> PosteriorStats:
    if opts.stats_method == "gaussian":
        return gaussian_stats(sys)
    if opts.stats_method == "quadrature":
        return posterior_stats(sys, method="quadrature", nodes=opts.nodes)
    seed = _streams.derived_seed(opts.seed, 1_000_003 * salt + iteration)
    return posterior_stats(sys, seed, opts.samples_at(iteration))


def _objective(sys: MacSystem, opts: SolverOptions, iteration: int, salt: int = 0) -> McEstimate:
    if opts.stats_method == "gaussian":
        return McEstimate(gaussian_mi(sys), 0.0, 0, -1, "nats").to("bits")
    if opts.stats_method == "quadrature":
        return mutual_information(sys, method="quadrature", nodes=opts.nodes)
    seed = _streams.derived_seed(opts.seed, 2_000_003 + 1_000_003 * salt + iteration)
    return mutual_information(sys, seed, opts.samples_at(iteration))


# ---------------------------------------------------------------------------
# precoders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrecoderSolution:
    """Result of the precoder fixed point.

    ``nu1``/``nu2`` are the multipliers ``||M_k||_F / sqrt(Q_k)`` at the
    returned point; ``residual_trace`` and ``objective_trace`` (bits) follow
    the accepted iterates of the start that produced the solution.
    """

    p1: np.ndarray
    p2: np.ndarray
    nu1: float
    nu2: float
    kkt_residual: float
    iterations: int
    converged: bool
    objective: McEstimate
    residual_trace: List[float] = field(default_factory=list)
    objective_trace: List[float] = field(default_factory=list)


def _kkt(sys: MacSystem, st: PosteriorStats, q: Tuple[float, float]):
    targets, nus, res = [], [], []
    for user, budget in ((1, q[0]), (2, q[1])):
        m = grad_p(sys, user, stats=st)
        nu = float(np.linalg.norm(m)) / np.sqrt(budget)
        p = sys.p1 if user == 1 else sys.p2
        targets.append(m / nu if nu > 0 else np.array(p))
        nus.append(nu)
        res.append(float(np.linalg.norm(nu * p - m)))
    return targets, nus, max(res)


def _random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _run_fixed_point(sys: MacSystem, q, opts: SolverOptions, salt: int):
    alpha = opts.damping
    st = _stats(sys, opts, 0, salt)
    targets, nus, res = _kkt(sys, st, q)
    trace = [res]
    best = (_objective(sys, opts, 0, salt).value, sys, nus, res)
    objectives = [best[0]]
    it = 0
    converged = res <= opts.tolerance
    while not converged and it < opts.max_iters:
        it += 1
        cand = sys.with_(
            p1=(1 - alpha) * sys.p1 + alpha * targets[0],
            p2=(1 - alpha) * sys.p2 + alpha * targets[1],
        )
        # both objectives on one seed, so their difference is not swamped by noise
        cur_obj = _objective(sys, opts, it, salt)
        cand_obj = _objective(cand, opts, it, salt)
        slack = cand_obj.std_error + 1e-12 * abs(cur_obj.value)
        if cand_obj.value < cur_obj.value - slack and alpha > opts.min_damping:
            alpha = max(alpha / 2, opts.min_damping)
            continue
        alpha = min(opts.damping, 2 * alpha)
        cst = _stats(cand, opts, it, salt)
        sys = cand
        targets, nus, res = _kkt(cand, cst, q)
        trace.append(res)
        objectives.append(cand_obj.value)
        if cand_obj.value > best[0]:
            best = (cand_obj.value, sys, nus, res)
        converged = res <= opts.tolerance
    if converged:
        best = (_objective(sys, opts, it, salt).value, sys, nus, res)
    return best, it, converged, (trace, objectives)


def solve_precoders(sys: MacSystem, q1: float, q2: float, opts: Optional[SolverOptions] = None) -> PrecoderSolution:
    """Damped fixed-point iteration for precoders that maximise ``I(x1, x2; y)``.

    The iteration starts from ``sqrt(Q_k / n_t) I`` (and from
    ``opts.restarts`` random unitary rotations of it), halves the damping
    whenever a step would lower the objective, and returns the best
    objective seen over all starts.  The KKT residual is not monotone along
    the path: rotating one user away from the other raises it before the
    fixed point is reached.
    """
    if q1 <= 0 or q2 <= 0:
        raise ValueError("power budgets must be positive")
    opts = opts or SolverOptions()
    n = sys.n_t
    starts = [(np.sqrt(q1 / n) * np.eye(n), np.sqrt(q2 / n) * np.eye(n))]
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.restarts):
        starts.append((np.sqrt(q1 / n) * _random_unitary(rng, n), np.sqrt(q2 / n) * _random_unitary(rng, n)))

    results = []
    for salt, (p1, p2) in enumerate(starts):
        results.append(_run_fixed_point(sys.with_(p1=p1, p2=p2), (q1, q2), opts, salt))
    (obj, best, nus, res), iters, conv, trace = max(results, key=lambda r: r[0][0])
    unit = McEstimate(obj, 0.0, 0, -1, "bits")
    if opts.stats_method == "mc":
        unit = _objective(best, opts, iters, 0)
    return PrecoderSolution(
        p1=np.array(best.p1),
        p2=np.array(best.p2),
        nu1=nus[0],
        nu2=nus[1],
        kkt_residual=res,
        iterations=iters,
        converged=conv,
        objective=unit,
        residual_trace=trace[0],
        objective_trace=trace[1],
    )


@dataclass(frozen=True)
class PrecoderStructure:
    """``P = U diag(d) R^H`` with unitary ``U``, ``R`` and ``d`` descending."""

    u: np.ndarray
    d: np.ndarray
    r: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.u @ self.d @ self.r.conj().T


def structure_decompose(p) -> PrecoderStructure:
    """Singular value decomposition with a fixed phase convention.

    Singular values are descending; each column of ``R`` is rotated so its
    first nonzero entry is real positive, with the matching column of ``U``
    rotated by the same phase.
    """
    p = np.asarray(p, dtype=complex)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("p must be a square matrix")
    u, s, vh = np.linalg.svd(p)
    r = vh.conj().T
    scale = max(float(np.max(np.abs(r))), 1.0)
    for j in range(r.shape[1]):
        nz = np.flatnonzero(np.abs(r[:, j]) > 1e-12 * scale)
        if nz.size:
            phase = r[nz[0], j] / abs(r[nz[0], j])
            r[:, j] = r[:, j] / phase
            u[:, j] = u[:, j] / phase
    return PrecoderStructure(u, np.diag(s).astype(complex), r)


def aligned_precoder(h, powers: Sequence[float], e) -> np.ndarray:
    """Precoder ``V_H diag(sqrt(powers)) (Pi U_E)^H``.

    ``V_H`` holds the right singular vectors of ``h`` by descending singular
    value and ``U_E`` the eigenvectors of the MMSE matrix ``e``.  The
    permutation ``Pi`` orders the MMSE eigenvectors by ascending eigenvalue,
    so the best-estimated input direction is sent on the strongest mode.
    ``powers`` are assigned to the modes in descending-gain order.
    """
    h = np.asarray(h, dtype=complex)
    _, _, vh = np.linalg.svd(h)
    v = vh.conj().T
    w, ue = np.linalg.eigh(np.asarray(e, dtype=complex))
    order = np.argsort(w, kind="stable")
    r = ue[:, order]
    d = np.diag(np.sqrt(np.asarray(powers, dtype=float)))
    return v @ d @ r.conj().T


# ---------------------------------------------------------------------------
# diagonal power allocation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerAllocation:
    """Per-channel powers and normalised multipliers.

    ``gamma1``/``gamma2`` are the multipliers divided by ``snr``, so that a
    channel ``j`` with ``|h_j|^2 <= gamma`` is switched off.
    ``kkt_residual`` is in nats per unit power.
    """

    powers1: np.ndarray
    powers2: np.ndarray
    gamma1: float
    gamma2: float
    kkt_residual: float
    converged: bool = True
    iterations: int = 0
    history: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)


def project_budget(v: np.ndarray, budget: float, tol: float = 1e-13) -> Tuple[np.ndarray, float]:
    """Project onto ``{p >= 0, sum p <= budget}``; returns ``(p, level)``."""
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= budget:
        return clipped, 0.0
    lo, hi = 0.0, float(np.max(v))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    p = np.maximum(v - hi, 0.0)
    p *= budget / p.sum() if p.sum() > 0 else 0.0
    return p, hi


def _power_gradient(sys: MacSystem, st: PosteriorStats, user: int, floor: float) -> np.ndarray:
    """``dI/dp_j`` for diagonal ``P_k = diag(sqrt(p_j))``: ``Re(G_jj) / sqrt(p_j)``."""
    g = grad_p(sys, user, stats=st)
    p = np.real(np.diag(sys.p1 if user == 1 else sys.p2))
    return np.real(np.diag(g)) / np.maximum(p, np.sqrt(floor))


def _diag_system(sys: MacSystem, p1: np.ndarray, p2: np.ndarray, floor: float) -> MacSystem:
    return sys.with_(p1=np.diag(np.sqrt(np.maximum(p1, floor))), p2=np.diag(np.sqrt(np.maximum(p2, floor))))


def _kkt_power(grad: np.ndarray, p: np.ndarray, budget: float, tol: float = 1e-9):
    active = p > tol * budget
    if not np.any(active):
        return float(np.max(grad)), float(np.max(grad))
    slack = p.sum() < budget * (1 - 1e-6)
    # the multiplier of the budget constraint cannot be negative
    level = 0.0 if slack else max(float(np.mean(grad[active])), 0.0)
    viol = np.abs(grad[active] - level)
    if np.any(~active):
        viol = np.concatenate([viol, np.maximum(grad[~active] - level, 0.0)])
    return level, float(np.max(viol))


def solve_power_allocation(
    sys: MacSystem,
    budgets: Tuple[float, float],
    opts: Optional[SolverOptions] = None,
) -> PowerAllocation:
    """KKT power allocation over diagonal precoders ``P_k = diag(sqrt(p_k))``.

    Starts from the full budget spread uniformly and iterates the damped
    projected step ``p <- (1 - a) p + a Proj(p + eta dI/dp)``; inactive
    channels are clamped to zero by the projection and ``gamma`` is the
    bisected water level (zero when the budget is slack).
    """
    q1, q2 = (float(b) for b in budgets)
    if q1 <= 0 or q2 <= 0:
        raise ValueError("power budgets must be positive")
    opts = opts or SolverOptions()
    n = sys.n_t
    floor = 1e-12 * max(q1, q2)
    p1 = np.full(n, q1 / n)
    p2 = np.full(n, q2 / n)
    history = [(p1.copy(), p2.copy())]
    eta = None
    converged = False
    it = 0
    res = np.inf
    levels = (0.0, 0.0)
    for it in range(1, opts.max_iters + 1):
        cur = _diag_system(sys, p1, p2, floor)
        st = _stats(cur, opts, it)
        g1 = _power_gradient(cur, st, 1, floor)
        g2 = _power_gradient(cur, st, 2, floor)
        l1, r1 = _kkt_power(g1, p1, q1)
        l2, r2 = _kkt_power(g2, p2, q2)
        res = max(r1, r2)
        levels = (l1, l2)
        if res <= opts.tolerance:
            converged = True
            break
        if eta is None:
            eta = opts.step * min(q1, q2) / max(float(np.max(np.abs(np.concatenate([g1, g2])))), 1e-12)
        n1, _ = project_budget(p1 + eta * g1, q1)
        n2, _ = project_budget(p2 + eta * g2, q2)
        p1 = (1 - opts.damping) * p1 + opts.damping * n1
        p2 = (1 - opts.damping) * p2 + opts.damping * n2
        history.append((p1.copy(), p2.copy()))
    snr = sys.snr if sys.snr > 0 else 1.0
    return PowerAllocation(
        powers1=p1,
        powers2=p2,
        gamma1=levels[0] / snr,
        gamma2=levels[1] / snr,
        kkt_residual=res,
        converged=converged,
        iterations=it,
        history=history,
    )


# ---------------------------------------------------------------------------
# single-user parallel channels: mercury/waterfilling
# ---------------------------------------------------------------------------


def scalar_mmse(constellation: Optional[Constellation], s: float, nodes: Optional[int] = None) -> float:
    """MMSE of a unit-power scalar input at snr ``s``; ``None`` means Gaussian."""
    if constellation is None:
        return 1.0 / (1.0 + s)
    sys = scalar_system(1.0, 0.0, 1.0, 0.0, s, c1=constellation, c2=bpsk())
    return float(posterior_stats(sys, method="quadrature", nodes=nodes).e1[0, 0].real)


class ScalarMmseCurve:
    """Tabulated scalar MMSE curve with a monotone interpolant and its inverse.

    The curve is evaluated by quadrature on ``[0, s_max]`` and must be
    strictly decreasing on the table, otherwise ``ArithmeticError`` is
    raised before any inversion is attempted.
    """

    def __init__(self, constellation: Constellation, s_max: float = 40.0, points: int = 160, nodes=None):
        grid = np.concatenate([[0.0], np.geomspace(1e-4, s_max, points)])
        vals = np.array([scalar_mmse(constellation, x, nodes) for x in grid])
        if np.any(np.diff(vals) >= 0):
            raise ArithmeticError("scalar MMSE curve is not strictly decreasing")
        self.s_max = s_max
        self.grid = grid
        self.values = vals
        # log values keep the exponentially decaying tail well resolved
        logs = np.log(vals)
        self._log_fwd = PchipInterpolator(grid, logs)
        self._inv = PchipInterpolator(logs[::-1], grid[::-1])

    def _fwd(self, s):
        return np.exp(self._log_fwd(s))

    def __call__(self, s: float) -> float:
        return float(self._fwd(s))

    @property
    def floor(self) -> float:
        return float(self.values[-1])

    def inverse(self, theta: float) -> float:
        if not 0 < theta < 1:
            raise ValueError("mmse inverse is defined on (0, 1) only")
        if theta < self.floor:
            raise ArithmeticError(f"mmse stays above {theta} up to snr {self.s_max}")
        s0 = float(np.clip(self._inv(np.log(theta)), 0.0, self.s_max))
        f = lambda x: self._fwd(x) - theta  # noqa: E731
        lo, hi = max(0.0, s0 * 0.9 - 1e-9), min(self.s_max, s0 * 1.1 + 1e-9)
        if f(lo) * f(hi) > 0:
            lo, hi = 0.0, self.s_max
        return float(brentq(f, lo, hi, xtol=1e-14, rtol=1e-12))


_CURVES = {}


def mmse_curve(constellation: Constellation, nodes: Optional[int] = None) -> ScalarMmseCurve:
    key = (constellation.points.tobytes(), constellation.probs.tobytes(), nodes)
    if key not in _CURVES:
        _CURVES[key] = ScalarMmseCurve(constellation, nodes=nodes)
    return _CURVES[key]


def scalar_mmse_inverse(constellation: Optional[Constellation], theta: float, nodes: Optional[int] = None) -> float:
    """Snr ``s >= 0`` with ``mmse(s) = theta`` for ``theta`` in ``(0, 1)``."""
    if not 0 < theta < 1:
        raise ValueError("mmse inverse is defined on (0, 1) only")
    if constellation is None:
        return 1.0 / theta - 1.0
    return mmse_curve(constellation, nodes).inverse(theta)


def waterfilling(gains: Sequence[float], budget: float, snr: float) -> np.ndarray:
    """Gaussian-input waterfilling ``p_j = (mu - 1/(snr g_j))^+`` with ``sum p = budget``."""
    g = np.asarray(gains, dtype=float)
    if budget <= 0:
        raise ValueError("budget must be positive")
    floors = 1.0 / (snr * g)
    order = np.argsort(floors)
    fl = floors[order]
    p = np.zeros_like(g)
    for k in range(len(g), 0, -1):
        mu = (budget + fl[:k].sum()) / k
        if mu > fl[k - 1]:
            p[order[:k]] = mu - fl[:k]
            break
    return p


def mercury_waterfilling(
    gains: Sequence[float],
    budget: float,
    snr: float,
    constellation: Optional[Constellation] = None,
    *,
    nodes: Optional[int] = None,
    tol: float = 1e-12,
) -> PowerAllocation:
    """Mercury/waterfilling over parallel scalar channels of one user.

    ``p_j = mmse^{-1}(gamma / g_j) / (snr g_j)`` when ``gamma < g_j`` and 0
    otherwise, with ``gamma`` bisected so the budget is met.  ``g_j`` are
    power gains ``|h_j|^2``; ``constellation=None`` selects Gaussian inputs.
    The allocation is returned in ``powers1``; ``powers2`` is empty.
    """
    g = np.asarray(gains, dtype=float)
    if budget <= 0:
        raise ValueError("budget must be positive")
    if snr <= 0 or np.any(g <= 0):
        raise ValueError("snr and channel gains must be positive")
    curve = mmse_curve(constellation, nodes) if constellation is not None else None
    floor = curve.floor if curve is not None else 0.0

    def inverse(theta):
        return curve.inverse(theta) if curve is not None else 1.0 / theta - 1.0

    def alloc(gamma):
        out = np.zeros_like(g)
        for j, gj in enumerate(g):
            theta = gamma / gj
            if theta < 1:
                out[j] = inverse(theta) / (snr * gj)
        return out

    hi = float(g.max())
    lo = floor * hi * (1 + 1e-9)
    if lo > 0 and alloc(lo).sum() < budget:
        raise ArithmeticError("budget exceeds what the tabulated mmse range can allocate")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid == 0.0 or alloc(mid).sum() > budget:
            lo = mid
        else:
            hi = mid
    gamma = 0.5 * (lo + hi)
    p = alloc(gamma)
    return PowerAllocation(
        powers1=p, powers2=np.zeros(0), gamma1=gamma, gamma2=0.0, kkt_residual=abs(p.sum() - budget)
    )


# ---------------------------------------------------------------------------
# low snr
# ---------------------------------------------------------------------------


def low_snr_precoder(sys: MacSystem, q1: float, q2: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Transmit covariances ``Z_k`` proportional to the channel eigenvalues.

    ``Z_k = V_k diag(Q_k lambda / sum lambda) V_k^H`` with ``(lambda, V_k)``
    the eigen-decomposition of ``H_k^H H_k``, so ``Tr Z_k = Q_k``.
    """
    q2 = q1 if q2 is None else q2
    if q1 <= 0 or q2 <= 0:
        raise ValueError("power budgets must be positive")
    out = []
    for h, q in ((sys.h1, q1), (sys.h2, q2)):
        lam, v = np.linalg.eigh(h.conj().T @ h)
        lam = np.clip(lam, 0.0, None)
        total = lam.sum()
        share = lam / total if total > 0 else np.full(lam.size, 1.0 / lam.size)
        z = (v * (q * share)) @ v.conj().T
        out.append(0.5 * (z + z.conj().T))
    return out[0], out[1]


def covariance_to_precoder(z) -> np.ndarray:
    """Hermitian square root ``P`` with ``P P^H = Z``."""
    w, v = np.linalg.eigh(np.asarray(z, dtype=complex))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T

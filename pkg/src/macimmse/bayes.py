"""Exact posterior computation over the finite joint alphabet.

Every quantity is computed in the log domain: the channel-output density
is a Gaussian mixture whose components are the ``|C1| * |C2|`` joint input
pairs, and high-snr exponents underflow without log-sum-exp.

Expectations over ``y`` come from *sample sets*: weighted collections of
``(x1, x2, n)`` triples.  Monte-Carlo draws carry weight ``1/N``; the
Gauss-Hermite oracle enumerates every pair with a tensor grid of noise
nodes and carries the quadrature weights.  Both flow through the same
accumulation code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from macimmse import _streams
from macimmse.constellation import JointAlphabet
from macimmse.system import MacSystem, draw_raw

__all__ = [
    "PosteriorAtY",
    "PosteriorStats",
    "SampleSet",
    "auto_importance",
    "boundary_sample_set",
    "log_likelihood",
    "posterior",
    "posterior_batch",
    "posterior_stats",
    "quadrature_sets",
    "score_identity_residual",
    "score_identity_variants",
    "score_inverse_estimate",
    "wiener_filters",
    "wiener_estimates",
    "linear_mse",
]

LOG_PI = float(np.log(np.pi))


# ---------------------------------------------------------------------------
# pointwise posterior
# ---------------------------------------------------------------------------


def log_likelihood(sys: MacSystem, y, x1, x2) -> float:
    """``log p(y | x1, x2)`` in nats."""
    y = np.asarray(y, dtype=complex).ravel()
    s = np.sqrt(sys.snr)
    r = y - s * sys.a1 @ np.asarray(x1, dtype=complex).ravel() - s * sys.a2 @ np.asarray(x2, dtype=complex).ravel()
    return float(-sys.n_r * LOG_PI - np.vdot(r, r).real)


def _sqdist(y: np.ndarray, means: np.ndarray) -> np.ndarray:
    """``||y_n - mu_m||^2`` for all n, m; shape (N, M).

    Expanded as ``||y||^2 - 2 Re<y, mu> + ||mu||^2`` with the cross term as
    one real matrix product over stacked real and imaginary parts.
    """
    yr = np.concatenate([y.real, y.imag], axis=1)
    mr = np.concatenate([means.real, means.imag], axis=1)
    yy = np.einsum("nk,nk->n", yr, yr)
    mm = np.einsum("mk,mk->m", mr, mr)
    d = yr @ (-2.0 * mr.T)
    d += yy[:, None]
    d += mm[None, :]
    return np.maximum(d, 0.0, out=d)


def mixture_log_density(y: np.ndarray, means: np.ndarray, log_prior: np.ndarray):
    """Log density and posterior weights of a unit-variance complex Gaussian mixture.

    Returns ``(log_py, weights)`` with shapes (N,) and (N, M).
    """
    n_r = y.shape[1]
    logits = _sqdist(y, means)
    np.subtract(log_prior[None, :], logits, out=logits)
    top = logits.max(axis=1, keepdims=True)
    logits -= top
    e = np.exp(logits, out=logits)
    total = e.sum(axis=1, keepdims=True)
    log_py = (top + np.log(total))[:, 0] - n_r * LOG_PI
    e /= total
    return log_py, e


def _log_prior(joint: JointAlphabet) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(joint.probs)


@dataclass(frozen=True)
class PosteriorAtY:
    y: np.ndarray
    log_py: float
    xhat1: np.ndarray
    xhat2: np.ndarray
    posterior_weights: np.ndarray


def posterior_batch(sys: MacSystem, y: np.ndarray, joint: Optional[JointAlphabet] = None):
    """Vectorised posterior: ``(log_py, xhat1, xhat2, weights)`` for rows of ``y``."""
    j = joint if joint is not None else sys.joint()
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    log_py, w = mixture_log_density(y, sys.pair_means(j), _log_prior(j))
    return log_py, w @ j.x1, w @ j.x2, w


def posterior(sys: MacSystem, y) -> PosteriorAtY:
    y = np.asarray(y, dtype=complex).ravel()
    log_py, x1, x2, w = posterior_batch(sys, y[None, :])
    return PosteriorAtY(y=y, log_py=float(log_py[0]), xhat1=x1[0], xhat2=x2[0], posterior_weights=w[0])


# ---------------------------------------------------------------------------
# sample sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    """Weighted ``(x1, x2, n)`` triples; ``index*`` point into the alphabets."""

    index1: np.ndarray
    index2: np.ndarray
    noise: np.ndarray
    weight: np.ndarray


PROPOSAL_MIX = 0.8


def _boundary_shifts(sys: MacSystem) -> List[np.ndarray]:
    """Half-way displacements from each pair mean to every distinct other mean."""
    mu = sys.pair_means()
    out = []
    for k in range(mu.shape[0]):
        d = 0.5 * (mu - mu[k])
        keep = np.sum(np.abs(d) ** 2, axis=1) > 1e-24
        d = d[keep]
        out.append(np.concatenate([d, -d]) if d.size else np.zeros((0, sys.n_r), dtype=complex))
    return out


def boundary_sample_set(sys: MacSystem, seed: int, chunk: int, size: int, importance: bool = False) -> SampleSet:
    """Monte-Carlo chunk whose ``weight`` holds likelihood ratios (mean one).

    With ``importance`` the noise for a sample whose inputs form pair ``k``
    is drawn from ``(1 - b) CN(0, I) + b * mean_m CN(d_km, I)``, where the
    shifts ``d_km = +-(mu_m - mu_k) / 2`` put the noise on the decision
    boundaries.  The mixture is symmetric in ``n`` so antithetic pairs share
    one weight, the likelihood ratio to ``CN(0, I)``.
    """
    i1, i2, noise = draw_raw(sys, seed, chunk, size)
    if not importance:
        return SampleSet(i1, i2, noise, np.ones(size))
    shifts = _boundary_shifts(sys)
    pair = i1 * sys.c2.size + i2
    aux = _streams.aux_rng(seed, chunk)
    shifted = aux.random(size) < PROPOSAL_MIX
    pick = aux.random(size)
    log_ratio = np.empty(size)
    for k in np.unique(pair):
        rows = np.flatnonzero(pair == k)
        d = shifts[k]
        if d.shape[0] == 0:
            log_ratio[rows] = 0.0
            continue
        move = rows[shifted[rows]]
        choice = np.minimum((pick[move] * d.shape[0]).astype(int), d.shape[0] - 1)
        noise[move] = noise[move] + d[choice]
        n = noise[rows]
        # log q/phi for each component: 2 Re<n, d> - ||d||^2
        expo = 2.0 * (n @ d.conj().T).real - np.sum(np.abs(d) ** 2, axis=1)[None, :]
        top = expo.max(axis=1, keepdims=True)
        lse = (top + np.log(np.mean(np.exp(expo - top), axis=1, keepdims=True)))[:, 0]
        log_ratio[rows] = np.logaddexp(np.log1p(-PROPOSAL_MIX), np.log(PROPOSAL_MIX) + lse)
    return SampleSet(i1, i2, noise, np.exp(-log_ratio))


def auto_importance(sys: MacSystem) -> bool:
    """Whether boundary importance sampling pays off: decision errors are rare."""
    gain = float(np.linalg.norm(sys.a1, 2) ** 2 + np.linalg.norm(sys.a2, 2) ** 2)
    return sys.snr * gain > 2.0


MAX_NODES = 256


def default_nodes(sys: MacSystem) -> int:
    """Node count per real noise dimension for the quadrature oracle.

    Posterior means switch sign across decision boundaries over a width of
    roughly ``1 / sqrt(snr * gain)``; the scalar default starts at 64 and
    grows with ``sqrt(snr * gain)`` so the node spacing keeps resolving it.
    """
    if sys.n_r == 1:
        gain = float(np.abs(sys.a1[0, 0]) ** 2 + np.abs(sys.a2[0, 0]) ** 2) if sys.n_t == 1 else float(
            np.linalg.norm(sys.a1, 2) ** 2 + np.linalg.norm(sys.a2, 2) ** 2
        )
        return int(np.clip(np.ceil(64.0 * np.sqrt(sys.snr * gain)), 64, 256))
    return 16 if sys.n_r == 2 else 6


def quadrature_sets(sys: MacSystem, nodes: Optional[int] = None) -> SampleSet:
    """Gauss-Hermite tensor grid over the noise, enumerated for every pair.

    ``nodes`` points per real noise dimension; see :func:`default_nodes`.
    """
    n_r = sys.n_r
    if nodes is None:
        nodes = default_nodes(sys)
    if not 2 <= nodes <= MAX_NODES:
        raise ValueError(f"nodes must lie in [2, {MAX_NODES}]")
    t, w = np.polynomial.hermite.hermgauss(nodes)
    w = w / np.sqrt(np.pi)
    dims = 2 * n_r
    grids = np.meshgrid(*([t] * dims), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * dims), indexing="ij"):
        wts = wts * g.ravel()
    noise = pts[:, :n_r] + 1j * pts[:, n_r:]
    j = sys.joint()
    m = j.size
    g = noise.shape[0]
    return SampleSet(
        index1=np.repeat(j.index1, g),
        index2=np.repeat(j.index2, g),
        noise=np.tile(noise, (m, 1)),
        weight=np.repeat(j.probs, g) * np.tile(wts, m),
    )


# ---------------------------------------------------------------------------
# weighted moment accumulation
# ---------------------------------------------------------------------------


@dataclass
class _Moments:
    """Weighted mean and spread of a scalar, mergeable in a fixed order."""

    weight: float = 0.0
    mean: float = 0.0
    m2: float = 0.0
    count: int = 0

    @classmethod
    def of(cls, values: np.ndarray, weights: np.ndarray) -> "_Moments":
        wsum = float(weights.sum())
        mean = float(np.dot(weights, values) / wsum)
        m2 = float(np.dot(weights, (values - mean) ** 2))
        return cls(wsum, mean, m2, values.size)

    def merge(self, other: "_Moments") -> "_Moments":
        if self.weight == 0:
            return other
        w = self.weight + other.weight
        delta = other.mean - self.mean
        mean = self.mean + delta * other.weight / w
        m2 = self.m2 + other.m2 + delta * delta * self.weight * other.weight / w
        return _Moments(w, mean, m2, self.count + other.count)

    def std_error(self) -> float:
        """Standard error assuming equal weights (Monte-Carlo sets)."""
        if self.count < 2:
            return 0.0
        var = self.m2 / self.weight * self.count / (self.count - 1)
        return float(np.sqrt(max(var, 0.0) / self.count))


def merge_all(parts):
    out = _Moments()
    for p in parts:
        out = out.merge(p)
    return out


# ---------------------------------------------------------------------------
# posterior statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorStats:
    """MMSE matrices, cross-estimate correlation and the interference term.

    ``mmse1``/``mmse2`` are ``Tr{A_k E_k A_k^H}`` with ``A_k = H_k P_k``
    (no snr factor); ``psi_oracle`` is the real interference correction
    ``E||z - zhat||^2 - mmse1 - mmse2`` for ``z = A1 x1 + A2 x2``.
    ``psi_trace`` is the difference of the two cross traces
    ``Tr{A1 C12 A2^H} - Tr{A2 C21 A1^H}``, which is purely imaginary.
    """

    e1: np.ndarray
    e2: np.ndarray
    cross12: np.ndarray
    mmse1: float
    mmse2: float
    mmse_total: float
    psi_trace: complex
    psi_oracle: float
    psi_algebraic: float
    sample_count: int
    std_errors: Dict[str, float] = field(default_factory=dict)
    method: str = "mc"

    @property
    def cross21(self) -> np.ndarray:
        """``E[xhat2 xhat1^H]``."""
        return self.cross12.conj().T

    def cross(self, user: int) -> np.ndarray:
        """``E[xhat_l xhat_k^H]`` where ``k`` is ``user`` and ``l`` the other."""
        return self.cross21 if user == 1 else self.cross12

    def mmse_matrix(self, user: int) -> np.ndarray:
        return self.e1 if user == 1 else self.e2

    def recompute_total(self, sys: MacSystem) -> float:
        a1, a2 = sys.a1, sys.a2
        return float(
            np.real(np.trace(a1 @ self.e1 @ a1.conj().T)) + np.real(np.trace(a2 @ self.e2 @ a2.conj().T))
        )


_SCALARS = ("mmse1", "mmse2", "mmse_total", "psi_oracle", "psi_algebraic", "zmmse")


def _stats_chunk(sys: MacSystem, joint: JointAlphabet, ss: SampleSet, unbiased: bool = False):
    """Accumulate one sample set; ``unbiased`` treats weights as likelihood ratios."""
    a1, a2 = sys.a1, sys.a2
    s = np.sqrt(sys.snr)
    x1 = sys.c1.points[ss.index1]
    x2 = sys.c2.points[ss.index2]
    y = s * x1 @ a1.T + s * x2 @ a2.T + ss.noise
    _, xh1, xh2, w = posterior_batch(sys, y, joint)
    wt = ss.weight

    # Rao-Blackwellised error covariances E_y[Cov(x_k | y)], accumulated from
    # centred terms so that tiny MMSE values keep full relative precision
    def sq(v):
        return np.einsum("nk,nk->n", v.real, v.real) + np.einsum("nk,nk->n", v.imag, v.imag)

    def user_terms(points, index, xh, a):
        onehot = np.zeros((joint.size, points.shape[0]))
        onehot[np.arange(joint.size), index] = 1.0
        wk = w @ onehot
        cov = np.zeros((points.shape[1], points.shape[1]), dtype=complex)
        per_sample = np.zeros(xh.shape[0])
        for k in range(points.shape[0]):
            d = points[k][None, :] - xh
            cov += np.einsum("n,ni,nj->ij", wt * wk[:, k], d, d.conj())
            per_sample += wk[:, k] * sq(d @ a.T)
        return cov, per_sample

    cov1, m1 = user_terms(sys.c1.points, joint.index1, xh1, a1)
    cov2, m2 = user_terms(sys.c2.points, joint.index2, xh2, a2)

    # E[xh1 xh2^H] = E[x1 x2^H] - E_y[Cov(x1, x2 | y)]; the centred form has
    # no O(1) per-sample fluctuation when the posterior is nearly certain
    prior12 = np.einsum("m,mi,mj->ij", joint.probs, joint.x1, joint.x2.conj())
    post12 = np.zeros((xh1.shape[0], xh1.shape[1], xh2.shape[1]), dtype=complex)
    for m in range(joint.size):
        d1 = joint.x1[m][None, :] - xh1
        d2 = joint.x2[m][None, :] - xh2
        post12 += w[:, m, None, None] * d1[:, :, None] * d2[:, None, :].conj()
    c12s = prior12[None] - post12
    c12 = np.einsum("n,nij->ij", wt, c12s)

    # posterior cross-covariance of the two users' signal components
    cross = np.einsum("ki,nji,kj->n", a2.conj(), post12, a1).real
    mz = m1 + m2 + 2.0 * cross
    inner = np.einsum("ki,nij,kj->n", a1, c12s, a2.conj())  # Tr{A1 c12 A2^H}
    values = {
        "mmse1": m1,
        "mmse2": m2,
        "mmse_total": m1 + m2,
        "psi_oracle": 2.0 * cross,
        "psi_algebraic": -2.0 * inner.real,
        "zmmse": mz,
        "psi_trace_imag": 2.0 * inner.imag,
        # traces of c12 and of the two interference matrices H_k^H A_l C_lk
        "cross_re": np.einsum("nii->n", c12s).real,
        "interference12": np.einsum("ij,nij->n", sys.h1.conj().T @ a2, c12s.conj()).real,
        "interference21": np.einsum("kj,njk->n", sys.h2.conj().T @ a1, c12s).real,
    }
    if unbiased:
        ones = np.ones(wt.size)
        moments = {k: _Moments.of(v * wt, ones) for k, v in values.items()}
        total = float(wt.size)
    else:
        moments = {k: _Moments.of(v, wt) for k, v in values.items()}
        total = float(wt.sum())
    mats = {"cov1": cov1, "cov2": cov2, "c12": c12}
    return total, mats, moments


def _reduce_stats(parts, sample_count: int, method: str) -> PosteriorStats:
    wsum = 0.0
    mats = None
    moments = None
    for w, m, mo in parts:
        wsum += w
        if mats is None:
            mats = {k: v.copy() for k, v in m.items()}
            moments = dict(mo)
        else:
            for k in mats:
                mats[k] += m[k]
            for k in moments:
                moments[k] = moments[k].merge(mo[k])
    e1 = mats["cov1"] / wsum
    e2 = mats["cov2"] / wsum
    e1 = 0.5 * (e1 + e1.conj().T)
    e2 = 0.5 * (e2 + e2.conj().T)
    c12 = mats["c12"] / wsum
    mc = method == "mc"
    se = {k: (moments[k].std_error() if mc else 0.0) for k in moments}
    return PosteriorStats(
        e1=e1,
        e2=e2,
        cross12=c12,
        mmse1=moments["mmse1"].mean,
        mmse2=moments["mmse2"].mean,
        mmse_total=moments["mmse_total"].mean,
        psi_trace=complex(0.0, moments["psi_trace_imag"].mean),
        psi_oracle=moments["psi_oracle"].mean,
        psi_algebraic=moments["psi_algebraic"].mean,
        sample_count=sample_count,
        std_errors=se,
        method=method,
    )


def posterior_stats(
    sys: MacSystem,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    method: str = "mc",
    nodes: Optional[int] = None,
    workers: int = 1,
    importance: Optional[bool] = None,
) -> PosteriorStats:
    """Expectations over ``y`` of the posterior error and cross statistics.

    Parameters
    ----------
    method : {"mc", "quadrature"}
        ``"mc"`` draws ``n_samples`` channel uses from the seeded stream;
        ``"quadrature"`` enumerates the joint alphabet against a
        Gauss-Hermite noise grid (deterministic, standard errors zero).
    importance : bool, optional
        Boundary importance sampling for ``"mc"``; by default on when
        :func:`auto_importance` finds decision errors rare.
    """
    joint = sys.joint()
    if method == "quadrature":
        ss = quadrature_sets(sys, nodes)
        parts = []
        step = 16384
        for start in range(0, ss.weight.size, step):
            sl = slice(start, start + step)
            parts.append(_stats_chunk(sys, joint, SampleSet(ss.index1[sl], ss.index2[sl], ss.noise[sl], ss.weight[sl])))
        return _reduce_stats(parts, ss.weight.size, "quadrature")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    imp = auto_importance(sys) if importance is None else importance

    def run(chunk, start, size):
        return _stats_chunk(sys, joint, boundary_sample_set(sys, seed, chunk, size, imp), unbiased=True)

    return _reduce_stats(_streams.map_chunks(run, n_samples, workers), n_samples, "mc")


# ---------------------------------------------------------------------------
# score identity
# ---------------------------------------------------------------------------


def _mixture_score(sys: MacSystem, y: np.ndarray) -> np.ndarray:
    """``grad_y p_y / p_y`` (conjugate Wirtinger) from per-pair log-likelihoods."""
    j = sys.joint()
    s = np.sqrt(sys.snr)
    logs = []
    resid = []
    for x1, x2, p in j.pairs():
        if p <= 0:
            continue
        logs.append(np.log(p) + log_likelihood(sys, y, x1, x2))
        resid.append(y - s * sys.a1 @ x1 - s * sys.a2 @ x2)
    logs = np.array(logs)
    w = np.exp(logs - logs.max())
    w /= w.sum()
    return -(w @ np.array(resid))


def score_identity_variants(sys: MacSystem, y) -> Dict[str, float]:
    """Residual norms of three readings of the estimate/score identity.

    ``scaled_plus``   sqrt(snr) A1 xh1 + sqrt(snr) A2 xh2 - y - score
    ``scaled_minus``  sqrt(snr) A1 xh1 - sqrt(snr) A2 xh2 - y - score
    ``unscaled_plus`` A1 xh1 + A2 xh2 - y - score
    """
    y = np.asarray(y, dtype=complex).ravel()
    post = posterior(sys, y)
    score = _mixture_score(sys, y)
    s = np.sqrt(sys.snr)
    z1 = sys.a1 @ post.xhat1
    z2 = sys.a2 @ post.xhat2
    return {
        "scaled_plus": float(np.linalg.norm(s * z1 + s * z2 - y - score)),
        "scaled_minus": float(np.linalg.norm(s * z1 - s * z2 - y - score)),
        "unscaled_plus": float(np.linalg.norm(z1 + z2 - y - score)),
    }


def score_identity_residual(sys: MacSystem, y) -> float:
    return score_identity_variants(sys, y)["scaled_plus"]


def score_inverse_estimate(sys: MacSystem, y) -> np.ndarray:
    """Single-user estimate ``(sqrt(snr) H1 P1)^{-1} (y + score)``.

    Only defined when user 2 is silent and ``H1 P1`` is square and invertible.
    """
    if np.any(sys.a2 != 0):
        raise ValueError("score inversion needs a single-user system (A2 = 0)")
    a = np.sqrt(sys.snr) * sys.a1
    if a.shape[0] != a.shape[1] or np.linalg.matrix_rank(a) < a.shape[0]:
        raise ValueError("sqrt(snr) H1 P1 must be square and invertible")
    y = np.asarray(y, dtype=complex).ravel()
    return np.linalg.solve(a, y + _mixture_score(sys, y))


# ---------------------------------------------------------------------------
# linear (Wiener) estimates
# ---------------------------------------------------------------------------


def wiener_filters(sys: MacSystem) -> Tuple[np.ndarray, np.ndarray]:
    """LMMSE receive filters ``W_k = A_k^H (I + A1 A1^H + A2 A2^H)^{-1}``.

    ``A_k = sqrt(snr) H_k P_k`` so the snr scale is absorbed into the
    effective precoders.
    """
    s = np.sqrt(sys.snr)
    a1 = s * sys.a1
    a2 = s * sys.a2
    cy = sys.output_covariance()
    return np.linalg.solve(cy, a1).conj().T, np.linalg.solve(cy, a2).conj().T


def wiener_estimates(sys: MacSystem, y) -> Tuple[np.ndarray, np.ndarray]:
    w1, w2 = wiener_filters(sys)
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        return w1 @ y, w2 @ y
    return y @ w1.T, y @ w2.T


def linear_mse(sys: MacSystem, seed: int = 0, n_samples: int = 200_000):
    """Monte-Carlo ``E||x_k - W_k y||^2`` on the same stream ``posterior_stats`` uses.

    Returns ``((mse1, se1), (mse2, se2))``.
    """
    w1, w2 = wiener_filters(sys)
    s = np.sqrt(sys.snr)
    parts1, parts2 = [], []
    for chunk, _, size in _streams.chunk_bounds(n_samples):
        i1, i2, noise = draw_raw(sys, seed, chunk, size)
        x1 = sys.c1.points[i1]
        x2 = sys.c2.points[i2]
        y = s * x1 @ sys.a1.T + s * x2 @ sys.a2.T + noise
        wt = np.ones(size)
        parts1.append(_Moments.of(np.sum(np.abs(x1 - y @ w1.T) ** 2, axis=1), wt))
        parts2.append(_Moments.of(np.sum(np.abs(x2 - y @ w2.T) ** 2, axis=1), wt))
    m1, m2 = merge_all(parts1), merge_all(parts2)
    return (m1.mean, m1.std_error()), (m2.mean, m2.std_error())


# ---------------------------------------------------------------------------
# Gaussian inputs (closed form)
# ---------------------------------------------------------------------------


def gaussian_stats(sys: MacSystem) -> PosteriorStats:
    """Posterior statistics when both inputs are ``CN(0, I)``.

    With ``G = sqrt(snr) [A1, A2]`` the joint error covariance is
    ``(I + G^H G)^{-1}``; its diagonal blocks are ``E1``, ``E2`` and, since
    ``E[xh xh^H] = I - E``, the cross-estimate correlation is minus the
    off-diagonal block.  Only the alphabets' dimensions are used.
    """
    n = sys.n_t
    g = np.sqrt(sys.snr) * np.concatenate([sys.a1, sys.a2], axis=1)
    err = np.linalg.inv(np.eye(2 * n) + g.conj().T @ g)
    err = 0.5 * (err + err.conj().T)
    e1, e2 = err[:n, :n], err[n:, n:]
    c12 = -err[:n, n:]
    a1, a2 = sys.a1, sys.a2
    m1 = float(np.real(np.trace(a1 @ e1 @ a1.conj().T)))
    m2 = float(np.real(np.trace(a2 @ e2 @ a2.conj().T)))
    inner = np.trace(a1 @ c12 @ a2.conj().T)
    return PosteriorStats(
        e1=e1,
        e2=e2,
        cross12=c12,
        mmse1=m1,
        mmse2=m2,
        mmse_total=m1 + m2,
        psi_trace=complex(inner - np.conj(inner)),
        psi_oracle=float(-2.0 * inner.real),
        psi_algebraic=float(-2.0 * inner.real),
        sample_count=0,
        std_errors={},
        method="gaussian",
    )


def gaussian_mi(sys: MacSystem) -> float:
    """``log det(I + snr (A1 A1^H + A2 A2^H))`` in nats."""
    sign, logdet = np.linalg.slogdet(sys.output_covariance())
    return float(logdet)

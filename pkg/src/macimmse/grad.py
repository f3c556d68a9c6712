"""Closed-form gradients of the mutual information and a finite-difference oracle.

Gradients follow the conjugate (Wirtinger) convention ``G = dI/dM*``, so a
perturbation ``dM`` changes the mutual information by ``2 Re Tr{G^H dM}``.
The oracle recovers ``G`` entrywise from two real central differences:
``G_ij = (dI/dRe M_ij + 1j dI/dIm M_ij) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from macimmse.bayes import PosteriorStats, posterior_stats
from macimmse.info import (
    auto_importance,
    density_contrasts,
    genie_density,
    joint_density,
    whitened_system,
)
from macimmse.system import MacSystem

__all__ = [
    "GradientReport",
    "FdGradient",
    "grad_h",
    "grad_p",
    "grad_p_treat_as_noise",
    "grad_conditional",
    "grad_p_genie",
    "fd_gradient_oracle",
    "compare",
]

MATRICES = ("h1", "h2", "p1", "p2")
EPS = 1e-12


def _stats(sys, seed, n_samples, stats, method):
    if stats is not None:
        return stats
    return posterior_stats(sys, seed, n_samples, method=method)


def grad_h(
    sys: MacSystem,
    user: int,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    stats: Optional[PosteriorStats] = None,
    method: str = "mc",
) -> np.ndarray:
    """Gradient of ``I(x1, x2; y)`` with respect to ``H_k``.

    ``snr (H_k P_k E_k P_k^H - H_l P_l E[xh_l xh_k^H] P_k^H)``.  Pass
    ``stats`` to reuse one set of posterior statistics across calls.
    """
    st = _stats(sys, seed, n_samples, stats, method)
    hk, pk, hl, pl = sys.user_matrices(user)
    ek = st.mmse_matrix(user)
    c = st.cross(user)
    pkh = pk.conj().T
    return sys.snr * (hk @ pk @ ek @ pkh - hl @ pl @ c @ pkh)


def grad_p(
    sys: MacSystem,
    user: int,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    stats: Optional[PosteriorStats] = None,
    method: str = "mc",
) -> np.ndarray:
    """Gradient of ``I(x1, x2; y)`` with respect to ``P_k``.

    ``snr (H_k^H H_k P_k E_k - H_k^H H_l P_l E[xh_l xh_k^H])``.
    """
    st = _stats(sys, seed, n_samples, stats, method)
    hk, pk, hl, pl = sys.user_matrices(user)
    hkh = hk.conj().T
    return sys.snr * (hkh @ hk @ pk @ st.mmse_matrix(user) - hkh @ hl @ pl @ st.cross(user))


def grad_p_treat_as_noise(
    sys: MacSystem,
    grad_wrt: int = 1,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    stats: Optional[PosteriorStats] = None,
    method: str = "mc",
    form: str = "derived",
) -> np.ndarray:
    """Gradient with respect to ``P_k`` of ``I(x_l; y)`` when ``x_k`` is Gaussian noise.

    Here ``k = grad_wrt`` is the interferer and ``l`` the decoded user.
    With ``K = I + snr A_k A_k^H`` and ``E_l`` the MMSE matrix of ``x_l``
    in the whitened single-user model,

        -snr^2 H_k^H K^{-1} A_l E_l A_l^H K^{-1} A_k.

    ``form="printed"`` returns the alternative expression
    ``A_l E_l A_l^H H_k^H H_k P_k (P_k^H H_k^H H_k P_k + I)^{-1}``, defined
    only for square channels; it is kept for comparison and does not match
    finite differences.

    ``stats`` must come from :func:`macimmse.info.whitened_system` of the
    decoded user when supplied.
    """
    if grad_wrt not in (1, 2):
        raise ValueError("grad_wrt must be 1 or 2")
    decoded = 2 if grad_wrt == 1 else 1
    hk, pk, hl, pl = sys.user_matrices(grad_wrt)
    ak, al = hk @ pk, hl @ pl
    if stats is None:
        stats = posterior_stats(whitened_system(sys, decoded), seed, n_samples, method=method)
    el = stats.mmse_matrix(decoded)
    if form == "printed":
        if sys.n_r != sys.n_t:
            raise ValueError("the printed form needs n_r == n_t")
        inner = pk.conj().T @ hk.conj().T @ hk @ pk + np.eye(sys.n_t)
        return al @ el @ al.conj().T @ hk.conj().T @ hk @ pk @ np.linalg.inv(inner)
    if form != "derived":
        raise ValueError("form must be 'derived' or 'printed'")
    k = np.eye(sys.n_r) + sys.snr * ak @ ak.conj().T
    kinv_al = np.linalg.solve(k, al)
    kinv_ak = np.linalg.solve(k, ak)
    return -(sys.snr ** 2) * hk.conj().T @ kinv_al @ el @ al.conj().T @ kinv_ak


def grad_conditional(
    sys: MacSystem,
    user: int = 1,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    stats: Optional[PosteriorStats] = None,
    tan_stats: Optional[PosteriorStats] = None,
    method: str = "mc",
) -> np.ndarray:
    """Joint gradient minus the treat-as-noise gradient, both for ``P_user``.

    By construction ``grad_conditional + grad_p_treat_as_noise == grad_p``.
    This is the gradient of ``I(x1,x2;y) - I_G(x_l;y)`` where ``I_G`` models
    ``x_user`` as Gaussian; for discrete inputs it differs from the gradient
    of the genie quantity ``I(x_user; y | x_l)``, see :func:`grad_p_genie`.
    """
    g = grad_p(sys, user, seed, n_samples, stats=stats, method=method)
    return g - grad_p_treat_as_noise(sys, user, seed, n_samples, stats=tan_stats, method=method)


def grad_p_genie(
    sys: MacSystem,
    user: int = 1,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    method: str = "mc",
) -> np.ndarray:
    """Gradient with respect to ``P_k`` of ``I(x_k; y | x_l)``.

    With ``x_l`` known and subtracted the channel is single-user, so the
    gradient is ``snr H_k^H H_k P_k E_k`` with ``E_k`` from that channel.
    """
    hk, pk, hl, pl = sys.user_matrices(user)
    if user == 1:
        alone = sys.with_(p2=np.zeros_like(sys.p2))
    else:
        alone = sys.with_(p1=np.zeros_like(sys.p1))
    st = posterior_stats(alone, seed, n_samples, method=method)
    return sys.snr * hk.conj().T @ hk @ pk @ st.mmse_matrix(user)


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdGradient:
    """Finite-difference gradient; ``std_error`` holds real and imaginary error bars."""

    gradient: np.ndarray
    std_error: np.ndarray
    step: float


Functional = Union[str, Callable[[MacSystem], float]]


def _perturbed(sys: MacSystem, wrt: str, step: float):
    base = np.array(getattr(sys, wrt))
    out = []
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            for delta in (step, 1j * step):
                for sign in (1.0, -1.0):
                    m = base.copy()
                    m[i, j] += sign * delta
                    out.append(sys.with_(**{wrt: m}))
    return out


def fd_gradient_oracle(
    sys: MacSystem,
    wrt: str,
    step: Optional[float] = None,
    seed: int = 0,
    n_samples: int = 200_000,
    *,
    functional: Functional = "joint",
    method: str = "mc",
    nodes: Optional[int] = None,
    importance: Optional[bool] = None,
    workers: int = 1,
) -> FdGradient:
    """Central-difference gradient of a functional of the system.

    Parameters
    ----------
    wrt : {"h1", "h2", "p1", "p2"}
        Matrix to differentiate.
    step : float, optional
        Perturbation of each real coordinate; default ``1e-3 (1 + ||M||_F)``.
    functional : str or callable
        ``"joint"`` for ``I(x1, x2; y)``, ``"tan1"``/``"tan2"`` for the
        treat-as-noise ``I(x_d; y)`` of decoded user ``d``, ``"genie1"``/
        ``"genie2"`` for ``I(x_k; y | x_given)`` with the given user named,
        or a deterministic callable ``f(sys) -> float``.  Stochastic
        functionals use one common sample set for every perturbation.
    """
    if wrt not in MATRICES:
        raise ValueError(f"wrt must be one of {MATRICES}")
    base = np.asarray(getattr(sys, wrt))
    if step is None:
        step = 1e-3 * (1.0 + float(np.linalg.norm(base)))
    if step <= 0:
        raise ValueError("step must be positive")
    systems = _perturbed(sys, wrt, step)
    n_coord = len(systems) // 2
    coef = np.zeros((n_coord, len(systems)))
    for c in range(n_coord):
        coef[c, 2 * c] = 1.0 / (2 * step)
        coef[c, 2 * c + 1] = -1.0 / (2 * step)

    if callable(functional):
        vals = np.array([functional(s) for s in systems])
        partial = coef @ vals
        se = np.zeros(n_coord)
    else:
        density, mapped = _functional(functional)
        evaluated = [mapped(s) for s in systems]
        imp = auto_importance(mapped(sys)) if importance is None else importance
        res = density_contrasts(
            evaluated, coef, seed, n_samples,
            density=density, method=method, nodes=nodes, importance=imp, workers=workers,
        )
        partial = np.array([r[0] for r in res])
        se = np.array([r[1] for r in res])

    shape = base.shape
    re = partial[0::2].reshape(shape)
    im = partial[1::2].reshape(shape)
    se_re = se[0::2].reshape(shape)
    se_im = se[1::2].reshape(shape)
    return FdGradient(0.5 * (re + 1j * im), 0.5 * (se_re + 1j * se_im), step)


def _functional(name: str):
    if name == "joint":
        return joint_density, lambda s: s
    if name in ("tan1", "tan2"):
        decoded = int(name[-1])
        return joint_density, lambda s: whitened_system(s, decoded)
    if name in ("genie1", "genie2"):
        given = int(name[-1])
        return (lambda s, ss: genie_density(s, ss, given)), lambda s: s
    raise ValueError(f"unknown functional {name!r}")


@dataclass(frozen=True)
class GradientReport:
    """Analytic against numeric gradient.

    ``convention_scale`` is the real factor ``c`` minimising
    ``||c * analytic - numeric||_F``; it is 1 when both sides use the same
    complex-gradient convention.
    """

    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: float
    convention_scale: float
    numeric_se: Optional[np.ndarray] = None


def compare(analytic: np.ndarray, numeric, numeric_se=None) -> GradientReport:
    if isinstance(numeric, FdGradient):
        numeric_se = numeric.std_error if numeric_se is None else numeric_se
        numeric = numeric.gradient
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    rel = float(np.linalg.norm(a - n) / max(np.linalg.norm(n), EPS))
    denom = float(np.vdot(a, a).real)
    scale = float(np.vdot(a, n).real / denom) if denom > 0 else float("nan")
    return GradientReport(a, n, rel, scale, numeric_se)

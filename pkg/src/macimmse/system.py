"""Deterministic two-user vector MAC and channel-output synthesis.

The received vector is

    y = sqrt(snr) H1 P1 x1 + sqrt(snr) H2 P2 x2 + n,   n ~ CN(0, I),

with unit total variance per complex noise component.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from macimmse import _streams
from macimmse.constellation import Constellation, JointAlphabet, bpsk, product

__all__ = ["MacSystem", "ChannelSample", "PowerReport", "synthesize", "power_check", "scalar_system"]


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=complex))
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    m = m.copy()
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class MacSystem:
    """Channels, precoders, snr and input alphabets of the two-user MAC."""

    h1: np.ndarray
    h2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    snr: float
    c1: Constellation
    c2: Constellation

    def __post_init__(self):
        for name in ("h1", "h2", "p1", "p2"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        object.__setattr__(self, "snr", float(self.snr))
        n_r, n_t = self.h1.shape
        if self.h2.shape != (n_r, n_t):
            raise ValueError(f"h2 has shape {self.h2.shape}, expected {(n_r, n_t)}")
        for name in ("p1", "p2"):
            if getattr(self, name).shape != (n_t, n_t):
                raise ValueError(f"{name} must be {n_t}x{n_t}")
        if self.c1.dim != n_t or self.c2.dim != n_t:
            raise ValueError("constellation dimension must equal n_t")
        if not np.isfinite(self.snr) or self.snr < 0:
            raise ValueError("snr must be a nonnegative number")

    @property
    def n_r(self) -> int:
        return self.h1.shape[0]

    @property
    def n_t(self) -> int:
        return self.h1.shape[1]

    @property
    def a1(self) -> np.ndarray:
        """Effective user-1 matrix ``H1 P1`` (without the snr scale)."""
        return self.h1 @ self.p1

    @property
    def a2(self) -> np.ndarray:
        return self.h2 @ self.p2

    def joint(self) -> JointAlphabet:
        return product(self.c1, self.c2)

    def pair_means(self, joint: Optional[JointAlphabet] = None) -> np.ndarray:
        """Noise-free outputs for every joint alphabet pair, shape (M, n_r)."""
        j = joint if joint is not None else self.joint()
        s = np.sqrt(self.snr)
        return s * (j.x1 @ self.a1.T + j.x2 @ self.a2.T)

    def with_(self, **changes) -> "MacSystem":
        return replace(self, **changes)

    def user_matrices(self, user: int):
        """``(H_k, P_k, H_l, P_l)`` for user ``k`` and the other user ``l``."""
        if user == 1:
            return self.h1, self.p1, self.h2, self.p2
        if user == 2:
            return self.h2, self.p2, self.h1, self.p1
        raise ValueError("user must be 1 or 2")

    def output_covariance(self) -> np.ndarray:
        """``E[y y^H] = I + snr (A1 A1^H + A2 A2^H)`` for unit-covariance inputs."""
        return np.eye(self.n_r) + self.snr * (self.a1 @ self.a1.conj().T + self.a2 @ self.a2.conj().T)


def scalar_system(h1=1.0, h2=1.0, p1=1.0, p2=1.0, snr=1.0, c1=None, c2=None) -> MacSystem:
    """Convenience constructor for ``n_r = n_t = 1``; ``p`` values are amplitudes."""
    return MacSystem(
        h1=[[h1]], h2=[[h2]], p1=[[p1]], p2=[[p2]], snr=snr,
        c1=c1 if c1 is not None else bpsk(),
        c2=c2 if c2 is not None else bpsk(),
    )


@dataclass(frozen=True)
class ChannelSample:
    """A batch of channel uses; each array has one row per sample."""

    x1: np.ndarray
    x2: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    index1: np.ndarray
    index2: np.ndarray

    def reconstruct(self, sys: MacSystem) -> np.ndarray:
        s = np.sqrt(sys.snr)
        return s * self.x1 @ sys.a1.T + s * self.x2 @ sys.a2.T + self.noise


def draw_raw(sys: MacSystem, seed: int, chunk: int, size: int):
    """Input indices and noise for one chunk; independent of H, P and snr."""
    rng = _streams.chunk_rng(seed, chunk)
    i1 = sys.c1.sample_indices(rng, size)
    i2 = sys.c2.sample_indices(rng, size)
    noise = (rng.standard_normal((size, sys.n_r)) + 1j * rng.standard_normal((size, sys.n_r))) / np.sqrt(2.0)
    return i1, i2, noise


def sample_chunk(sys: MacSystem, seed: int, chunk: int, size: int) -> ChannelSample:
    i1, i2, noise = draw_raw(sys, seed, chunk, size)
    x1 = sys.c1.points[i1]
    x2 = sys.c2.points[i2]
    s = np.sqrt(sys.snr)
    y = s * x1 @ sys.a1.T + s * x2 @ sys.a2.T + noise
    return ChannelSample(x1=x1, x2=x2, noise=noise, y=y, index1=i1, index2=i2)


def synthesize(sys: MacSystem, rng_seed: int, count: int) -> Iterator[ChannelSample]:
    """Yield channel samples in chunk order; the stream is fixed by the seed."""
    if count < 1:
        raise ValueError("count must be at least 1")
    for c, _, size in _streams.chunk_bounds(count):
        yield sample_chunk(sys, rng_seed, c, size)


@dataclass(frozen=True)
class PowerReport:
    trace1: float
    trace2: float
    feasible1: bool
    feasible2: bool

    @property
    def feasible(self) -> bool:
        return self.feasible1 and self.feasible2


def power_check(sys: MacSystem, q1: float, q2: float, tol: float = 1e-12) -> PowerReport:
    """Transmit powers ``Tr{P P^H}`` against the per-user budgets."""
    if q1 <= 0 or q2 <= 0:
        raise ValueError("power budgets must be positive")
    t1 = float(np.real(np.trace(sys.p1 @ sys.p1.conj().T)))
    t2 = float(np.real(np.trace(sys.p2 @ sys.p2.conj().T)))
    return PowerReport(t1, t2, t1 <= q1 * (1 + tol), t2 <= q2 * (1 + tol))

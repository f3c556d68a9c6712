"""Finite complex input alphabets and their joint product law.

A :class:`Constellation` holds ``K`` points of dimension ``n_t`` with their
probabilities.  Every constellation is checked on construction to be a
valid zero-mean, unit-covariance input law, which is what the channel model
assumes for both users.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Constellation",
    "JointAlphabet",
    "bpsk",
    "qam",
    "product",
    "cartesian_power",
    "by_name",
]

PROB_TOL = 1e-12
MEAN_TOL = 1e-12
COV_TOL = 1e-9


@dataclass(frozen=True)
class Constellation:
    """Finite input alphabet.

    Parameters
    ----------
    points : array_like, shape (K, n_t) or (K,)
        Complex alphabet points.  A 1-D array is read as scalar points.
    probs : array_like, shape (K,)
        Point probabilities.
    name : str
        Label used in reports and config files.
    """

    points: np.ndarray
    probs: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.ndim == 1:
            pts = pts[:, None]
        probs = np.asarray(self.probs, dtype=float)
        if pts.ndim != 2 or probs.shape != (pts.shape[0],):
            raise ValueError("points must be (K, n_t) and probs (K,)")
        pts.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", probs)
        self._validate()

    def _validate(self):
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")
        if np.max(np.abs(self.mean())) > MEAN_TOL:
            raise ValueError("constellation is not zero mean")
        if np.max(np.abs(self.covariance() - np.eye(self.dim))) > COV_TOL:
            raise ValueError("constellation does not have identity covariance")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def covariance(self) -> np.ndarray:
        """Second moment ``E[x x^H]``."""
        return np.einsum("k,ki,kj->ij", self.probs, self.points, self.points.conj())

    def pseudo_covariance(self) -> np.ndarray:
        """``E[x x^T]``; zero for proper (circular) alphabets."""
        return np.einsum("k,ki,kj->ij", self.probs, self.points, self.points)

    def entropy(self) -> float:
        """Entropy in bits."""
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log2(p)))

    def sample_indices(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` point indices by inverse-CDF sampling."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(count), side="right")


@dataclass(frozen=True)
class JointAlphabet:
    """All ``(x1, x2)`` pairs of two independent inputs.

    Pairs are ordered lexicographically by ``(i1, i2)``.
    """

    x1: np.ndarray
    x2: np.ndarray
    probs: np.ndarray
    index1: np.ndarray
    index2: np.ndarray
    marginal1: np.ndarray = field(repr=False)
    marginal2: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def pairs(self):
        """Yield ``(x1, x2, prob)`` tuples."""
        for a, b, p in zip(self.x1, self.x2, self.probs):
            yield a, b, float(p)

    def marginalize(self, user: int) -> np.ndarray:
        """Sum the joint law over the other user's index."""
        idx, n = (self.index1, len(self.marginal1)) if user == 1 else (self.index2, len(self.marginal2))
        return np.bincount(idx, weights=self.probs, minlength=n)


def bpsk() -> Constellation:
    return Constellation(np.array([1.0, -1.0]), np.array([0.5, 0.5]), name="bpsk")


def _gray_inverse(g: np.ndarray) -> np.ndarray:
    n = g.copy()
    shift = g >> 1
    while np.any(shift):
        n ^= shift
        shift >>= 1
    return n


def qam(m: int) -> Constellation:
    """Square Gray-labelled QAM with unit average energy.

    Point ``k`` carries the label ``k``: its high bits select the in-phase
    level and its low bits the quadrature level, each Gray coded.
    """
    m = int(m)
    side = int(round(np.sqrt(max(m, 0))))
    if m < 4 or side * side != m or side & (side - 1):
        raise ValueError(f"QAM order must be a square power of two (4, 16, 64, ...), got {m}")
    bits = side.bit_length() - 1
    labels = np.arange(m)
    i_pos = _gray_inverse(labels >> bits)
    q_pos = _gray_inverse(labels & (side - 1))
    levels = 2.0 * np.arange(side) - (side - 1)
    pts = levels[i_pos] + 1j * levels[q_pos]
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    name = "qpsk" if m == 4 else f"qam{m}"
    return Constellation(pts, np.full(m, 1.0 / m), name=name)


def cartesian_power(c: Constellation, n: int) -> Constellation:
    """``n`` i.i.d. copies of a scalar alphabet stacked into one vector input."""
    if c.dim != 1:
        raise ValueError("cartesian_power expects a scalar constellation")
    if n == 1:
        return c
    idx = np.array(list(itertools.product(range(c.size), repeat=n)))
    pts = c.points[idx, 0]
    probs = np.prod(c.probs[idx], axis=1)
    probs = probs / probs.sum()
    return Constellation(pts, probs, name=f"{c.name}^{n}")


def product(c1: Constellation, c2: Constellation) -> JointAlphabet:
    i1, i2 = np.meshgrid(np.arange(c1.size), np.arange(c2.size), indexing="ij")
    i1 = i1.ravel()
    i2 = i2.ravel()
    return JointAlphabet(
        x1=c1.points[i1],
        x2=c2.points[i2],
        probs=c1.probs[i1] * c2.probs[i2],
        index1=i1,
        index2=i2,
        marginal1=c1.probs,
        marginal2=c2.probs,
    )


_NAMED = {
    "bpsk": bpsk,
    "qpsk": lambda: qam(4),
    "qam4": lambda: qam(4),
    "qam16": lambda: qam(16),
    "qam64": lambda: qam(64),
}


def by_name(name: str, dim: int = 1) -> Constellation:
    """Look up a scalar constellation by id and lift it to ``dim`` dimensions."""
    key = name.strip().lower()
    if key not in _NAMED:
        raise ValueError(f"unknown constellation {name!r}; choose from {sorted(_NAMED)}")
    return cartesian_power(_NAMED[key](), dim)

"""Element-wise losses, proportion penalties and the total classification loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .patterns import CDMError, DimensionError, check_assignment

CE_EPS = 1e-10
# stands in for -log(0): keeps the criterion finite and comparable
PENALTY_SENTINEL = 1e18


class LossKind(str, Enum):
    L1 = "l1"
    L2 = "l2"
    CE = "ce"


@dataclass(frozen=True)
class Penalty:
    """Proportion regulariser h(pi).

    ``kind`` is ``"none"`` (h = 0) or ``"neglog"`` (h = -scale * log pi).
    """

    kind: str = "none"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "neglog"):
            raise CDMError(f"unknown penalty {self.kind!r}")
        if not self.scale > 0:
            raise CDMError("penalty scale must be positive")

    @classmethod
    def none(cls) -> Penalty:
        return cls("none")

    @classmethod
    def neglog(cls, scale: float = 1.0) -> Penalty:
        return cls("neglog", scale)

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def __call__(self, pi: float) -> float:
        if self.kind == "none":
            return 0.0
        if pi <= 0.0:
            return PENALTY_SENTINEL
        return -self.scale * math.log(pi)

    def values(self, pi: ArrayLike) -> NDArray[np.float64]:
        p = np.asarray(pi, dtype=np.float64)
        if self.kind == "none":
            return np.zeros_like(p)
        out = np.full_like(p, PENALTY_SENTINEL)
        pos = p > 0
        out[pos] = -self.scale * np.log(p[pos])
        return out


NO_PENALTY = Penalty.none()


def clamp(mu):
    return np.clip(mu, CE_EPS, 1.0 - CE_EPS)


def item_loss(x: int, mu: float, kind: LossKind | str) -> float:
    kind = LossKind(kind)
    if kind is LossKind.L1:
        return abs(x - mu)
    if kind is LossKind.L2:
        return (x - mu) ** 2
    m = min(max(mu, CE_EPS), 1.0 - CE_EPS)
    return -math.log(m) if x == 1 else -math.log(1.0 - m)


def loss_tables(mu: ArrayLike, kind: LossKind | str) -> tuple[NDArray, NDArray]:
    """Per-cell losses for a 0 response and a 1 response: ``(l(0, mu), l(1, mu))``."""
    kind = LossKind(kind)
    mu = np.asarray(mu, dtype=np.float64)
    if kind is LossKind.L1:
        return np.ascontiguousarray(np.abs(mu)), np.ascontiguousarray(np.abs(1.0 - mu))
    if kind is LossKind.L2:
        return np.ascontiguousarray(mu * mu), np.ascontiguousarray((1.0 - mu) ** 2)
    m = clamp(mu)
    return np.ascontiguousarray(-np.log(1.0 - m)), np.ascontiguousarray(-np.log(m))


def pattern_loss(x: ArrayLike, mu: ArrayLike, pi: float, kind, penalty: Penalty = NO_PENALTY) -> float:
    x = np.asarray(x)
    mu = np.asarray(mu, dtype=np.float64)
    if x.shape != mu.shape:
        raise DimensionError("response row and centroid row differ in length")
    acc = 0.0
    for xj, mj in zip(x.tolist(), mu.tolist()):
        acc += item_loss(xj, mj, kind)
    return acc + penalty(pi)


def _check_tables(X, a, mu, pi):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.uint8))
    mu = np.asarray(mu, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[1] != X.shape[1]:
        raise DimensionError("centroid table must be (2^K, J)")
    if pi.shape != (mu.shape[0],):
        raise DimensionError("one proportion per pattern is required")
    K = int(np.log2(mu.shape[0]))
    a = check_assignment(a, K)
    if a.shape[0] != X.shape[0]:
        raise DimensionError("assignment length differs from number of subjects")
    return X, a, mu, pi


def subject_losses(X, a, mu, pi, kind, penalty: Penalty = NO_PENALTY) -> NDArray[np.float64]:
    """l(x_i, mu_{a_i}) + h(pi_{a_i}) for every subject."""
    X, a, mu, pi = _check_tables(X, a, mu, pi)
    c0, c1 = loss_tables(mu, kind)
    return _kernels.row_losses(X, c0, c1, penalty.values(pi), a)


def total_loss(X, a, mu, pi, kind, penalty: Penalty = NO_PENALTY) -> float:
    """Sum of per-subject losses in subject order."""
    return _kernels.seq_sum(subject_losses(X, a, mu, pi, kind, penalty))


def loss_matrix(X, mu, pi, kind, penalty: Penalty = NO_PENALTY) -> NDArray[np.float64]:
    """(N, 2^K) matrix of l(x_i, mu_alpha) + h(pi_alpha)."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.uint8))
    c0, c1 = loss_tables(mu, kind)
    return _kernels.loss_matrix(X, c0, c1, penalty.values(pi))


def expected_item_loss(theta: float, mu: float, kind) -> float:
    """E[l(x, mu)] for x ~ Bernoulli(theta)."""
    return theta * item_loss(1, mu, kind) + (1.0 - theta) * item_loss(0, mu, kind)


def bernoulli_kl(p: float, q: float) -> float:
    """KL(Bernoulli(p) || Bernoulli(q)) with 0 log 0 = 0."""
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return out

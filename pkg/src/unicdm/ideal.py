"""Ideal responses, item response probabilities and GNPC centroid constraints."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .patterns import (
    CDMError,
    DimensionError,
    EquivalenceClasses,
    ModelKind,
    _as_bits,
    _readonly,
    all_patterns,
    as_qmatrix,
)


class InvalidParameterError(CDMError):
    pass


def ideal_dina(q: ArrayLike, alpha: ArrayLike) -> int:
    a, b = _as_bits(alpha), _as_bits(q)
    if a.size != b.size:
        raise DimensionError("pattern and q-row lengths differ")
    return int(np.prod(np.where(b == 1, a, 1)))


def ideal_dino(q: ArrayLike, alpha: ArrayLike) -> int:
    a, b = _as_bits(alpha), _as_bits(q)
    if a.size != b.size:
        raise DimensionError("pattern and q-row lengths differ")
    return int(1 - np.prod(np.where(b == 1, 1 - a, 1)))


def ideal_table(Q, model: ModelKind | str = ModelKind.DINA) -> NDArray[np.uint8]:
    """(2^K, J) table of ideal responses for every pattern and item."""
    Q = as_qmatrix(Q)
    model = ModelKind(model)
    pats = all_patterns(Q.K).astype(np.int64)
    q = Q.entries.astype(np.int64)
    hits = pats @ q.T  # number of required attributes mastered
    if model is ModelKind.DINA:
        return (hits == q.sum(axis=1)[None, :]).astype(np.uint8)
    if model is ModelKind.DINO:
        return (hits > 0).astype(np.uint8)
    raise CDMError("ideal responses are defined for DINA and DINO only")


@dataclass(frozen=True)
class DinaItemParams:
    slip: NDArray[np.float64]
    guess: NDArray[np.float64]

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.slip, dtype=np.float64))
        g = np.atleast_1d(np.asarray(self.guess, dtype=np.float64))
        s, g = np.broadcast_arrays(s, g)
        if np.any((s < 0) | (s > 1) | (g < 0) | (g > 1)):
            raise InvalidParameterError("slip and guess must lie in [0, 1]")
        object.__setattr__(self, "slip", _readonly(s.copy()))
        object.__setattr__(self, "guess", _readonly(g.copy()))

    @classmethod
    def constant(cls, J: int, s: float, g: float) -> DinaItemParams:
        return cls(np.full(J, s), np.full(J, g))


def dina_theta(params: DinaItemParams, eta, j: int = 0) -> float:
    """Positive-response probability of item j given its ideal response."""
    return float(1.0 - params.slip[j]) if int(eta) == 1 else float(params.guess[j])


def theta_from_ideal(ideal: NDArray, params: DinaItemParams) -> NDArray[np.float64]:
    """(2^K, J) DINA/DINO probabilities from an ideal-response table."""
    s = np.broadcast_to(params.slip, (ideal.shape[1],))
    g = np.broadcast_to(params.guess, (ideal.shape[1],))
    return np.where(ideal == 1, 1.0 - s[None, :], g[None, :])


def _subset_masks(n: int) -> NDArray[np.int64]:
    return np.arange(1 << n, dtype=np.int64)


def mobius_to_beta(probs: ArrayLike) -> NDArray[np.float64]:
    """Convert sub-pattern probabilities to identity-link GDINA coefficients.

    Entry S of the result (S a bitmask over the required attributes) is
    ``sum over T subset of S of (-1)^{|S|-|T|} P(T)``.
    """
    p = np.asarray(probs, dtype=np.float64)
    n = int(np.log2(p.size))
    if 1 << n != p.size:
        raise InvalidParameterError("probability vector length must be a power of two")
    beta = p.copy()
    for k in range(n):
        bit = 1 << k
        for S in range(p.size):
            if S & bit:
                beta[S] -= beta[S ^ bit]
    return beta


def beta_to_probs(beta: ArrayLike) -> NDArray[np.float64]:
    b = np.asarray(beta, dtype=np.float64)
    masks = _subset_masks(int(np.log2(b.size)))
    return np.array([b[(masks & S) == masks].sum() for S in masks])


@dataclass(frozen=True)
class GdinaItemParams:
    """Per-item probabilities over sub-patterns of the required attributes.

    ``probs[j]`` has ``2^{K_j}`` entries ordered by sub-pattern index, where the
    first required attribute is the least-significant bit.
    """

    probs: tuple[NDArray[np.float64], ...]

    def __post_init__(self):
        cleaned = []
        for j, p in enumerate(self.probs):
            arr = np.asarray(p, dtype=np.float64)
            n = int(np.log2(max(arr.size, 1)))
            if arr.ndim != 1 or 1 << n != arr.size:
                raise InvalidParameterError(f"item {j}: need 2^K_j probabilities")
            if np.any((arr < 0) | (arr > 1)):
                raise InvalidParameterError(f"item {j}: probabilities outside [0, 1]")
            cleaned.append(_readonly(arr.copy()))
        object.__setattr__(self, "probs", tuple(cleaned))

    def beta(self, j: int) -> NDArray[np.float64]:
        return mobius_to_beta(self.probs[j])


def gdina_theta_beta(beta: ArrayLike, alpha_sub: ArrayLike) -> float:
    """Identity-link GDINA probability from coefficients and the restricted pattern."""
    b = np.asarray(beta, dtype=np.float64)
    sub = _as_bits(alpha_sub)
    if 1 << sub.size != b.size:
        raise DimensionError("coefficient count does not match required attributes")
    have = int(sum(int(v) << k for k, v in enumerate(sub)))
    masks = _subset_masks(sub.size)
    theta = float(b[(masks & have) == masks].sum())
    if not -1e-12 <= theta <= 1 + 1e-12:
        raise InvalidParameterError(f"implied probability {theta} outside [0, 1]")
    return min(max(theta, 0.0), 1.0)


def gdina_theta(params: GdinaItemParams, Q, j: int, alpha: ArrayLike) -> float:
    Q = as_qmatrix(Q)
    a = _as_bits(alpha)
    if a.size != Q.K:
        raise DimensionError("pattern length differs from K")
    return gdina_theta_beta(params.beta(j), a[Q.required(j)])


def gdina_theta_table(params: GdinaItemParams, Q) -> NDArray[np.float64]:
    """(2^K, J) GDINA probabilities."""
    Q = as_qmatrix(Q)
    if len(params.probs) != Q.J:
        raise DimensionError("one probability vector per item is required")
    pats = all_patterns(Q.K).astype(np.int64)
    out = np.empty((pats.shape[0], Q.J))
    for j in range(Q.J):
        req = Q.required(j)
        if params.probs[j].size != 1 << req.size:
            raise DimensionError(f"item {j} requires {req.size} attributes")
        sub_idx = pats[:, req] @ (1 << np.arange(req.size, dtype=np.int64))
        out[:, j] = params.probs[j][sub_idx]
    return out


# Item probability tables for GDINA data: one row per item type, P(alpha_1..)
GDINA_TABLE_SMALL: tuple[tuple[float, ...], ...] = (
    (0.2, 0.9),
    (0.1, 0.8),
    (0.1, 0.9),
    (0.2, 0.5, 0.4, 0.9),
    (0.1, 0.3, 0.5, 0.9),
    (0.1, 0.2, 0.6, 0.8),
    (0.1, 0.2, 0.3, 0.4, 0.4, 0.5, 0.7, 0.9),
)

GDINA_TABLE_LARGE: tuple[tuple[float, ...], ...] = (
    (0.3, 0.7),
    (0.3, 0.8),
    (0.3, 0.4, 0.7, 0.8),
    (0.3, 0.4, 0.6, 0.7),
    (0.2, 0.3, 0.6, 0.7),
    (0.2, 0.3, 0.3, 0.4, 0.4, 0.5, 0.6, 0.7),
)

GDINA_TABLES = {"small": GDINA_TABLE_SMALL, "large": GDINA_TABLE_LARGE}


def read_gdina_table(path: str | Path) -> tuple[tuple[float, ...], ...]:
    """Parse a GDINA parameter table: one row of 2^n probabilities per line."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            vals = [c.strip() for c in row if c.strip()]
            if not vals:
                continue
            try:
                probs = tuple(float(v) for v in vals)
            except ValueError as exc:
                raise CDMError(f"{path}:{lineno}: non-numeric entry") from exc
            n = len(probs)
            if n < 2 or n & (n - 1):
                raise CDMError(f"{path}:{lineno}: row length must be a power of two")
            if any(not 0 <= p <= 1 for p in probs):
                raise CDMError(f"{path}:{lineno}: probabilities outside [0, 1]")
            rows.append(probs)
    if not rows:
        raise CDMError(f"{path}: empty table")
    return tuple(rows)


def gdina_params_from_table(Q, table) -> GdinaItemParams:
    """Assign table rows to items by required-attribute count, cycling in item order."""
    Q = as_qmatrix(Q)
    by_size: dict[int, list[tuple[float, ...]]] = {}
    for row in table:
        by_size.setdefault(int(np.log2(len(row))), []).append(tuple(row))
    used = {n: 0 for n in by_size}
    probs = []
    for j in range(Q.J):
        n = int(Q.entries[j].sum())
        if n not in by_size:
            raise CDMError(f"table has no row for items measuring {n} attributes")
        rows = by_size[n]
        probs.append(np.array(rows[used[n] % len(rows)]))
        used[n] += 1
    return GdinaItemParams(tuple(probs))


FREE = -1


@dataclass(frozen=True)
class CentroidConstraint:
    """Per (item, pattern) constraint on a centroid table.

    ``fixed[j, m]`` is 0 or 1 for cells pinned to that value and ``FREE`` (-1)
    otherwise. Free cells sharing ``classes.group[j, m]`` share one value;
    the group id of a fixed cell is ignored.
    """

    fixed: NDArray[np.int8]
    classes: EquivalenceClasses

    @property
    def J(self) -> int:
        return self.fixed.shape[0]

    def is_free(self) -> NDArray[np.bool_]:
        return self.fixed == FREE


def model_constraints(classes: EquivalenceClasses) -> CentroidConstraint:
    fixed = np.full(classes.group.shape, FREE, dtype=np.int8)
    return CentroidConstraint(_readonly(fixed), classes)


def fixed_constraints(ideal: NDArray) -> CentroidConstraint:
    """Every cell pinned to the matching entry of a (2^K, J) 0/1 table."""
    fixed = np.ascontiguousarray(np.asarray(ideal, dtype=np.int8).T)
    J, M = fixed.shape
    group = np.zeros((J, M), dtype=np.int64)
    classes = EquivalenceClasses(_readonly(group), _readonly(np.ones(J, dtype=np.int64)))
    return CentroidConstraint(_readonly(fixed), classes)


def gnpc_constraints(Q) -> CentroidConstraint:
    """Pin cells where DINA and DINO ideals agree; the rest are free singletons."""
    Q = as_qmatrix(Q)
    dina = ideal_table(Q, ModelKind.DINA).T
    dino = ideal_table(Q, ModelKind.DINO).T
    fixed = np.full(dina.shape, FREE, dtype=np.int8)
    fixed[dina == 1] = 1
    fixed[dino == 0] = 0
    J, M = fixed.shape
    group = np.tile(np.arange(M, dtype=np.int64), (J, 1))
    classes = EquivalenceClasses(_readonly(group), _readonly(np.full(J, M, dtype=np.int64)))
    return CentroidConstraint(_readonly(fixed), classes)


def gnpc_weighted_ideal(w: float, eta_dina, eta_dino) -> float:
    if not 0.0 <= w <= 1.0:
        raise InvalidParameterError(f"weight {w} outside [0, 1]")
    return w * float(eta_dina) + (1.0 - w) * float(eta_dino)


def gnpc_weight_from_mean(class_mean: float) -> float:
    """Least-squares weight for a free cell: the weighted ideal equals the class mean."""
    return 1.0 - float(class_mean)


def monotonicity_violations(centroids: NDArray, Q) -> list[tuple[int, int, int]]:
    """Cells breaking the capable-classes-highest ordering.

    Returns ``(item, capable_pattern, other_pattern)`` triples where a pattern
    mastering every required attribute has a lower centroid than one that does
    not, or where capable patterns disagree among themselves.
    """
    Q = as_qmatrix(Q)
    mu = np.asarray(centroids, dtype=np.float64)
    dina = ideal_table(Q, ModelKind.DINA)
    out = []
    for j in range(Q.J):
        capable = np.flatnonzero(dina[:, j] == 1)
        others = np.flatnonzero(dina[:, j] == 0)
        top = mu[capable, j]
        lo_cap = capable[np.argmin(top)]
        if top.max() - top.min() > 1e-12:
            out.append((j, int(lo_cap), int(capable[np.argmax(top)])))
        for m in others:
            if mu[m, j] > top.min() + 1e-12:
                out.append((j, int(lo_cap), int(m)))
    return out


def check_monotone_table(table) -> bool:
    """Every row nondecreasing along the dominance order of its sub-patterns."""
    for row in table:
        n = int(np.log2(len(row)))
        for S in range(len(row)):
            for k in range(n):
                if not S & (1 << k) and row[S | (1 << k)] < row[S]:
                    return False
    return True

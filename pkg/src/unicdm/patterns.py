"""Attribute patterns, Q-matrices, responses and per-item equivalence classes.

Pattern index encoding: attribute 1 is the least-significant bit, so the
pattern ``(1, 0, 0)`` has index 1 and ``(0, 0, 1)`` has index 4.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

MAX_K = 15


class CDMError(ValueError):
    """Malformed input to a diagnosis-model routine."""


class DimensionError(CDMError):
    """Inputs whose shapes do not agree with each other."""


class ModelKind(str, Enum):
    DINA = "dina"
    DINO = "dino"
    GDINA = "gdina"


def _check_k(K: int) -> int:
    K = int(K)
    if not 1 <= K <= MAX_K:
        raise CDMError(f"K must be in [1, {MAX_K}], got {K}")
    return K


def _as_bits(p: ArrayLike) -> NDArray[np.int8]:
    arr = np.asarray(p)
    if arr.ndim != 1:
        raise CDMError("attribute pattern must be one-dimensional")
    if not np.all((arr == 0) | (arr == 1)):
        raise CDMError("attribute pattern entries must be 0 or 1")
    return arr.astype(np.int8)


def pattern_to_index(p: ArrayLike) -> int:
    bits = _as_bits(p)
    _check_k(bits.size)
    return int(sum(int(b) << k for k, b in enumerate(bits)))


def index_to_pattern(idx: int, K: int) -> NDArray[np.int8]:
    K = _check_k(K)
    idx = int(idx)
    if not 0 <= idx < 1 << K:
        raise CDMError(f"pattern index {idx} out of range for K={K}")
    return np.array([(idx >> k) & 1 for k in range(K)], dtype=np.int8)


def all_patterns(K: int) -> NDArray[np.int8]:
    """All 2^K patterns as a (2^K, K) array, row m is ``index_to_pattern(m)``."""
    K = _check_k(K)
    idx = np.arange(1 << K)
    return ((idx[:, None] >> np.arange(K)[None, :]) & 1).astype(np.int8)


def patterns_to_indices(patterns: ArrayLike) -> NDArray[np.int64]:
    arr = np.asarray(patterns, dtype=np.int64)
    if arr.ndim != 2:
        raise CDMError("expected an (N, K) array of patterns")
    _check_k(arr.shape[1])
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise CDMError("pattern entries must be 0 or 1")
    return arr @ (1 << np.arange(arr.shape[1], dtype=np.int64))


def indices_to_patterns(indices: ArrayLike, K: int) -> NDArray[np.int8]:
    idx = np.asarray(indices, dtype=np.int64)
    K = _check_k(K)
    if idx.size and (idx.min() < 0 or idx.max() >= 1 << K):
        raise CDMError("pattern index out of range")
    return ((idx[:, None] >> np.arange(K)[None, :]) & 1).astype(np.int8)


def dominates(p: ArrayLike, q: ArrayLike) -> bool:
    """True iff the pattern has every attribute the item row requires."""
    a, b = _as_bits(p), _as_bits(q)
    if a.size != b.size:
        raise DimensionError("pattern and q-row lengths differ")
    return bool(np.all(a >= b))


def disjoint(p: ArrayLike, q: ArrayLike) -> bool:
    """True iff the pattern shares no attribute with the item row."""
    a, b = _as_bits(p), _as_bits(q)
    if a.size != b.size:
        raise DimensionError("pattern and q-row lengths differ")
    return not bool(np.any(a & b))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QMatrix:
    """J x K binary item-attribute structure; every row needs one attribute."""

    entries: NDArray[np.int8]

    def __post_init__(self):
        arr = np.array(self.entries)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise CDMError("Q-matrix must be a non-empty 2-D array")
        if not np.all((arr == 0) | (arr == 1)):
            raise CDMError("Q-matrix entries must be 0 or 1")
        _check_k(arr.shape[1])
        zero_rows = np.flatnonzero(arr.sum(axis=1) == 0)
        if zero_rows.size:
            raise CDMError(f"Q-matrix rows {zero_rows.tolist()} have no attribute")
        object.__setattr__(self, "entries", _readonly(arr.astype(np.int8)))

    @property
    def J(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @property
    def n_patterns(self) -> int:
        return 1 << self.K

    def required(self, j: int) -> NDArray[np.int64]:
        """Indices of the attributes item j requires."""
        return np.flatnonzero(self.entries[j])


@dataclass(frozen=True)
class ResponseMatrix:
    entries: NDArray[np.uint8]

    def __post_init__(self):
        arr = np.array(self.entries)
        if arr.ndim != 2:
            raise CDMError("response matrix must be 2-D")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise CDMError("responses must be 0 or 1")
        object.__setattr__(self, "entries", _readonly(arr.astype(np.uint8)))

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def J(self) -> int:
        return self.entries.shape[1]


def as_qmatrix(Q) -> QMatrix:
    return Q if isinstance(Q, QMatrix) else QMatrix(np.asarray(Q))


def as_responses(X, Q: QMatrix | None = None) -> NDArray[np.uint8]:
    arr = X.entries if isinstance(X, ResponseMatrix) else ResponseMatrix(np.asarray(X)).entries
    if Q is not None and arr.shape[1] != Q.J:
        raise DimensionError(f"responses have {arr.shape[1]} items but Q has {Q.J}")
    return arr


def check_assignment(a: ArrayLike, K: int) -> NDArray[np.int64]:
    arr = np.asarray(a, dtype=np.int64)
    if arr.ndim != 1:
        raise CDMError("assignment must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() >= 1 << K):
        raise CDMError("assignment index out of range")
    return arr


@dataclass(frozen=True)
class EquivalenceClasses:
    """Per-item partition of the 2^K patterns into groups sharing a centroid.

    ``group[j, m]`` is the group id of pattern m for item j; ids run from 0 to
    ``n_groups[j] - 1``.
    """

    group: NDArray[np.int64]
    n_groups: NDArray[np.int64]

    def members(self, j: int) -> list[list[int]]:
        return [np.flatnonzero(self.group[j] == g).tolist() for g in range(self.n_groups[j])]


def _relabel(keys: NDArray[np.int64]) -> tuple[NDArray[np.int64], int]:
    # group ids in order of first appearance over pattern index
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64), len(first)


def equivalence_classes(Q, model: ModelKind | str) -> EquivalenceClasses:
    """Partition patterns per item according to the model's sharing rule.

    DINA and DINO give two groups per item (mastery of all / any required
    attribute); GDINA groups patterns by their restriction to the required
    attributes.
    """
    Q = as_qmatrix(Q)
    model = ModelKind(model)
    pats = all_patterns(Q.K).astype(np.int64)
    M, J = pats.shape[0], Q.J
    group = np.empty((J, M), dtype=np.int64)
    n_groups = np.empty(J, dtype=np.int64)
    for j in range(J):
        q = Q.entries[j].astype(np.int64)
        if model is ModelKind.DINA:
            keys = np.all(pats >= q, axis=1).astype(np.int64)
        elif model is ModelKind.DINO:
            keys = np.any(pats & q, axis=1).astype(np.int64)
        else:
            req = np.flatnonzero(q)
            keys = pats[:, req] @ (1 << np.arange(req.size, dtype=np.int64))
        group[j], n_groups[j] = _relabel(keys)
    return EquivalenceClasses(_readonly(group), _readonly(n_groups))


def singleton_classes(J: int, K: int) -> EquivalenceClasses:
    """Every pattern its own group: the unrestricted latent class model."""
    M = 1 << _check_k(K)
    group = np.tile(np.arange(M, dtype=np.int64), (J, 1))
    return EquivalenceClasses(_readonly(group), _readonly(np.full(J, M, dtype=np.int64)))


def class_counts(a: ArrayLike, K: int) -> NDArray[np.int64]:
    K = _check_k(K)
    arr = check_assignment(a, K)
    return np.bincount(arr, minlength=1 << K).astype(np.int64)


def read_binary_csv(path: str | Path) -> NDArray[np.int8]:
    """Read a headerless CSV of 0/1 integers."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [int(c.strip()) for c in row]
            except ValueError as exc:
                raise CDMError(f"{path}:{lineno}: non-integer entry") from exc
            if any(v not in (0, 1) for v in vals):
                raise CDMError(f"{path}:{lineno}: entries must be 0 or 1")
            rows.append(vals)
    if not rows:
        raise CDMError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise CDMError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.int8)


def format_binary_csv(arr: ArrayLike) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(arr, dtype=np.int64):
        writer.writerow(row.tolist())
    return buf.getvalue()

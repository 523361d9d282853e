"""Data generation and Monte-Carlo experiment orchestration."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np
from numpy.typing import NDArray

from .estimators import EstimatorSpec, fit
from .ideal import (
    GDINA_TABLES,
    DinaItemParams,
    gdina_params_from_table,
    gdina_theta_table,
    ideal_table,
    read_gdina_table,
    theta_from_ideal,
)
from .metrics import agreement
from .patterns import CDMError, ModelKind, QMatrix, all_patterns, as_qmatrix

log = logging.getLogger(__name__)

CSV_HEADER = ["k", "j", "n", "dist", "r", "noise", "estimator", "mean_par", "se_par", "mean_aar", "se_aar", "reps"]
DEFAULT_ESTIMATORS = ("npc", "gnpc", "jmle", "cmle", "mmle_dina", "mmle_gdina")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox stream for a 64-bit master seed and an integer spawn key."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def norm_ppf(p: float) -> float:
    """Standard normal quantile (Wichura's AS241 rational approximation)."""
    return NormalDist().inv_cdf(p)


@dataclass(frozen=True)
class AttributeDistribution:
    kind: str = "uniform"  # "uniform" or "mvn"
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "mvn"):
            raise CDMError(f"unknown attribute distribution {self.kind!r}")
        if not 0.0 <= self.r < 1.0:
            raise CDMError("correlation r must lie in [0, 1)")

    @classmethod
    def uniform(cls) -> AttributeDistribution:
        return cls("uniform", 0.0)

    @classmethod
    def mvn(cls, r: float) -> AttributeDistribution:
        return cls("mvn", r)


def mvn_thresholds(K: int) -> NDArray[np.float64]:
    return np.array([norm_ppf(k / (K + 1)) for k in range(1, K + 1)])


def gen_patterns(dist: AttributeDistribution, K: int, N: int, rng: np.random.Generator) -> NDArray[np.int64]:
    """Draw N pattern indices."""
    if dist.kind == "uniform":
        return rng.integers(0, 1 << K, size=N, dtype=np.int64)
    w0 = rng.standard_normal(N)
    w = rng.standard_normal((N, K))
    z = math.sqrt(dist.r) * w0[:, None] + math.sqrt(1.0 - dist.r) * w
    bits = (z >= mvn_thresholds(K)[None, :]).astype(np.int64)
    return bits @ (1 << np.arange(K, dtype=np.int64))


def gen_qmatrix(K: int, J: int, rng: np.random.Generator, max_attributes: int = 3) -> QMatrix:
    """Two stacked identity blocks followed by random rows with 1..min(K, 3) attributes."""
    if J < 2 * K:
        raise CDMError(f"need J >= 2K items, got J={J}, K={K}")
    pool = all_patterns(K)
    pool = pool[(pool.sum(axis=1) >= 1) & (pool.sum(axis=1) <= min(K, max_attributes))]
    eye = np.eye(K, dtype=np.int8)
    rest = pool[rng.integers(0, pool.shape[0], size=J - 2 * K)]
    return QMatrix(np.vstack([eye, eye, rest]))


@dataclass(frozen=True)
class ItemModel:
    """Generating item model: DINA/DINO with slip and guess, or GDINA from a table."""

    kind: str = "dina"
    s: float = 0.1
    g: float = 0.1
    table: str = "small"

    def __post_init__(self):
        if self.kind not in ("dina", "dino", "gdina"):
            raise CDMError(f"unknown item model {self.kind!r}")
        if self.kind == "gdina":
            if self.table not in GDINA_TABLES and not Path(self.table).is_file():
                raise CDMError(f"unknown GDINA table {self.table!r}")
        elif not (0 <= self.s <= 1 and 0 <= self.g <= 1):
            raise CDMError("s and g must lie in [0, 1]")

    @property
    def noise_label(self) -> str:
        if self.kind == "gdina":
            return f"gdina:{Path(self.table).stem if self.table not in GDINA_TABLES else self.table}"
        if self.s == self.g:
            return f"{self.kind}:{self.s:g}"
        return f"{self.kind}:{self.s:g}/{self.g:g}"

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind(self.kind)

    def theta_table(self, Q) -> NDArray[np.float64]:
        """(2^K, J) positive-response probabilities."""
        Q = as_qmatrix(Q)
        if self.kind == "gdina":
            table = GDINA_TABLES.get(self.table) or read_gdina_table(self.table)
            return gdina_theta_table(gdina_params_from_table(Q, table), Q)
        return theta_from_ideal(ideal_table(Q, self.kind), DinaItemParams.constant(Q.J, self.s, self.g))


def gen_responses(A, Q, theta: NDArray[np.float64], rng: np.random.Generator) -> NDArray[np.uint8]:
    """x_ij ~ Bernoulli(theta[a_i, j]) independently."""
    Q = as_qmatrix(Q)
    A = np.asarray(A, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (Q.n_patterns, Q.J):
        raise CDMError("theta table must be (2^K, J)")
    if np.any((theta < 0) | (theta > 1)):
        raise CDMError("item probabilities outside [0, 1]")
    u = rng.random((A.shape[0], Q.J))
    return (u < theta[A]).astype(np.uint8)


@dataclass(frozen=True)
class SimulatedData:
    Q: QMatrix
    A: NDArray[np.int64]
    X: NDArray[np.uint8]
    theta: NDArray[np.float64]


def simulate(K: int, J: int, N: int, dist: AttributeDistribution, model: ItemModel, rng) -> SimulatedData:
    Q = gen_qmatrix(K, J, rng)
    A = gen_patterns(dist, K, N, rng)
    theta = model.theta_table(Q)
    X = gen_responses(A, Q, theta, rng)
    return SimulatedData(Q, A, X, theta)


@dataclass(frozen=True)
class Cell:
    k: int
    j: int
    n: int
    dist: AttributeDistribution
    model: ItemModel

    def key(self) -> int:
        """Stable 32-bit id of the cell's parameters, used in its seed."""
        text = json.dumps(
            [self.k, self.j, self.n, self.dist.kind, self.dist.r, asdict(self.model)], sort_keys=True
        )
        return zlib.crc32(text.encode())


@dataclass
class ExperimentConfig:
    """A grid of simulation cells.

    ``k``, ``j``, ``n`` may be integers or lists; ``dist`` and ``model`` may be
    single objects or lists. The grid is their Cartesian product.
    """

    k: list[int]
    j: list[int]
    n: list[int]
    reps: int = 100
    seed: int = 0
    dist: list[AttributeDistribution] = field(default_factory=lambda: [AttributeDistribution.uniform()])
    model: list[ItemModel] = field(default_factory=lambda: [ItemModel()])
    estimators: list[str] = field(default_factory=lambda: list(DEFAULT_ESTIMATORS))
    known_membership: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise CDMError("reps must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise CDMError("seed must be a 64-bit unsigned integer")
        for name in self.estimators:
            _resolve_estimator(name, ModelKind.DINA)
        for k, j in itertools.product(self.k, self.j):
            if j < 2 * k:
                raise CDMError(f"J={j} is too small for K={k}")

    def cells(self) -> list[Cell]:
        return [Cell(*c) for c in itertools.product(self.k, self.j, self.n, self.dist, self.model)]

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        allowed = {"k", "j", "n", "reps", "seed", "dist", "model", "estimators", "known_membership"}
        unknown = set(doc) - allowed
        if unknown:
            raise CDMError(f"unknown config keys: {sorted(unknown)}")
        for key in ("k", "j", "n"):
            if key not in doc:
                raise CDMError(f"config is missing {key!r}")

        def ints(v, key):
            vals = v if isinstance(v, list) else [v]
            if not vals or not all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in vals):
                raise CDMError(f"{key!r} must be a positive integer or a list of them")
            return vals

        def objs(v):
            return v if isinstance(v, list) else [v]

        try:
            dists = [AttributeDistribution(d.get("kind", "uniform"), float(d.get("r", 0.0))) for d in objs(doc.get("dist", {}))]
            models = [
                ItemModel(m.get("kind", "dina"), float(m.get("s", 0.1)), float(m.get("g", m.get("s", 0.1))), str(m.get("table", "small")))
                for m in objs(doc.get("model", {}))
            ]
        except (AttributeError, TypeError, ValueError) as exc:
            raise CDMError(f"malformed dist/model entry: {exc}") from exc
        reps, seed = doc.get("reps", 100), doc.get("seed", 0)
        if not isinstance(reps, int) or not isinstance(seed, int):
            raise CDMError("reps and seed must be integers")
        estimators = doc.get("estimators", list(DEFAULT_ESTIMATORS))
        if not isinstance(estimators, list) or not all(isinstance(e, str) for e in estimators):
            raise CDMError("estimators must be a list of names")
        return cls(
            ints(doc["k"], "k"),
            ints(doc["j"], "j"),
            ints(doc["n"], "n"),
            reps,
            seed,
            dists,
            models,
            estimators,
            bool(doc.get("known_membership", False)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> ExperimentConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CDMError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise CDMError("config must be a JSON object")
        return cls.from_dict(doc)


def _resolve_estimator(name: str, data_model: ModelKind) -> EstimatorSpec:
    """Bare ``jmle``/``cmle``/``mmle`` take the generating model's constraints."""
    lname = name.lower()
    if lname in ("jmle", "cmle", "mmle"):
        model = ModelKind.GDINA if data_model is ModelKind.GDINA else ModelKind.DINA
        return EstimatorSpec(lname, model)
    try:
        return EstimatorSpec.from_name(lname)
    except ValueError as exc:
        raise CDMError(f"unknown estimator {name!r}") from exc


def run_replication(cell: Cell, rep: int, seed: int, estimators, known_membership=False) -> dict[str, tuple[float, float] | None]:
    """Simulate one data set for ``cell`` and score every estimator on it."""
    rng = make_rng(seed, cell.key(), rep)
    data = simulate(cell.k, cell.j, cell.n, cell.dist, cell.model, rng)
    out: dict[str, tuple[float, float] | None] = {}
    for name in estimators:
        try:
            spec = _resolve_estimator(name, cell.model.model_kind)
            init = data.A if known_membership and spec.method != "npc" else None
            res = fit(data.X, data.Q, spec, init_assignment=init)
            rep_ = agreement(res.assignment, data.A, cell.k)
            out[name] = (rep_.par, rep_.aar)
        except Exception:  # failures are reported per cell, not raised
            log.exception("estimator %s failed on cell %s rep %d", name, cell, rep)
            out[name] = None
    return out


def _task(args):
    return run_replication(*args)


@dataclass(frozen=True)
class CellSummary:
    cell: Cell
    estimator: str
    mean_par: float
    se_par: float
    mean_aar: float
    se_aar: float
    reps: int


def _mean_se(vals):
    arr = np.asarray(vals, dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def default_threads() -> int:
    env = os.environ.get("CDM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CDMError(f"CDM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> list[CellSummary]:
    """Mean and standard error of PAR/AAR per cell and estimator."""
    threads = threads or default_threads()
    cells = cfg.cells()
    tasks = [(c, r, cfg.seed, cfg.estimators, cfg.known_membership) for c in cells for r in range(cfg.reps)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_task(t) for t in tasks]

    summaries = []
    for ci, cell in enumerate(cells):
        chunk = results[ci * cfg.reps : (ci + 1) * cfg.reps]
        for name in cfg.estimators:
            ok = [r[name] for r in chunk if r[name] is not None]
            mp, sp = _mean_se([v[0] for v in ok])
            ma, sa = _mean_se([v[1] for v in ok])
            summaries.append(CellSummary(cell, name, mp, sp, ma, sa, len(ok)))
    return summaries


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6g}"


def format_csv(summaries: list[CellSummary], seed: int) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in summaries:
        c = s.cell
        w.writerow([
            c.k, c.j, c.n, c.dist.kind, f"{c.dist.r:g}", c.model.noise_label, s.estimator,
            _fmt(s.mean_par), _fmt(s.se_par), _fmt(s.mean_aar), _fmt(s.se_aar), s.reps,
        ])
    return buf.getvalue()

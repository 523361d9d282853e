"""NPC, GNPC, JMLE, CMLE and MMLE estimators.

NPC, GNPC, JMLE and CMLE are all runs of one alternating scheme: assign each
subject to the class minimising ``l(x_i, mu_alpha) + h(pi_alpha)``, then reset
every free centroid to the pooled mean of its equivalence group and every
proportion to the class share. They differ only in the loss, the penalty and
the centroid constraints. MMLE is the usual marginal-likelihood EM.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from .ideal import (
    FREE,
    CentroidConstraint,
    fixed_constraints,
    gnpc_constraints,
    ideal_table,
    model_constraints,
    monotonicity_violations,
)
from .losses import NO_PENALTY, LossKind, Penalty, loss_tables, total_loss
from .patterns import (
    CDMError,
    ModelKind,
    QMatrix,
    as_qmatrix,
    as_responses,
    check_assignment,
    equivalence_classes,
)

log = logging.getLogger(__name__)

METHODS = ("npc", "gnpc", "jmle", "cmle", "mmle")

# value a free cell takes before its group has ever been occupied
UNSEEN_CENTROID = 0.5


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and how long to iterate.

    ``model`` selects the ideal responses for NPC (DINA or DINO) and the
    equivalence classes for JMLE, CMLE and MMLE (DINA or GDINA). GNPC ignores it.
    ``loss`` and ``penalty`` default to the method's own choice when left as None.
    """

    method: str
    model: ModelKind = ModelKind.DINA
    loss: LossKind | None = None
    penalty: Penalty | None = None
    max_iterations: int = 200
    loss_tolerance: float = 1e-8
    em_tolerance: float = 1e-6
    em_max_iterations: int = 500

    def __post_init__(self):
        if self.method not in METHODS:
            raise CDMError(f"unknown method {self.method!r}")
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.loss is not None:
            object.__setattr__(self, "loss", LossKind(self.loss))
        allowed = {
            "npc": (ModelKind.DINA, ModelKind.DINO),
            "gnpc": tuple(ModelKind),
            "jmle": (ModelKind.DINA, ModelKind.GDINA),
            "cmle": (ModelKind.DINA, ModelKind.GDINA),
            "mmle": (ModelKind.DINA, ModelKind.GDINA),
        }[self.method]
        if self.model not in allowed:
            raise CDMError(f"{self.method} does not support model {self.model.value}")
        if self.max_iterations < 1 or self.em_max_iterations < 1:
            raise CDMError("iteration limits must be positive")

    @classmethod
    def from_name(cls, name: str, **kwargs) -> EstimatorSpec:
        """Parse names like ``npc``, ``npc_dino``, ``gnpc``, ``cmle_gdina``.

        A bare ``jmle``/``cmle``/``mmle`` means the DINA variant.
        """
        method, _, model = name.lower().partition("_")
        return cls(method, ModelKind(model or "dina"), **kwargs)

    @property
    def name(self) -> str:
        if self.method == "gnpc" or (self.method == "npc" and self.model is ModelKind.DINA):
            return self.method
        return f"{self.method}_{self.model.value}"

    @property
    def loss_kind(self) -> LossKind:
        if self.loss is not None:
            return self.loss
        return {"npc": LossKind.L1, "gnpc": LossKind.L2}.get(self.method, LossKind.CE)

    @property
    def penalty_fn(self) -> Penalty:
        if self.penalty is not None:
            return self.penalty
        return Penalty.neglog() if self.method == "cmle" else NO_PENALTY

    def constraint(self, Q: QMatrix) -> CentroidConstraint:
        if self.method == "npc":
            return fixed_constraints(ideal_table(Q, self.model))
        if self.method == "gnpc":
            return gnpc_constraints(Q)
        return model_constraints(equivalence_classes(Q, self.model))


@dataclass
class CentroidTable:
    values: NDArray[np.float64]  # (2^K, J)
    constraint: CentroidConstraint


@dataclass
class FitResult:
    """Output of any estimator.

    For MMLE ``loss_trajectory`` holds the negative marginal log-likelihood.
    """

    assignment: NDArray[np.int64]
    centroids: CentroidTable
    proportions: NDArray[np.float64]
    loss_trajectory: list[float]
    iterations: int
    converged: bool
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return self.loss_trajectory[-1]


class _Pooler:
    """Pooled group means for a fixed constraint, vectorised over items."""

    def __init__(self, constraint: CentroidConstraint):
        group = constraint.classes.group
        J, M = group.shape
        offsets = np.concatenate([[0], np.cumsum(constraint.classes.n_groups)[:-1]])
        self.gid = (group + offsets[:, None]).T.ravel()  # flattened (M, J) order
        self.n_total = int(constraint.classes.n_groups.sum())
        fixed = constraint.fixed.T  # (M, J)
        self.free = (fixed == FREE).ravel()
        self.fixed_mask = fixed != FREE
        self.fixed_vals = np.where(fixed == 1, 1.0, 0.0)
        self.shape = (M, J)

    def initial(self) -> NDArray[np.float64]:
        mu = np.full(self.shape, UNSEEN_CENTROID)
        mu[self.fixed_mask] = self.fixed_vals[self.fixed_mask]
        return mu

    def __call__(self, sums, counts, prev, kind=LossKind.CE) -> NDArray[np.float64]:
        """``sums[m, j]``: response total of class m on item j; ``counts[m]``: class size."""
        M, J = self.shape
        w_sum = np.where(self.free, np.asarray(sums, dtype=np.float64).ravel(), 0.0)
        w_cnt = np.where(self.free, np.repeat(np.asarray(counts, dtype=np.float64), J), 0.0)
        gs = np.bincount(self.gid, weights=w_sum, minlength=self.n_total)
        gn = np.bincount(self.gid, weights=w_cnt, minlength=self.n_total)
        occupied = gn > 0
        means = np.divide(gs, gn, out=np.zeros_like(gs), where=occupied)
        if kind is LossKind.L1:
            # binary data: the L1 minimiser is the group median
            means = np.where(means > 0.5, 1.0, np.where(means < 0.5, 0.0, 0.5))
        cell = means[self.gid]
        take = self.free & occupied[self.gid]
        mu = np.array(prev, dtype=np.float64).ravel()
        mu[take] = cell[take]
        mu = mu.reshape(M, J)
        mu[self.fixed_mask] = self.fixed_vals[self.fixed_mask]
        return mu


def _prep(X, Q):
    Q = as_qmatrix(Q)
    X = np.ascontiguousarray(as_responses(X, Q))
    return X, Q


def classify_with_centroids(x, centroids, pi, kind, penalty: Penalty = NO_PENALTY) -> int:
    """Pattern index minimising the loss for one response row (lowest index on ties)."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.uint8).reshape(1, -1))
    a, _ = assign(x, centroids, pi, kind, penalty)
    return int(a[0])


def assign(X, centroids, pi, kind, penalty: Penalty = NO_PENALTY):
    """Step 2 for all subjects: (assignment, per-subject minimal loss)."""
    c0, c1 = loss_tables(centroids, kind)
    h = penalty.values(np.asarray(pi, dtype=np.float64))
    return _kernels.assign(np.ascontiguousarray(X, dtype=np.uint8), c0, c1, h)


def update_step(X, a, pooler: _Pooler, prev, kind):
    """Step 3: pooled-mean centroids and sample proportions for assignment ``a``."""
    M = pooler.shape[0]
    sums, counts = _kernels.class_sums(X, a, M)
    mu = pooler(sums, counts, prev, kind)
    pi = counts / max(len(a), 1)
    return mu, pi


def npc_fit(X, Q, ideal: ModelKind | str = ModelKind.DINA, kind: LossKind | str = LossKind.L1) -> FitResult:
    X, Q = _prep(X, Q)
    ideal = ModelKind(ideal)
    spec = EstimatorSpec("npc", ideal, loss=LossKind(kind))
    constraint = spec.constraint(Q)
    mu = ideal_table(Q, ideal).astype(np.float64)
    uniform = np.full(Q.n_patterns, 1.0 / Q.n_patterns)
    a, _ = assign(X, mu, uniform, spec.loss_kind)
    counts = np.bincount(a, minlength=Q.n_patterns)
    pi = counts / max(len(a), 1)
    loss = total_loss(X, a, mu, pi, spec.loss_kind)
    return FitResult(a, CentroidTable(mu, constraint), pi, [loss], 1, True, spec.name)


def iterative_fit(X, Q, spec: EstimatorSpec, init_assignment=None) -> FitResult:
    """Alternate class assignment and pooled centroid/proportion updates.

    Stops when the assignment no longer changes, when the loss drops by less
    than ``spec.loss_tolerance``, or after ``spec.max_iterations`` passes. The
    start is the NPC (DINA) classification unless ``init_assignment`` is given.
    """
    X, Q = _prep(X, Q)
    if spec.method == "mmle":
        return mmle_em_fit(X, Q, spec.model, spec, init_assignment)
    kind, penalty = spec.loss_kind, spec.penalty_fn
    constraint = spec.constraint(Q)
    pooler = _Pooler(constraint)
    if init_assignment is None:
        a = npc_fit(X, Q).assignment
    else:
        a = check_assignment(init_assignment, Q.K).copy()
        if a.shape[0] != X.shape[0]:
            raise CDMError("initial assignment length differs from number of subjects")

    mu, pi = update_step(X, a, pooler, pooler.initial(), kind)
    trajectory = [total_loss(X, a, mu, pi, kind, penalty)]
    converged = False
    it = 0
    while it < spec.max_iterations:
        it += 1
        a_new, _ = assign(X, mu, pi, kind, penalty)
        mu_new, pi_new = update_step(X, a_new, pooler, mu, kind)
        trajectory.append(total_loss(X, a_new, mu_new, pi_new, kind, penalty))
        stable = np.array_equal(a_new, a)
        a, mu, pi = a_new, mu_new, pi_new
        if stable or trajectory[-2] - trajectory[-1] < spec.loss_tolerance:
            converged = True
            break

    result = FitResult(a, CentroidTable(mu, constraint), pi, trajectory, it, converged, spec.name)
    if spec.method in ("jmle", "cmle"):
        result.diagnostics["monotonicity_violations"] = monotonicity_violations(mu, Q)
    if not converged:
        log.warning("%s stopped after %d iterations without converging", spec.name, it)
    return result


def em_step(X, theta, pi, pooler: _Pooler):
    """One EM update; returns (theta, pi, marginal log-likelihood at the input)."""
    L = _kernels.loss_matrix(X, *loss_tables(theta, LossKind.CE), Penalty.neglog().values(pi))
    log_post, lse = _kernels.log_posterior(L)
    R = np.exp(log_post)
    sums = R.T @ X.astype(np.float64)
    counts = R.sum(axis=0)
    return pooler(sums, counts, theta), counts / X.shape[0], _kernels.seq_sum(lse)


def marginal_loglik(X, theta, pi) -> float:
    X = np.ascontiguousarray(X, dtype=np.uint8)
    L = _kernels.loss_matrix(X, *loss_tables(theta, LossKind.CE), Penalty.neglog().values(pi))
    return _kernels.seq_sum(_kernels.log_posterior(L)[1])


def mmle_em_fit(
    X, Q, model: ModelKind | str = ModelKind.DINA, spec: EstimatorSpec | None = None, init_assignment=None
) -> FitResult:
    """Marginal maximum likelihood via EM under DINA or GDINA sharing.

    Item parameters start at the pooled means of the NPC partition (or of
    ``init_assignment``) and class proportions start uniform. Subjects are
    classified by maximum posterior.
    """
    X, Q = _prep(X, Q)
    spec = spec or EstimatorSpec("mmle", model)
    constraint = model_constraints(equivalence_classes(Q, spec.model))
    pooler = _Pooler(constraint)
    if init_assignment is None:
        a0 = npc_fit(X, Q).assignment
    else:
        a0 = check_assignment(init_assignment, Q.K)
        if a0.shape[0] != X.shape[0]:
            raise CDMError("initial assignment length differs from number of subjects")
    theta, _ = update_step(X, a0, pooler, pooler.initial(), LossKind.CE)
    pi = np.full(Q.n_patterns, 1.0 / Q.n_patterns)

    loglik: list[float] = []
    converged = False
    it = 0
    while True:
        new_theta, new_pi, ll = em_step(X, theta, pi, pooler)
        loglik.append(ll)
        if len(loglik) > 1 and loglik[-1] - loglik[-2] < spec.em_tolerance:
            converged = True
            break
        if it >= spec.em_max_iterations:
            break
        theta, pi = new_theta, new_pi
        it += 1

    L = _kernels.loss_matrix(X, *loss_tables(theta, LossKind.CE), Penalty.neglog().values(pi))
    a = np.argmin(L, axis=1).astype(np.int64)
    return FitResult(
        a,
        CentroidTable(theta, constraint),
        pi,
        [-v for v in loglik],
        it,
        converged,
        spec.name,
    )


def fit(X, Q, spec: EstimatorSpec | str, init_assignment=None) -> FitResult:
    """Run any estimator by spec or name."""
    if isinstance(spec, str):
        spec = EstimatorSpec.from_name(spec)
    if spec.method == "npc":
        return npc_fit(X, Q, spec.model, spec.loss_kind)
    if spec.method == "mmle":
        return mmle_em_fit(X, Q, spec.model, spec, init_assignment)
    return iterative_fit(X, Q, spec, init_assignment)


def known_membership_centroids(X, Q, a, constraint: CentroidConstraint) -> NDArray[np.float64]:
    """Pooled-mean centroids computed from supplied (true) memberships."""
    X, Q = _prep(X, Q)
    a = check_assignment(a, Q.K)
    pooler = _Pooler(constraint)
    mu, _ = update_step(X, a, pooler, pooler.initial(), LossKind.CE)
    return mu

"""Agreement rates and independent brute-force oracles.

The oracles never call into the estimator or kernel code: they re-derive
losses, posteriors and argmins with plain Python loops so that they can catch
bugs the fast paths share. ``consistency_probe`` is the exception by design,
since the centroid update is what it measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .patterns import CDMError, DimensionError

_EPS = 1e-10
_SENTINEL = 1e18


@dataclass(frozen=True)
class AgreementReport:
    par: float
    aar: float
    per_attribute: tuple[float, ...]


def agreement(a_hat, a_true, K: int) -> AgreementReport:
    """Pattern-wise and attribute-wise agreement between two assignments."""
    a_hat = np.asarray(a_hat, dtype=np.int64)
    a_true = np.asarray(a_true, dtype=np.int64)
    if a_hat.shape != a_true.shape:
        raise DimensionError("assignments differ in length")
    N = a_hat.shape[0]
    if N == 0:
        raise CDMError("agreement of empty assignments is undefined")
    diff = a_hat ^ a_true
    per_attr = tuple(float(np.mean(((diff >> k) & 1) == 0)) for k in range(K))
    return AgreementReport(float(np.mean(diff == 0)), float(np.mean(per_attr)), per_attr)


def _oracle_item_loss(x, mu, kind):
    if kind == "l1":
        return abs(x - mu)
    if kind == "l2":
        return (x - mu) * (x - mu)
    m = mu
    if m < _EPS:
        m = _EPS
    elif m > 1.0 - _EPS:
        m = 1.0 - _EPS
    if x == 1:
        return -math.log(m)
    return -math.log(1.0 - m)


def _oracle_penalty(pi, penalty, scale=1.0):
    if penalty in (None, "none"):
        return 0.0
    if pi <= 0.0:
        return _SENTINEL
    return -scale * math.log(pi)


def oracle_classify(x, centroids, pi, kind, penalty="none", scale: float = 1.0) -> int:
    """Exhaustive argmin over patterns, lowest index on ties."""
    kind = getattr(kind, "value", kind)
    scale = getattr(penalty, "scale", scale)
    penalty = getattr(penalty, "kind", penalty)
    x = [int(v) for v in np.asarray(x).tolist()]
    table = np.asarray(centroids, dtype=np.float64).tolist()
    props = np.asarray(pi, dtype=np.float64).tolist()
    best, best_m = math.inf, 0
    for m, row in enumerate(table):
        acc = 0.0
        for xj, mj in zip(x, row):
            acc += _oracle_item_loss(xj, mj, kind)
        acc = acc + _oracle_penalty(props[m], penalty, scale)
        if acc < best:
            best, best_m = acc, m
    return best_m


def oracle_posterior_argmax(x, theta, pi) -> tuple[int, list[float]]:
    """Maximum-posterior pattern and the posterior vector, by direct Bayes rule."""
    x = [int(v) for v in np.asarray(x).tolist()]
    logs = []
    for row, p in zip(np.asarray(theta, dtype=np.float64).tolist(), np.asarray(pi).tolist()):
        if p <= 0:
            logs.append(-math.inf)
            continue
        s = math.log(p)
        for xj, t in zip(x, row):
            t = min(max(t, _EPS), 1.0 - _EPS)
            s += math.log(t) if xj == 1 else math.log(1.0 - t)
        logs.append(s)
    top = max(logs)
    w = [math.exp(v - top) for v in logs]
    z = math.fsum(w)
    post = [v / z for v in w]
    best = 0
    for m in range(1, len(logs)):
        if logs[m] > logs[best]:
            best = m
    return best, post


def oracle_complete_loglik(X, a, theta, pi) -> float:
    """sum_i log(pi_{a_i} * prod_j Bernoulli(x_ij; theta_{a_i j}))."""
    total = []
    for xi, m in zip(np.asarray(X).tolist(), np.asarray(a).tolist()):
        lik = float(pi[m])
        row = theta[m]
        for xj, t in zip(xi, row):
            t = min(max(float(t), _EPS), 1.0 - _EPS)
            lik *= t if xj == 1 else 1.0 - t
        total.append(math.log(lik))
    return math.fsum(total)


def expected_loss_matrix(theta_true, centroids, kind) -> NDArray[np.float64]:
    """Entry (t, a): sum over items of E[l(x_j, mu_{j,a})] with x_j ~ Bernoulli(theta_{j,t})."""
    kind = getattr(kind, "value", kind)
    th = np.asarray(theta_true, dtype=np.float64)
    mu = np.asarray(centroids, dtype=np.float64)
    if th.shape != mu.shape:
        raise DimensionError("truth and centroid tables must both be (2^K, J)")
    M, J = th.shape
    out = np.zeros((M, M))
    for t in range(M):
        for a in range(M):
            acc = 0.0
            for j in range(J):
                p = th[t, j]
                acc += p * _oracle_item_loss(1, mu[a, j], kind) + (1 - p) * _oracle_item_loss(0, mu[a, j], kind)
            out[t, a] = acc
    return out


def kl_bernoulli(p: float, q: float) -> float:
    """Direct KL(Bernoulli(p) || Bernoulli(q))."""
    terms = []
    if p > 0:
        terms.append(p * (math.log(p) - math.log(q)))
    if p < 1:
        terms.append((1 - p) * (math.log(1 - p) - math.log(1 - q)))
    return math.fsum(terms)


def gnpc_counterexample_gap(theta_true: float, theta_other: float) -> float:
    """Expected L2 gap E[d(alpha')] - E[d(alpha0)] for one item in the GNPC failure case.

    The true pattern's centroid is pinned at 0 while the rival pattern's
    centroid has converged to its own item parameter.
    """
    e_true = expected_item_l2(theta_true, 0.0)
    e_other = expected_item_l2(theta_true, theta_other)
    return e_other - e_true


def expected_item_l2(p: float, mu: float) -> float:
    return p * (1 - mu) ** 2 + (1 - p) * mu**2


def gnpc_separation_holds(theta_column, delta: float) -> bool:
    """Item-level separation condition under which GNPC's truth is the expected minimiser."""
    th = np.unique(np.asarray(theta_column, dtype=np.float64))
    lo, hi = th.min(), th.max()
    for t in th:
        if t != lo and (t - lo) ** 2 < lo**2 + delta:
            return False
        if t != hi and (t - hi) ** 2 < (1 - hi) ** 2 + delta:
            return False
    return True


@dataclass(frozen=True)
class ConsistencyCurve:
    n_values: tuple[int, ...]
    errors: NDArray[np.float64]  # (reps, len(n_values)) sup-norm errors

    @property
    def medians(self) -> NDArray[np.float64]:
        return np.median(self.errors, axis=0)


def consistency_probe(model, K: int, J: int, N_list, reps: int, rng, pooling: str = "model") -> ConsistencyCurve:
    """Sup-norm centroid error when true memberships are handed to the centroid update.

    ``model`` is a generating :class:`~unicdm.simulation.ItemModel`. ``pooling``
    is ``"model"`` to pool over the generating model's equivalence classes or
    ``"free"`` to estimate every (pattern, item) cell separately. Each
    replication draws one Q-matrix and an independent uniform sample per N.
    """
    from .estimators import known_membership_centroids
    from .ideal import model_constraints
    from .patterns import equivalence_classes, singleton_classes
    from .simulation import AttributeDistribution, gen_patterns, gen_qmatrix, gen_responses

    N_list = tuple(int(n) for n in N_list)
    errors = np.empty((reps, len(N_list)))
    for r in range(reps):
        Q = gen_qmatrix(K, J, rng)
        theta = model.theta_table(Q)
        if pooling == "free":
            classes = singleton_classes(J, K)
        else:
            classes = equivalence_classes(Q, "gdina" if model.kind == "gdina" else model.kind)
        constraint = model_constraints(classes)
        for c, N in enumerate(N_list):
            A = gen_patterns(AttributeDistribution.uniform(), K, N, rng)
            X = gen_responses(A, Q, theta, rng)
            mu = known_membership_centroids(X, Q, A, constraint)
            errors[r, c] = float(np.max(np.abs(mu - theta)))
    return ConsistencyCurve(N_list, errors)

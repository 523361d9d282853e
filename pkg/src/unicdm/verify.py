"""Self-checks of the estimators against oracles and the consistency theory.

Each check returns a :class:`Check`; ``run_suite`` collects them by suite name
(``losses``, ``algorithm``, ``theory`` or ``all``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimators import EstimatorSpec, assign, fit, iterative_fit, mmle_em_fit, npc_fit
from .ideal import ideal_table
from .losses import Penalty, expected_item_loss, item_loss
from .metrics import (
    consistency_probe,
    expected_loss_matrix,
    gnpc_counterexample_gap,
    gnpc_separation_holds,
    kl_bernoulli,
    oracle_classify,
    oracle_complete_loglik,
    oracle_posterior_argmax,
)
from .patterns import pattern_to_index
from .simulation import AttributeDistribution, ItemModel, make_rng, simulate

VERIFY_SEED = 20210901


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# ------------------------------------------------------------------ losses


def check_item_losses() -> Check:
    vals = (item_loss(1, 0.0, "l1"), item_loss(1, 0.3, "l2"), item_loss(1, 0.5, "ce"))
    ok = vals[0] == 1 and abs(vals[1] - 0.49) < 1e-15 and abs(vals[2] - math.log(2)) < 1e-15
    return Check("item losses", ok, f"L1(1,0)={vals[0]:g} L2(1,.3)={vals[1]:.6g} CE(1,.5)={vals[2]:.6f}")


def check_kl_bound(pairs: int = 10_000, seed: int = VERIFY_SEED) -> Check:
    """CE expected-loss gap equals KL and dominates twice the squared gap."""
    rng = make_rng(seed, 1)
    p = rng.uniform(0.05, 0.95, pairs)
    q = rng.uniform(0.05, 0.95, pairs)
    worst_slack, worst_id = math.inf, 0.0
    for a, b in zip(p.tolist(), q.tolist()):
        kl = kl_bernoulli(a, b)
        gap = expected_item_loss(a, b, "ce") - expected_item_loss(a, a, "ce")
        worst_id = max(worst_id, abs(gap - kl))
        worst_slack = min(worst_slack, kl - 2 * (a - b) ** 2)
    ok = worst_slack >= 0 and worst_id < 1e-12
    return Check("KL >= 2*dtheta^2", ok, f"{pairs} pairs, min slack {worst_slack:.3e}, |gap-KL| <= {worst_id:.1e}")


def check_mean_minimizer(seed: int = VERIFY_SEED) -> Check:
    """Grid search confirms the class mean minimises L2 and CE, and the median minimises L1."""
    rng = make_rng(seed, 2)
    grid = np.linspace(0, 1, 10_001)
    worst = 0.0
    median_ok = True
    for _ in range(20):
        x = rng.integers(0, 2, size=int(rng.integers(3, 40)))
        mean = x.mean()
        if mean in (0.0, 0.5, 1.0):
            continue
        for kind in ("l2", "ce"):
            tot = [sum(item_loss(int(v), float(g), kind) for v in x) for g in grid[1:-1]]
            worst = max(worst, abs(grid[1:-1][int(np.argmin(tot))] - mean))
        l1 = [np.abs(x - g).sum() for g in grid]
        median_ok &= grid[int(np.argmin(l1))] == (1.0 if mean > 0.5 else 0.0)
    ok = worst <= 1e-4 and median_ok
    return Check("class-mean minimiser", ok, f"max |argmin - mean| = {worst:.1e}; L1 picks median: {median_ok}")


# --------------------------------------------------------------- algorithm


def random_instance(seed: int, index: int, K=3, J=30, N=100, model: ItemModel | None = None):
    rng = make_rng(seed, 3, index)
    if model is None:
        if index % 2:
            model = ItemModel("gdina", table="small" if index % 4 == 1 else "large")
        else:
            s = float(rng.uniform(0.05, 0.35))
            model = ItemModel("dina", s, s)
    return simulate(K, J, N, AttributeDistribution.uniform(), model, rng)


def check_monotone_loss(instances: int = 100, seed: int = VERIFY_SEED) -> Check:
    worst = -math.inf
    specs = ["gnpc", "jmle_dina", "cmle_dina", "jmle_gdina", "cmle_gdina"]
    for i in range(instances):
        data = random_instance(seed, i)
        for name in specs:
            traj = np.asarray(iterative_fit(data.X, data.Q, EstimatorSpec.from_name(name)).loss_trajectory)
            if traj.size > 1:
                worst = max(worst, float(np.max(np.diff(traj))))
    ok = worst <= 1e-9
    return Check("loss monotonicity", ok, f"{instances} instances x {len(specs)} methods, max step increase {worst:.3e}")


def random_centroid_case(rng, K: int, J: int, kind: str):
    M = 1 << K
    mu = rng.random((M, J))
    if kind != "ce" or rng.random() < 0.5:
        mask = rng.random((M, J)) < 0.3
        mu[mask] = rng.integers(0, 2, size=int(mask.sum()))
    pi = rng.dirichlet(np.ones(M))
    if rng.random() < 0.3:
        pi[rng.integers(0, M)] = 0.0
        pi /= pi.sum()
    x = rng.integers(0, 2, size=J).astype(np.uint8)
    return x, mu, pi


def check_oracle_equivalence(cases: int = 10_000, seed: int = VERIFY_SEED) -> Check:
    rng = make_rng(seed, 4)
    combos = [(k, p) for k in ("l1", "l2", "ce") for p in (Penalty.none(), Penalty.neglog(), Penalty.neglog(0.5))]
    mismatches = 0
    for c in range(cases):
        kind, pen = combos[c % len(combos)]
        K = int(rng.integers(1, 5))
        J = int(rng.integers(1, 13))
        x, mu, pi = random_centroid_case(rng, K, J, kind)
        got = int(assign(x[None, :], mu, pi, kind, pen)[0][0])
        if got != oracle_classify(x, mu, pi, kind, pen):
            mismatches += 1
    return Check("step-2 oracle equivalence", mismatches == 0, f"{cases} cases, {mismatches} mismatches")


def check_npc_l1_l2(subjects: int = 1000, seed: int = VERIFY_SEED) -> Check:
    rng = make_rng(seed, 5)
    data = simulate(4, 20, subjects, AttributeDistribution.uniform(), ItemModel("dina", 0.2, 0.2), rng)
    a1 = npc_fit(data.X, data.Q, kind="l1").assignment
    a2 = npc_fit(data.X, data.Q, kind="l2").assignment
    diff = int(np.sum(a1 != a2))
    return Check("NPC L1 == L2", diff == 0, f"{subjects} subjects, K=4, {diff} differ")


def check_em(instances: int = 50, seed: int = VERIFY_SEED) -> Check:
    worst = -math.inf
    mismatches = 0
    for i in range(instances):
        data = random_instance(seed, 1000 + i)
        res = mmle_em_fit(data.X, data.Q, "gdina" if i % 2 else "dina")
        ll = -np.asarray(res.loss_trajectory)
        if ll.size > 1:
            worst = max(worst, float(np.max(ll[:-1] - ll[1:])))
        theta, pi = res.centroids.values, res.proportions
        for x, a in zip(data.X, res.assignment):
            if oracle_posterior_argmax(x, theta, pi)[0] != a:
                mismatches += 1
    ok = worst <= 1e-8 and mismatches == 0
    return Check("EM ascent + MAP oracle", ok, f"max log-lik drop {worst:.2e}, {mismatches} MAP mismatches")


def check_cmle_identity(fits: int = 50, seed: int = VERIFY_SEED) -> Check:
    worst = 0.0
    for i in range(fits):
        data = random_instance(seed, 2000 + i)
        res = fit(data.X, data.Q, "cmle_gdina" if i % 2 else "cmle_dina")
        ll = oracle_complete_loglik(data.X, res.assignment, res.centroids.values, res.proportions)
        worst = max(worst, abs(res.final_loss + ll))
    return Check("CMLE loss == -complete log-lik", worst <= 1e-9, f"{fits} fits, max |diff| {worst:.2e}")


# ------------------------------------------------------------------ theory


def gnpc_counterexample_table():
    """One item with q = (1,1,0): truth 0.2 at (0,0,1), 0.3 at (1,0,0)."""
    K, M = 3, 8
    q = (1, 1, 0)
    theta = np.full((M, 1), 0.25)
    a0, a1 = pattern_to_index((0, 0, 1)), pattern_to_index((1, 0, 0))
    theta[a0, 0], theta[a1, 0] = 0.2, 0.3
    mu = theta.copy()
    # GNPC pins cells where DINA and DINO ideals agree
    dina = ideal_table([q], "dina")[:, 0]
    dino = ideal_table([q], "dino")[:, 0]
    mu[dina == 1, 0] = 1.0
    mu[dino == 0, 0] = 0.0
    return theta, mu, a0, a1, K


def check_gnpc_counterexample() -> Check:
    theta, mu, a0, a1, _ = gnpc_counterexample_table()
    E = expected_loss_matrix(theta, mu, "l2")
    gap = E[a0, a1] - E[a0, a0]
    direct = gnpc_counterexample_gap(0.2, 0.3)
    ok = abs(gap - (-0.03)) <= 1e-12 and abs(direct - (-0.03)) <= 1e-12
    return Check("GNPC counterexample gap", ok, f"E[d(alpha')] - E[d(alpha0)] = {gap:.15f} (expected -0.03)")


def check_gnpc_truth_not_minimal() -> Check:
    theta, mu, a0, _, _ = gnpc_counterexample_table()
    E = expected_loss_matrix(theta, mu, "l2")
    arg = int(np.argmin(E[a0]))
    return Check("true pattern not the expected minimiser", arg != a0, f"argmin row (0,0,1) -> index {arg}, truth {a0}")


def check_gnpc_separation(tables: int = 2000, seed: int = VERIFY_SEED) -> Check:
    """When the separation condition holds, the truth strictly minimises expected L2 per item."""
    rng = make_rng(seed, 6)
    tested = violations = 0
    for _ in range(tables):
        col = rng.choice([0.02, 0.05, 0.1, 0.5, 0.8, 0.9, 0.95, 0.98], size=8)
        theta = col[:, None]
        if not gnpc_separation_holds(col, 1e-3):
            continue
        tested += 1
        lo, hi = col.min(), col.max()
        mu = theta.copy()
        mu[col == lo, 0] = 0.0
        mu[col == hi, 0] = 1.0
        E = expected_loss_matrix(theta, mu, "l2")
        for t in range(8):
            others = [E[t, a] for a in range(8) if col[a] != col[t]]
            if others and not min(others) > E[t, t] + 1e-12:
                violations += 1
    ok = tested > 0 and violations == 0
    return Check("separation => truth minimal", ok, f"{tested} qualifying tables, {violations} violations")


def check_expected_loss_diagonal(tables: int = 50, seed: int = VERIFY_SEED) -> Check:
    violations = tested = 0
    for i in range(tables):
        data = random_instance(seed, 3000 + i, model=ItemModel("dina", 0.2, 0.2))
        theta = data.theta
        M, J = theta.shape
        gaps = [np.abs(theta[a] - theta[b]).sum() / J for a in range(M) for b in range(M) if a != b]
        if min(gaps) < 0.1:
            continue
        tested += 1
        E = expected_loss_matrix(theta, theta, "ce")
        for t in range(M):
            if not all(E[t, a] > E[t, t] + 1e-12 for a in range(M) if a != t):
                violations += 1
    return Check("expected-loss diagonal minimal", tested > 0 and violations == 0, f"{tested} tables, {violations} violations")


def check_consistency(reps: int = 100, seed: int = VERIFY_SEED) -> Check:
    curve = consistency_probe(ItemModel("dina", 0.2, 0.2), 3, 30, (100, 10_000), reps, make_rng(seed, 7))
    med = curve.medians
    shrink = int(np.sum(curve.errors[:, 1] < curve.errors[:, 0]))
    ok = med[1] < 0.02 and shrink >= math.ceil(0.95 * reps)
    return Check(
        "known-membership centroid consistency",
        ok,
        f"median sup error N=1e2: {med[0]:.4f}, N=1e4: {med[1]:.4f}; shrank in {shrink}/{reps}",
    )


SUITES: dict[str, list[Callable[[], Check]]] = {
    "losses": [check_item_losses, check_kl_bound, check_mean_minimizer],
    "algorithm": [check_monotone_loss, check_oracle_equivalence, check_npc_l1_l2, check_em, check_cmle_identity],
    "theory": [
        check_gnpc_counterexample,
        check_gnpc_truth_not_minimal,
        check_gnpc_separation,
        check_expected_loss_diagonal,
        check_consistency,
    ],
}


def run_suite(name: str = "all", echo: Callable[[str], None] | None = None) -> list[Check]:
    if name == "all":
        funcs = [f for fs in SUITES.values() for f in fs]
    elif name in SUITES:
        funcs = SUITES[name]
    else:
        raise ValueError(f"unknown suite {name!r}")
    out = []
    for f in funcs:
        c = f()
        if echo:
            echo(c.line())
        out.append(c)
    return out

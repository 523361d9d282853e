"""``unicdm`` command-line interface: fit, simulate, experiment, verify."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from .estimators import EstimatorSpec, fit
from .losses import Penalty
from .patterns import CDMError, DimensionError, as_qmatrix, as_responses, read_binary_csv
from .simulation import (
    AttributeDistribution,
    ExperimentConfig,
    ItemModel,
    default_threads,
    format_csv,
    make_rng,
    run_experiment,
    simulate,
)

EXIT_OK, EXIT_FAIL, EXIT_MALFORMED, EXIT_DIMENSION = 0, 1, 2, 3

BIT_ORDER_NOTE = "pattern strings list alpha_1 first (leftmost); internal indices use alpha_1 as the least significant bit"

def bitstring(index: int, K: int) -> str:
    return "".join(str((int(index) >> k) & 1) for k in range(K))

def _write_atomic(files: dict[Path, str]) -> None:
    """Write every file to a temp name first, then rename them all into place."""
    staged = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)

def _fit_outputs(res, K: int, spec: EstimatorSpec) -> dict[str, str]:
    assign = "pattern\n" + "".join(bitstring(a, K) + "\n" for a in res.assignment)
    M, J = res.centroids.values.shape
    cent = ["pattern," + ",".join(f"item{j + 1}" for j in range(J))]
    for m in range(M):
        cent.append(bitstring(m, K) + "," + ",".join(repr(float(v)) for v in res.centroids.values[m]))
    props = ["pattern,proportion"] + [f"{bitstring(m, K)},{float(p)!r}" for m, p in enumerate(res.proportions)]
    manifest = {
        "method": spec.name,
        "loss": spec.loss_kind.value if spec.method != "mmle" else "marginal_loglik",
        "penalty": spec.penalty_fn.kind if spec.method != "mmle" else "none",
        "n_subjects": int(res.assignment.shape[0]),
        "K": K,
        "J": J,
        "iterations": res.iterations,
        "converged": res.converged,
        "final_loss": float(res.final_loss),
        "loss_trajectory": [float(v) for v in res.loss_trajectory],
        "bit_order": BIT_ORDER_NOTE,
    }
    if "monotonicity_violations" in res.diagnostics:
        manifest["monotonicity_violations"] = [list(v) for v in res.diagnostics["monotonicity_violations"]]
    return {
        "assignment.csv": assign,
        "centroids.csv": "\n".join(cent) + "\n",
        "proportions.csv": "\n".join(props) + "\n",
        # json.dumps uses repr for floats, so losses keep full precision
        "manifest.json": json.dumps(manifest, indent=2) + "\n",
    }

def cmd_fit(args) -> int:
    try:
        X = read_binary_csv(args.x)
        Q = as_qmatrix(read_binary_csv(args.q))
    except (OSError, CDMError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    try:
        as_responses(X, Q)
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    try:
        kwargs = {}
        if args.loss:
            kwargs["loss"] = args.loss
        if args.penalty:
            kwargs["penalty"] = Penalty(args.penalty)
        spec = EstimatorSpec.from_name(args.method, **kwargs)
        if spec.method in ("npc", "mmle") and (args.penalty or (args.loss and spec.method == "mmle")):
            raise CDMError(f"{spec.method} does not accept the given --loss/--penalty")
    except (CDMError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    res = fit(X, Q, spec)
    out = Path(args.out)
    _write_atomic({out / name: text for name, text in _fit_outputs(res, Q.K, spec).items()})
    print(f"{spec.name}: final loss {res.final_loss!r} after {res.iterations} iterations -> {out}")
    return EXIT_OK

def cmd_simulate(args) -> int:
    try:
        model = ItemModel(args.model, args.s, args.g if args.g is not None else args.s, args.table)
        dist = AttributeDistribution(args.dist, args.r)
        data = simulate(args.k, args.j, args.n, dist, model, make_rng(args.seed))
    except CDMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    out = Path(args.out)
    rows = lambda arr: "".join(",".join(str(int(v)) for v in r) + "\n" for r in arr)  # noqa: E731
    _write_atomic({
        out / "X.csv": rows(data.X),
        out / "Q.csv": rows(data.Q.entries),
        out / "A.csv": "pattern\n" + "".join(bitstring(a, args.k) + "\n" for a in data.A),
    })
    print(f"simulated N={args.n} J={args.j} K={args.k} ({model.noise_label}) -> {out}")
    return EXIT_OK

def cmd_experiment(args) -> int:
    try:
        cfg = ExperimentConfig.from_json(args.config)
    except (OSError, CDMError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    # CDM_THREADS wins over the flag
    threads = default_threads() if os.environ.get("CDM_THREADS") or args.threads is None else args.threads
    text = format_csv(run_experiment(cfg, threads), cfg.seed)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write_atomic({Path(args.out): text})
    return EXIT_OK

def cmd_verify(args) -> int:
    from .verify import run_suite

    checks = run_suite(args.suite, echo=print)
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unicdm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="classify subjects from a response matrix and Q-matrix")
    f.add_argument("--x", required=True, help="N x J response CSV (0/1, no header)")
    f.add_argument("--q", required=True, help="J x K Q-matrix CSV (0/1, no header)")
    f.add_argument("--method", required=True, help="npc, npc_dino, gnpc, jmle[_gdina], cmle[_gdina], mmle[_gdina]")
    f.add_argument("--loss", choices=["l1", "l2", "ce"])
    f.add_argument("--penalty", choices=["none", "neglog"])
    f.add_argument("--out", default="unicdm_fit", help="output directory")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="draw one synthetic data set")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--model", choices=["dina", "dino", "gdina"], default="dina")
    s.add_argument("--s", type=float, default=0.1, help="slip")
    s.add_argument("--g", type=float, default=None, help="guess (defaults to --s)")
    s.add_argument("--table", default="small", help="GDINA table: small, large or a CSV path")
    s.add_argument("--dist", choices=["uniform", "mvn"], default="uniform")
    s.add_argument("--r", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="unicdm_sim", help="output directory")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a Monte-Carlo grid from a JSON config")
    e.add_argument("--config", required=True)
    e.add_argument("--out", default="-", help="CSV path, or - for stdout")
    e.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    e.set_defaults(func=cmd_experiment)

    v = sub.add_parser("verify", help="run the built-in property and theory checks")
    v.add_argument("--suite", choices=["all", "losses", "algorithm", "theory"], default="all")
    v.set_defaults(func=cmd_verify)
    return p

def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)

if __name__ == "__main__":
    sys.exit(main())

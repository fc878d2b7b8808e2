"""Command-line entry point: ``qnd-walk {simulate,verify,stats,demo}``.

Exit codes: 0 success, 1 a check failed, 2 invalid input, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, resolved_document
from .gaussian import GaussianModel, ym_pdf
from .hilbert import ValidationError
from .martingale import asymptotic_fixed_point_check, martingale_reports
from .output import write_histogram_csv, write_json, write_trajectories_csv
from .stats import (
    born_rule_test,
    count_modes,
    ensemble_mode_sampler,
    histogram,
    luders_batch_check,
    ym_compare,
    ym_from_records,
)
from .trajectory import NumericalAbort, run_ensemble
from .verify import discrete_checks, fuzz_suite, gaussian_suite

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_ABORT = 0, 1, 2, 3
BLOCK_DRIFT_TOL = 1e-10

log = logging.getLogger("qnd_walk")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load(args, mode: str) -> RunConfig:
    overrides = {"seed": args.seed, "n_steps": args.steps, "n_trajectories": args.trajectories}
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    return load_config(args.config, mode, overrides)


def cmd_simulate(args) -> int:
    cfg = _load(args, "simulate")
    out = Path(cfg.output_dir)
    recs = run_ensemble(cfg.trajectory_config(), cfg.n_trajectories, args.workers)
    csv = write_trajectories_csv(recs, out / "trajectories.csv")
    doc = resolved_document(cfg)
    doc["manifest"] = {
        "package": "qnd-walk",
        "version": __version__,
        "numpy": np.__version__,
        "rng": "numpy Philox keyed by (seed, trajectory_index)",
        "outputs": {"trajectories.csv": _sha256(csv)},
        "n_converged": sum(r.converged_class is not None for r in recs),
    }
    write_json(doc, out / "manifest.json")
    log.info("wrote %d trajectories to %s", len(recs), csv)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args, "verify")
    v = cfg.verify
    report: dict = {}
    ok = True
    if isinstance(cfg.model, GaussianModel):
        res = gaussian_suite(cfg.model, int(v.get("n_states", 50)), int(v.get("fuzz_seed", 0)))
        report["gaussian"] = res.to_dict()
        ok = res.passed
    else:
        kw = {"product_steps": int(v.get("product_steps", 20)), "joint_max_n": int(v.get("joint_max_n", 8))}
        checks = discrete_checks(cfg.model, cfg.initial_state, seed=cfg.seed, **kw)
        report["configured_model"] = {
            "pass": all(c.passed for c in checks if not c.skipped),
            "checks": [c.to_dict() for c in checks],
        }
        ok = report["configured_model"]["pass"]
        n_fuzz = int(v.get("fuzz_cases", 200))
        if n_fuzz > 0:
            res = fuzz_suite(n_fuzz, int(v.get("fuzz_seed", 0)), **kw)
            report["fuzz"] = {
                "pass": res.passed,
                "n_cases": n_fuzz,
                "worst": {k: c.to_dict() for k, c in res.worst().items()},
                "skipped": [c.to_dict() for c in res.checks if c.skipped],
            }
            ok = ok and res.passed
    report["pass"] = ok
    path = write_json(report, Path(cfg.output_dir) / "verify_report.json")
    print(f"verify: {'PASS' if ok else 'FAIL'} ({path})")
    return EXIT_OK if ok else EXIT_FAIL


def _stats_one(cfg: RunConfig, seed: int, workers, out: Path, tag: str) -> dict:
    st = cfg.stats
    recs = run_ensemble(cfg.trajectory_config(seed=seed), cfg.n_trajectories, workers)
    theta0 = cfg.initial_state
    born = born_rule_test(
        recs,
        theta0,
        alpha=float(st.get("alpha", 0.01)),
        unconverged_cap=float(st.get("unconverged_cap", 0.01)),
    )
    lud = luders_batch_check(recs, theta0, delta=cfg.luders_delta)
    res = {"seed": seed, "born": born.to_dict(), "luders": lud.to_dict()}
    ok = lud.passed
    if cfg.track_blocks:
        drift = max(r.block_drift for r in recs)
        res["max_block_drift"] = drift
        ok = ok and drift <= BLOCK_DRIFT_TOL
    model = cfg.model
    if isinstance(model, GaussianModel):
        M = int(st.get("ym_M", cfg.n_steps))
        rep = ym_from_records(recs, M)
        cmp_rep = ym_compare(rep, ym_pdf("repeated", M, theta0, model))
        res["ym_repeated"] = cmp_rep.to_dict()
        res["ym_repeated"]["kde_modes"] = count_modes(rep.values)
        ok = ok and cmp_rep.passed
        bins = int(st.get("hist_bins", 60))
        write_histogram_csv(histogram(rep.values, bins), out / f"ym_repeated{tag}.csv")
        if st.get("ensemble_control", True):
            ens = ensemble_mode_sampler(theta0, model, M, cfg.n_trajectories, seed + 1)
            e = ym_compare(ens, ym_pdf("ensemble", M, theta0, model, exact_variance=True))
            res["ym_ensemble"] = e.to_dict()
            res["ym_ensemble"]["kde_modes"] = count_modes(ens.values)
            ok = ok and e.passed
            write_histogram_csv(histogram(ens.values, bins), out / f"ym_ensemble{tag}.csv")
    else:
        fp = asymptotic_fixed_point_check([r.final_state for r in recs], model, epsilon=cfg.epsilon)
        res["fixed_point"] = {
            "pass": fp.passed,
            "n_pending": fp.n_pending,
            "contradictions": fp.contradictions,
            "indistinguishable_pairs": fp.indistinguishable_pairs,
        }
        mreps = martingale_reports(theta0, model)
        res["martingale"] = [
            {"quantity": m.quantity, "residual": m.exact_onestep_residual, "pass": m.passed, **m.info} for m in mreps
        ]
        ok = ok and fp.passed and all(m.passed for m in mreps)
    res["other_pass"] = bool(ok)
    res["pass"] = bool(ok and born.passed)
    return res


def cmd_stats(args) -> int:
    cfg = _load(args, "stats")
    out = Path(cfg.output_dir)
    sweep = int(cfg.stats.get("seed_sweep", 1))
    runs = []
    for k in range(sweep):
        tag = "" if sweep == 1 else f"_seed{cfg.seed + k}"
        runs.append(_stats_one(cfg, cfg.seed + k, args.workers, out, tag))
    report = {"config": resolved_document(cfg), "runs": runs}
    if sweep == 1:
        ok = runs[0]["pass"]
    else:
        # Born gates fail at rate alpha by design; allow binomial + 3 sigma
        alpha = float(cfg.stats.get("alpha", 0.01))
        n_fail = sum(not r["born"]["pass"] for r in runs)
        allowed = sweep * alpha + 3.0 * np.sqrt(sweep * alpha * (1 - alpha))
        report["sweep"] = {
            "seeds": [r["seed"] for r in runs],
            "born_p_values": [r["born"]["p_value"] for r in runs],
            "born_failures": n_fail,
            "born_failures_allowed": allowed,
            "other_failures": sum(not r["other_pass"] for r in runs),
        }
        ok = n_fail <= allowed and all(r["other_pass"] for r in runs)
    report["pass"] = ok
    path = write_json(report, out / "stats_report.json")
    print(f"stats: {'PASS' if ok else 'FAIL'} ({path})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_demo(args) -> int:
    from . import fixtures as fx

    out = Path(args.out or "demo_out")
    seed = fx.SEED if args.seed is None else args.seed
    scale = 0.2 if args.quick else 1.0

    def n(x):
        return max(100, int(x * scale))

    col = fx.collapse_experiment(N=n(5000), seed=seed, workers=args.workers)
    dec = fx.decay_experiment(N=n(10_000), seed=seed, workers=args.workers)
    deg = fx.degenerate_experiment(N=n(3000), seed=seed, workers=args.workers)
    gau = [fx.gaussian_experiment(d, N=n(2000), seed=seed, workers=args.workers) for d in (0.5, 4.0)]
    for g in gau:
        write_histogram_csv(histogram(g.repeated_values, 60), out / f"ym_repeated_delta{g.delta:g}.csv")
        write_histogram_csv(histogram(g.ensemble_values, 60), out / f"ym_ensemble_delta{g.delta:g}.csv")
    report = {
        "seed": seed,
        "collapse": col.summary(),
        "decay": dec.summary(),
        "degenerate": deg.summary(),
        "gaussian": [g.summary() for g in gau],
    }
    lines = [
        ("qubit collapse", col.collapse_passed),
        ("Born frequencies", col.born_passed),
        ("off-diagonal decay", dec.passed),
        ("degenerate Lüders", deg.passed),
        *[(f"Gaussian y_M, delta={g.delta:g}", g.passed) for g in gau],
    ]
    ok = all(p for _, p in lines)
    report["pass"] = ok
    write_json(report, out / "demo_report.json")
    for name, p in lines:
        print(f"{'PASS' if p else 'FAIL'}  {name}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnd-walk", description="Repeated QND measurement trajectories.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, needs_cfg in (
        ("simulate", cmd_simulate, True),
        ("verify", cmd_verify, True),
        ("stats", cmd_stats, True),
        ("demo", cmd_demo, False),
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=needs_cfg, help="run configuration JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--steps", type=int, default=None, help="override n_steps")
        sp.add_argument("--trajectories", type=int, default=None, help="override n_trajectories")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (default: QND_WALK_THREADS or CPU count)")
        if name == "demo":
            sp.add_argument("--quick", action="store_true", help="run at a fifth of the reference sizes")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc} (trajectories {list(exc.indices)}, step {exc.step})", file=sys.stderr)
        return EXIT_ABORT
    except (ValidationError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

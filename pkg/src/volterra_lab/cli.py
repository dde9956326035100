"""Command line interface.

Verbs
-----
run <config>           execute the configured pipeline, write reports (JSON),
                       plot tables (CSV), and a replayable run archive
replay <archive>       re-run the archived configuration and verify that the
                       ensemble statistics match bit for bit
check-kernel <config>  kernel assumption certificates only (no simulation)
mollify-demo <config>  mollification quality tables for the configured
                       coefficients

Flags: --threads (worker hint; must not and does not change results),
--out (output directory override), --seed (seed override),
--format {csv,json}.

Exit codes: 0 all requested checks passed, 1 a check failed, 2 usage or
runtime error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, martingale
from .config import RunConfig, load_config, parse_config
from .coefficients import verify_mollified_properties
from .engine import simulate, simulate_mollified_sequence
from .errors import ConfigError, VolterraError
from .io import (
    compare_statistics,
    ensemble_statistics,
    export_csv,
    read_archive,
    write_archive,
)
from .kernels import (
    check_base_integrability,
    check_regularity,
    check_structural,
    dyadic_pair_grid,
)
from .reports import _json_default

_SIM_CHECKS = {"martingale", "qv", "holder", "moments", "ibp", "fubini"}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _apply_threads(args.threads)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VolterraError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-lab",
        description="simulate stochastic Volterra equations and certify their hypotheses",
    )
    parser.add_argument("--threads", type=int, default=0,
                        help="worker count hint; results never depend on it")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured pipeline")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--format", choices=("csv", "json"), default=None,
                       help="restrict report output to one format")
    p_run.add_argument("--export-paths", action="store_true",
                       help="also write the full ensemble as CSV")
    p_run.set_defaults(handler=_cmd_run)

    p_rep = sub.add_parser("replay", help="verify an archived run bit for bit")
    p_rep.add_argument("archive")
    p_rep.set_defaults(handler=_cmd_replay)

    p_ck = sub.add_parser("check-kernel", help="kernel assumption certificates only")
    p_ck.add_argument("config")
    p_ck.add_argument("--out", default=None)
    p_ck.add_argument("--seed", type=int, default=None)
    p_ck.set_defaults(handler=_cmd_check_kernel)

    p_md = sub.add_parser("mollify-demo", help="mollification quality tables")
    p_md.add_argument("config")
    p_md.add_argument("--out", default=None)
    p_md.add_argument("--seed", type=int, default=None)
    p_md.set_defaults(handler=_cmd_mollify_demo)
    return parser


def _apply_threads(threads: int) -> None:
    # every sum in the engine is per-path sequential, so the thread count
    # cannot change results; clamp to what the machine offers
    if threads and threads > 0:
        try:
            import numba

            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        except Exception:
            pass


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    formats = (args.format,) if args.format else cfg.formats
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config_sha = hashlib.sha256(cfg.text.encode()).hexdigest()

    reports: dict[str, list] = {}
    overall = True

    if "kernel-assumptions" in cfg.checks:
        reports["kernel-assumptions"] = _kernel_reports(cfg)

    ensemble = None
    if _SIM_CHECKS & set(cfg.checks):
        ensemble = simulate(cfg.sim, cfg.mu, cfg.sigma, cfg.k_mu, cfg.k_sigma)
        for line in ensemble.run_log:
            print(f"note: {line}")

    if "martingale" in cfg.checks:
        reports["martingale"] = martingale.run_battery(ensemble, cfg.mu, cfg.sigma)
    if "qv" in cfg.checks:
        reports["qv"] = [martingale.qv_test(ensemble, cfg.sigma)]
    if "holder" in cfg.checks:
        reports["holder"] = [diagnostics.holder_estimate(
            ensemble, cfg.check_params["holder_p"], cfg.x0,
            gamma=cfg.check_params.get("holder_gamma"),
        )]
    if "moments" in cfg.checks:
        res = diagnostics.moment_sup(ensemble, cfg.check_params["moments_q"])
        from .reports import CheckReport

        reports["moments"] = [CheckReport(
            check_id="moment-supremum",
            passed=bool(np.isfinite(res.value)),
            measured={"value": res.value, "t_at_max": res.t_at_max,
                      "stderr": res.stderr, "q": res.q},
        )]
    if "ibp" in cfg.checks:
        reports["ibp"] = [_identity_report(
            "pathwise-parts-identity", cfg, ensemble, cfg.check_params["ibp_paths"],
            lambda b: diagnostics.ibp_identity_residual(b, cfg.x0, cfg.k_mu,
                                                        cfg.k_sigma, cfg.mu),
        )]
    if "fubini" in cfg.checks:
        reports["fubini"] = [_identity_report(
            "integrated-convolution-identity", cfg, ensemble, cfg.check_params["fubini_paths"],
            lambda b: diagnostics.fubini_identity_residual(b, cfg.x0, cfg.k_mu, cfg.k_sigma),
        )]
    if "converge" in cfg.checks:
        seq = simulate_mollified_sequence(
            cfg.sim, cfg.mu, cfg.sigma, cfg.k_mu, cfg.k_sigma,
            levels=cfg.check_params["converge_levels"],
        )
        reports["converge"] = [diagnostics.convergence_report(
            seq, probe_time=cfg.check_params["converge_probe"])]

    for name, reps in reports.items():
        ok = all(_report_passed(r) for r in reps)
        overall = overall and ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        if "json" in formats:
            _write_json(outdir / f"report_{name}.json", reps, config_sha)
        if "csv" in formats:
            _write_flat_csv(outdir / f"table_{name}.csv", name, reps)

    if ensemble is not None:
        write_archive(outdir / "run.archive", cfg.text,
                      ensemble_statistics(ensemble),
                      extra_meta={"config_sha256": config_sha})
        if args.export_paths:
            export_csv(ensemble, outdir / "paths.csv")
    else:
        write_archive(outdir / "run.archive", cfg.text, {},
                      extra_meta={"config_sha256": config_sha})

    return 0 if overall else 1


def _kernel_reports(cfg: RunConfig) -> list:
    T = cfg.sim.T
    grid = np.linspace(T / 16.0, T, 16)
    reps = [check_base_integrability(cfg.k_mu, cfg.k_sigma, grid)]
    if "regularity" in cfg.check_params:
        reps.append(check_regularity(cfg.k_mu, cfg.k_sigma,
                                     cfg.check_params["regularity"],
                                     dyadic_pair_grid(T)))
    reps.append(check_structural(cfg.k_mu, cfg.k_sigma,
                                 cfg.check_params.get("p_struct", 4.0)))
    return reps


def _identity_report(check_id, cfg, ensemble, n_paths, residual_fn):
    from .reports import CheckReport

    n = min(n_paths, ensemble.n_paths)
    residuals = [residual_fn(ensemble.bundle(p)) for p in range(n)]
    return CheckReport(
        check_id=check_id,
        passed=all(np.isfinite(residuals)),
        measured={
            "residuals": residuals,
            "median_residual": float(np.median(residuals)),
            "max_residual": float(np.max(residuals)),
        },
        grid_meta={"n_paths": n, "n_steps": ensemble.n_steps},
    )


def _report_passed(report) -> bool:
    if hasattr(report, "passed"):
        return bool(report.passed)
    if hasattr(report, "monotone"):
        return bool(report.monotone)
    raise TypeError(f"cannot judge report {report!r}")


def _write_json(path, reps, config_sha) -> None:
    payload = []
    for r in reps:
        d = r.to_dict()
        d["config_sha256"] = config_sha
        payload.append(d)
    with open(path, "w") as fh:
        json.dump(payload if len(payload) > 1 else payload[0], fh, indent=2,
                  default=_json_default)
        fh.write("\n")


def _flat_rows(name, report):
    """Rows (quantity, scale, value, stderr) for plotting."""
    rows = []
    if name == "martingale":
        for e in report.entries:
            quantity = f"z[{report.f_label}|{e['statistic']}]"
            rows.append((quantity, e["lag"][1], e["z"], 1.0))
    elif name == "holder":
        for gap, moment in zip(report.gaps, report.moments):
            rows.append((f"increment_moment_p{report.p:g}", gap, moment, ""))
        rows.append(("beta_hat", "", report.beta_hat, ""))
    elif name == "converge":
        for d in report.pair_stats:
            lev = f"{d['levels'][0]}->{d['levels'][1]}"
            rows.append(("median_sup_distance", lev, d["median_sup"], ""))
            rows.append(("q90_sup_distance", lev, d["q90_sup"], ""))
            rows.append(("marginal_cdf_distance", lev, d["cdf_distance"], ""))
    elif hasattr(report, "measured"):
        for key, val in report.measured.items():
            if isinstance(val, (int, float)):
                rows.append((key, "", val, ""))
            elif isinstance(val, list) and all(isinstance(v, (int, float)) for v in val):
                for i, v in enumerate(val):
                    rows.append((key, i, v, ""))
    return rows


def _write_flat_csv(path, name, reps) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "scale", "value", "stderr"])
        for r in reps:
            writer.writerows(_flat_rows(name, r))


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def _cmd_replay(args) -> int:
    config_text, manifest = read_archive(args.archive)
    stored = manifest["statistics"]
    if not stored:
        print("archive holds no ensemble statistics; nothing to verify")
        return 0
    cfg = parse_config(config_text)
    ensemble = simulate(cfg.sim, cfg.mu, cfg.sigma, cfg.k_mu, cfg.k_sigma)
    fresh = ensemble_statistics(ensemble)
    compare_statistics(stored, fresh)
    print(f"replay matches: {len(stored)} statistics identical")
    return 0


# ---------------------------------------------------------------------------
# check-kernel / mollify-demo
# ---------------------------------------------------------------------------

def _cmd_check_kernel(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    reps = _kernel_reports(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    config_sha = hashlib.sha256(cfg.text.encode()).hexdigest()
    _write_json(outdir / "report_kernel-assumptions.json", reps, config_sha)
    ok = True
    for r in reps:
        print(r.summary())
        ok = ok and r.passed
    return 0 if ok else 1


def _cmd_mollify_demo(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    levels = cfg.check_params.get("converge_levels", [2, 4, 8, 16])
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    ok = True
    for label, coeff in (("mu", cfg.mu), ("sigma", cfg.sigma)):
        rep = verify_mollified_properties(coeff, levels, r=4.0)
        ok = ok and rep.passed
        print(f"[{'PASS' if rep.passed else 'FAIL'}] mollify {label} ({coeff.label})")
        for n, err, lip in zip(rep.measured["levels"], rep.measured["sup_errors"],
                               rep.measured["lipschitz_constants"]):
            print(f"  level {n:3d}: sup|f - f_n| = {err:.3e}   empirical Lipschitz = {lip:.3e}")
        _write_json(outdir / f"report_mollify_{label}.json", [rep],
                    hashlib.sha256(cfg.text.encode()).hexdigest())
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

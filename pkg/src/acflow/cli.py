"""Command line entry point: ``acflow {simulate,sweep,verify,scan}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config, serialize_config
from .errors import AcflowError, ConfigError, EmptyInterfaceError
from .experiments import (
    RunResult,
    SweepReport,
    _json_default,
    auto_anchors,
    density_suite,
    extract_interface,
    probe_vector_fields,
    run_canonical,
    scan_run,
    sweep_clauses,
)
from .manifold import ChartGrid, injectivity_radius
from .measure import (
    MonotonicityKernel,
    energy_measure,
    fit_monotonicity,
    lemma42_suite,
    monotonicity_G,
    write_csv,
)
from .phasefield import (
    AllenCahnStepper,
    PhaseField,
    dissipation_identity_check,
    dissipation_rhs,
    load_checkpoint,
    read_checkpoint_header,
)
from .varifold import first_variation_identity_check, ibp_identity_check, lemma74_bounds_check

EQUIPARTITION_TOL = 0.25
IBP_REL_TOL = 1e-2


# --------------------------------------------------------------------------
# run-level assertions
# --------------------------------------------------------------------------
def run_checks(row: dict, cfg: RunConfig) -> dict[str, bool]:
    """Pass/fail of the per-run contracts recorded in a summary row."""
    checks = {
        "dissipation_identity": max(row["dissipation_rel_err_one"], row["dissipation_rel_err_bump"]) <= 0.05,
        "semidecreasing_bound": row["semi_C"] <= 1.1 * row["semi_bound"],
        "monotonicity_fit": row["mono_violations"] == 0,
        "brakke_residual": row["brakke_violation_fraction"] <= 0.05,
        "untangented_mass": row["untangented_max"] <= 1e-3,
        "gradient_bound": row["grad_eps_max"] <= 1.3 / math.sqrt(2.0),
        "energy_nonincreasing": row["energy_increase_max"] <= 1e-8,
    }
    if np.isfinite(row.get("radius_rel_err", math.nan)):
        tol = 0.05 if cfg.metric.kind == "sphere" else max(0.02, 2 * row["eps"])
        checks["radius"] = row["radius_rel_err"] <= tol
    return checks


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _fail(out: Path | None, command: str, failures: list[str], extra: dict | None = None) -> int:
    manifest = {"command": command, "ok": False, "failures": failures, **(extra or {})}
    text = json.dumps(manifest, indent=2, default=_json_default)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "failure.json").write_text(text)
    print(text, file=sys.stderr)
    return 1


def _write_run(res: RunResult, out: Path, tag: str) -> None:
    write_csv(out / f"diagnostics_{tag}.csv", "run-diagnostics", res.rows)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def cmd_simulate(cfg: RunConfig, out: Path, args) -> int:
    res = run_canonical(cfg, cfg.eps_list[0], out_dir=out, keep_snapshots=False)
    _write_run(res, out, f"eps{res.eps:g}")
    checks = run_checks(res.summary, cfg)
    _write_json(out / "summary.json", {"ok": all(checks.values()), "checks": checks, "summary": res.summary,
                                       "ledger": res.ledger.dumps()})
    (out / "constants.txt").write_text(res.ledger.dumps())
    failures = [k for k, v in checks.items() if not v]
    if failures:
        return _fail(out, "simulate", failures, {"summary": res.summary})
    print(json.dumps({"ok": True, "checks": checks}, default=_json_default))
    return 0


def _sweep_one(args):
    text, eps, out = args
    from .config import load_config_text

    cfg = load_config_text(text)
    res = run_canonical(cfg, eps, out_dir=out, keep_snapshots=False)
    return res.summary, res.rows


def cmd_sweep(cfg: RunConfig, out: Path, args) -> int:
    eps = cfg.eps_list
    jobs = [(serialize_config(cfg), e, str(out)) for e in eps]
    if args.threads > 1 and len(eps) > 1:
        with ProcessPoolExecutor(max_workers=min(args.threads, len(eps))) as ex:
            outs = list(ex.map(_sweep_one, jobs))
    else:
        outs = [_sweep_one(j) for j in jobs]
    rows = [o[0] for o in outs]
    for (summary, diag), e in zip(outs, eps):
        write_csv(out / f"diagnostics_eps{e:g}.csv", "run-diagnostics", diag)
    rep = SweepReport(rows, sweep_clauses(rows))
    rep.write(out)
    failures = [k for k, v in rep.clauses.items() if not v]
    if failures:
        return _fail(out, "sweep", failures)
    print(json.dumps({"ok": True, "clauses": rep.clauses}))
    return 0


def _load_checkpoints(cfg: RunConfig, out: Path) -> dict[float, list[PhaseField]]:
    files = sorted((out / "checkpoints").glob("*.acf"))
    if not files:
        raise AcflowError(f"no checkpoints under {out / 'checkpoints'}")
    grids: dict[float, ChartGrid] = {}
    by_eps: dict[float, list[PhaseField]] = {}
    well = cfg.double_well()
    for f in files:
        eps = read_checkpoint_header(f)["eps"]
        if eps not in grids:
            grids[eps] = ChartGrid(cfg.metric_spec(eps))
        by_eps.setdefault(eps, []).append(load_checkpoint(f, grids[eps], well))
    for v in by_eps.values():
        v.sort(key=lambda s: s.t)
    return by_eps


def verify_state(cfg: RunConfig, s: PhaseField, anchors, R0: float) -> dict[str, float]:
    """Invariant suite on one stored state; values are normalized slacks or errors."""
    g = s.grid
    mu = energy_measure(s)
    xi = 0.5 * s.eps * g.grad_norm_sq(s.u) - s.well.F(s.u) / s.eps
    out = {"t": s.t, "equipartition": float(np.dot(np.abs(xi), g.w)) / max(mu.mass, 1e-300)}
    phi = np.ones(g.n_nodes)
    dt = cfg.dt(s.eps)
    nxt = AllenCahnStepper(g, s.eps, dt, s.well)(s)
    B = 0.5 * (dissipation_rhs(s, phi) + dissipation_rhs(nxt, phi))
    out["dissipation"] = dissipation_identity_check(s, nxt, phi, dt) / max(abs(B), 1e-12)
    for name, slack in lemma74_bounds_check(s, phi).items():
        out[f"lemma74_{name}"] = slack["slack"] / slack["scale"]
    rep = lemma42_suite(mu, R0, [y for y, _ in anchors], [0.05, 0.1, 0.2], [0.1, 0.2, 0.4, 0.8])
    for k, v in rep.clauses.items():
        out[f"lemma42_{k}"] = v
    if g.kind != "sphere":
        try:
            est = extract_interface(s)
            fields = probe_vector_fields(g, est.center, est.radius)
        except EmptyInterfaceError:
            fields = {}
        fv, ibp = 0.0, 0.0
        for Y in fields.values():
            r = first_variation_identity_check(s, Y)
            fv = max(fv, r["residual"])
            i = ibp_identity_check(s, Y)
            ibp = max(ibp, i["residual"] / (abs(i["velocity_term"]) + abs(i["stress_term"]) + 1e-12))
        out["first_variation"] = fv
        out["ibp"] = ibp
    return out


def state_failures(v: dict[str, float]) -> list[str]:
    bad = []
    if v["equipartition"] > EQUIPARTITION_TOL:
        bad.append("equipartition")
    if v["dissipation"] > 0.05:
        bad.append("dissipation")
    for k, val in v.items():
        if k.startswith(("lemma74_", "lemma42_")) and val < -1e-3:
            bad.append(k)
    if v.get("first_variation", 0.0) > 0.02:
        bad.append("first_variation")
    if v.get("ibp", 0.0) > IBP_REL_TOL:
        bad.append("ibp")
    return bad


def cmd_verify(cfg: RunConfig, out: Path, args) -> int:
    by_eps = _load_checkpoints(cfg, out)
    rows, failures = [], []
    for eps, states in by_eps.items():
        g = states[0].grid
        R0 = injectivity_radius(g.spec, g)
        anchors = auto_anchors(cfg, g, cfg.T) if cfg.anchors == "auto" else [
            (g.node_at(*a.y), a.s) for a in cfg.anchors]
        for s in states:
            v = verify_state(cfg, s, anchors, R0)
            v["eps"] = eps
            rows.append(v)
            failures.extend(f"eps={eps:g} t={s.t:.6g}: {b}" for b in state_failures(v))
        t = np.array([s.t for s in states])
        if t.size >= 2:
            series = []
            for y, sa in anchors:
                m = t < sa
                G = [monotonicity_G(energy_measure(s), MonotonicityKernel(y, sa, R0, g), s.t)
                     for s, keep in zip(states, m) if keep]
                series.append((t[m], G, sa))
            fit = fit_monotonicity(series)
            if fit.violations:
                failures.append(f"eps={eps:g}: monotonicity fit has {fit.violations} violations")
    write_csv(out / "verify.csv", "verify-report", rows, sorted({k for r in rows for k in r}))
    if failures:
        return _fail(out, "verify", failures)
    print(json.dumps({"ok": True, "states": len(rows)}))
    return 0


def cmd_scan(cfg: RunConfig, out: Path, args) -> int:
    eps = cfg.eps_list[-1]
    res = run_canonical(cfg, eps, keep_snapshots=True)
    sc = scan_run(res)
    dens = density_suite(res)
    co, sup = sc["clearing_out"], sc["support"]
    write_csv(out / "clearing_out.csv", "clearing-out-scan",
              [vars(p) for p in co.probes], ["y", "s", "t", "G", "min_abs_u", "ok"])
    report = {
        "eps": eps,
        "probes": co.n_probes,
        "hypothesis_probes": co.n_hypothesis,
        "clearing_out_violations": len(co.violations),
        "support_off": sup["n_off"],
        "support_on": sup["n_on"],
        "support_off_violations": len(sup["off_violations"]),
        "support_on_violations": len(sup["on_violations"]),
        "forward_density_max": sc["forward_density_max"],
        "D0": dens["D0"],
        "D0_cap": 3 * dens["sigma"],
        "on_interface_density_max": dens["on_interface_max"],
    }
    _write_json(out / "scan.json", report)
    failures = []
    if report["clearing_out_violations"]:
        failures.append("clearing_out")
    if report["support_off_violations"] or report["support_on_violations"]:
        failures.append("support_identity")
    if report["D0"] > report["D0_cap"] or report["on_interface_density_max"] > 3:
        failures.append("density_bound")
    if failures and args.strict:
        return _fail(out, "scan", failures, report)
    print(json.dumps({"ok": not failures, "report_only": not args.strict, **report}, default=_json_default))
    return 0


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify, "scan": cmd_scan}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acflow", description="Allen-Cahn mean curvature flow lab")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (default: the config's 'out')")
    p.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")
    p.add_argument("--strict", action="store_true", help="treat report-only scans as assertions")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        return _fail(None, args.command, exc.problems)
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command != "verify":
        (out / "config.yaml").write_text(serialize_config(cfg))
    try:
        return COMMANDS[args.command](cfg, out, args)
    except AcflowError as exc:
        return _fail(out, args.command, [f"{type(exc).__name__}: {exc}"],
                     {"time": getattr(exc, "time", None)})


if __name__ == "__main__":
    sys.exit(main())

"""Batch front-end over the library: model configs in, artifacts out.

Subcommands: solve, verify, couple, simulate, nonuniformity, escape-moments,
report, replay.  Every run writes a self-describing directory of JSON/CSV
artifacts plus a manifest with the fully resolved configuration and artifact
hashes; ``qsd replay RUNDIR`` re-executes from the manifest alone and checks
that every artifact reproduces byte for byte.

Exit codes: 0 success; 2 when at least one recorded verdict fails (an
assumption refuted -- a valid scientific outcome, never conflated with a
crash); 1 on configuration or runtime errors.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .artifacts import (build_exhaustion, build_model, dump_json, load_json,
                        load_exhaustion_config, load_model_config,
                        read_manifest, write_csv, write_manifest)
from .assumptions import (check_dc, check_et, check_mix, check_sv,
                          derive_coupling_constants, eta_sup_bound,
                          lj_certificate, max_escape_rate,
                          verify_mass_retention)
from .coupling import CouplingConstants, CouplingRun
from .errors import (DominationViolatedError, InductionBrokenError,
                     NoConvergenceError, QsdError, SchemaError)
from .generator import point_mass
from .montecarlo import (estimate_dcne_naive, fleming_viot, gillespie,
                         qprocess_simulate)
from .rng import stream
from .spectral import default_t_grid, solve_eigentriple

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REFUTED = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits usage errors with code 2; here 2 means 'assumption
    refuted', so command-line errors are remapped to the error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _mu_config(text):
    """Parse an initial-law flag: delta:K, uniform, or file:PATH (JSON list
    of weights).  File contents are embedded so replay needs no extra files."""
    if text == "uniform":
        return {"kind": "uniform"}
    if text.startswith("delta:"):
        return {"kind": "delta", "state": int(text.split(":", 1)[1])}
    if text.startswith("file:"):
        values = load_json(text.split(":", 1)[1])
        if not isinstance(values, list):
            raise SchemaError("mu file must hold a JSON list of weights")
        return {"kind": "weights", "values": [float(v) for v in values]}
    raise SchemaError(f"cannot parse initial law {text!r} "
                      "(use delta:K, uniform, or file:PATH)")


def _mu_vector(cfg, n):
    kind = cfg["kind"]
    if kind == "uniform":
        return np.full(n, 1.0 / n)
    if kind == "delta":
        state = int(cfg["state"])
        if not 0 <= state < n:
            raise SchemaError(f"mu.state: {state} outside 0..{n - 1}")
        return point_mass(state, n).w
    w = np.asarray(cfg["values"], dtype=float)
    if w.shape != (n,):
        raise SchemaError(f"mu.values: expected {n} weights, got {w.size}")
    return w


def _chain_model(config):
    kind, obj = build_model(config["model"])
    if kind != "chain":
        raise SchemaError("this task needs a chain model; add a 'discretize' "
                          "block to run it on a diffusion")
    return obj


def _diffusion_model(config):
    kind, obj = build_model(config["model"])
    if kind != "diffusion":
        raise SchemaError("this task needs a diffusion model without a "
                          "'discretize' block")
    return obj


# --- task executors ----------------------------------------------------------
# Executors read only the resolved config, so a manifest replays bitwise.

def _exec_solve(config, out):
    gen = _chain_model(config)
    eigen = solve_eigentriple(gen, tol=config["tol"])
    dump_json(os.path.join(out, "eigen.json"), {
        "lambda0": eigen.lambda0, "gap": eigen.gap,
        "residual": eigen.residual, "iterations": eigen.iterations,
        "degenerate": eigen.degenerate, "states": gen.n_states,
        "eta_min": float(eigen.eta.min()), "eta_max": float(eigen.eta.max()),
    })
    write_csv(os.path.join(out, "alpha.csv"), ("state", "weight"),
              list(enumerate(eigen.alpha.w)))
    write_csv(os.path.join(out, "eta.csv"), ("state", "value"),
              list(enumerate(eigen.eta)))
    return EXIT_OK, ["eigen.json", "alpha.csv", "eta.csv"]


def _stress_starts(n, cap=64):
    idx = np.unique(np.linspace(0, n - 1, min(n, cap)).round().astype(int))
    mus = [point_mass(int(i), n).w for i in idx]
    mus.append(np.full(n, 1.0 / n))
    return mus


def _exec_verify(config, out):
    gen = _chain_model(config)
    exh = build_exhaustion(config["exhaustion"])
    p = config["parameters"]
    tol = config["tol"]
    t_mix = float(p["t_mix"])

    eigen = solve_eigentriple(gen, tol=tol)
    grid = default_t_grid(t_mix / 4.0, 8.0 * t_mix, points_per_decade=16)
    retention = verify_mass_retention(gen, exh, _stress_starts(gen.n_states),
                                      grid, tol=tol)
    dump_json(os.path.join(out, "retention.json"), retention.to_json_dict())
    artifacts = ["retention.json", "certificates.json"]

    mix = check_mix(gen, exh, int(retention.chosen["n"]), t_mix, tol=tol)
    certs = {"mix": mix}
    if mix.holds:
        alpha_c = np.asarray(mix.witness["alpha_c"], dtype=float)
        certs["dc"] = check_dc(gen, exh, alpha_c, t_floor=t_mix, tol=tol)
    rho = p.get("rho")
    rho = float(rho) if rho is not None else max_escape_rate(gen, exh)
    p["rho_resolved"] = rho
    certs["et"] = check_et(gen, exh, rho, tol=tol)
    certs["sv"] = check_sv(gen, exh, tol=tol)
    certs["lj"] = lj_certificate(gen)

    all_hold = all(c.holds for c in certs.values()) and len(certs) == 5
    dump_json(os.path.join(out, "certificates.json"), {
        "certificates": [certs[k].to_json_dict()
                         for k in ("mix", "dc", "et", "sv", "lj")
                         if k in certs],
        "all_hold": all_hold,
    })
    if not all_hold:
        return EXIT_REFUTED, artifacts

    artifacts.append("derivation.json")
    try:
        consts = derive_coupling_constants(gen, exh, certs, eigen=eigen,
                                           retention=retention, tol=tol)
    except (ValueError, DominationViolatedError, NoConvergenceError) as exc:
        dump_json(os.path.join(out, "derivation.json"),
                  {"ok": False, "reason": str(exc)})
        return EXIT_REFUTED, artifacts

    bound = eta_sup_bound(gen, eigen, mix, exh, consts)
    dump_json(os.path.join(out, "derivation.json"), {"ok": True, "reason": ""})
    dump_json(os.path.join(out, "constants.json"), {
        **consts.to_json_dict(),
        "zeta": consts.zeta, "c_bar": consts.c_bar,
        "bound_constant": consts.bound_constant,
        "lambda0": eigen.lambda0, "gap": eigen.gap,
        "rho_et": rho, "rho_sv": certs["sv"].constants["rho_sv"],
        "e_T": certs["et"].constants["e_T"],
        "eta_bound": bound,
    })
    artifacts.append("constants.json")
    return (EXIT_OK if bound["holds"] else EXIT_REFUTED), artifacts


def _exec_couple(config, out):
    gen = _chain_model(config)
    p = config["parameters"]
    consts = CouplingConstants.from_json_dict(p["constants"])
    mu = _mu_vector(p["mu"], gen.n_states)
    run = CouplingRun(gen, consts, mu, float(p["t_h"]), tol=config["tol"])
    holds, reason, worst = True, "", math.nan
    try:
        run.run()
        worst = run.check_domination()
    except (InductionBrokenError, DominationViolatedError) as exc:
        holds, reason = False, str(exc)
    write_csv(os.path.join(out, "trace.csv"),
              ("j", "c", "r", "nu_min", "ser_deviation", "mass_deviation"),
              [(row["j"], row["c"], row["r"], row["nu_min"],
                row["ser_deviation"], row["mass_deviation"])
               for row in run.trace])
    floor = run.minorizing_at_horizon().w
    law = run.law_at_horizon().w
    write_csv(os.path.join(out, "minorant.csv"), ("state", "floor", "law"),
              [(i, floor[i], law[i]) for i in range(gen.n_states)])
    dump_json(os.path.join(out, "domination.json"), {
        "holds": holds, "reason": reason,
        "worst_slack": None if math.isnan(worst) else worst,
        "J": run.J, "t_h": float(p["t_h"]), "t_rem": run.t_rem,
        "steps_accepted": len(run.trace), "clamped": run.clamped,
        "c_bar": consts.c_bar, "zeta": consts.zeta,
        "residual": (1.0 - consts.c_bar) ** run.J,
        "floor_mass": float(floor.sum()),
    })
    artifacts = ["trace.csv", "minorant.csv", "domination.json"]
    return (EXIT_OK if holds else EXIT_REFUTED), artifacts


def _exec_simulate(config, out):
    p = config["parameters"]
    seed = config["seed"]
    kind = p["kind"]
    if kind == "diffusion":
        from .models import simulate_diffusion
        spec = _diffusion_model(config)
        traj = simulate_diffusion(spec, (np.asarray(p["x0"], dtype=float),
                                         float(p["n0"])),
                                  float(p["dt"]), float(p["t"]), stream(seed))
        header = ("time",) + tuple(f"x{i}" for i in range(spec.d)) + ("n",)
        rows = [(traj.times[k], *traj.x[k], traj.n[k])
                for k in range(len(traj.n))]
        write_csv(os.path.join(out, "trajectory.csv"), header, rows)
        dump_json(os.path.join(out, "result.json"), {
            "absorbed": traj.absorbed, "cause": traj.cause,
            "extinction_time": traj.extinction_time if traj.absorbed else None,
            "final_n": float(traj.n[-1]),
        })
        return EXIT_OK, ["trajectory.csv", "result.json"]

    gen = _chain_model(config)
    if kind == "gillespie":
        path, ext = gillespie(gen, int(p["x0"]), float(p["t"]), stream(seed))
        write_csv(os.path.join(out, "path.csv"), ("time", "state"), path)
        dump_json(os.path.join(out, "result.json"),
                  {"events": len(path), "extinction_time": ext})
        return EXIT_OK, ["path.csv", "result.json"]
    if kind == "fv":
        mu = _mu_vector(p["mu"], gen.n_states)
        ens = fleming_viot(gen, mu, float(p["t"]), int(p["particles"]), seed)
        write_csv(os.path.join(out, "law.csv"), ("state", "weight"),
                  list(enumerate(ens.empirical_law().w)))
        dump_json(os.path.join(out, "result.json"), {
            "lambda0_estimate": ens.lambda0_estimate(float(p["window"])),
            "resamples": ens.resample_log, "clock": ens.clock,
            "particles": ens.n_particles,
        })
        return EXIT_OK, ["law.csv", "result.json"]
    if kind == "qprocess":
        eigen = solve_eigentriple(gen, tol=config["tol"])
        t_max = math.inf if p["t"] is None else float(p["t"])
        steps = None if p["steps"] is None else int(p["steps"])
        path, occ = qprocess_simulate(gen, eigen, int(p["x0"]), t_max, seed,
                                      max_steps=steps)
        write_csv(os.path.join(out, "occupation.csv"), ("state", "weight"),
                  list(enumerate(occ.w)))
        dump_json(os.path.join(out, "result.json"),
                  {"events": len(path), "lambda0": eigen.lambda0})
        return EXIT_OK, ["occupation.csv", "result.json"]
    if kind == "naive":
        mu = _mu_vector(p["mu"], gen.n_states)
        pv, ess = estimate_dcne_naive(gen, mu, float(p["t"]), int(p["paths"]),
                                      seed, n_workers=config["threads"])
        write_csv(os.path.join(out, "law.csv"), ("state", "weight"),
                  list(enumerate(pv.w)))
        dump_json(os.path.join(out, "result.json"),
                  {"ess": ess, "paths": int(p["paths"])})
        return EXIT_OK, ["law.csv", "result.json"]
    raise SchemaError(f"unknown simulate kind {kind!r}")


def _exec_nonuniformity(config, out):
    from .models import nonuniformity_experiment
    gen = _chain_model(config)
    p = config["parameters"]
    rep = nonuniformity_experiment(gen, float(p["t"]), float(p["eps"]),
                                   tol=config["tol"])
    ok = rep["witness_height"] is not None and \
        all(r["within_bound"] and r["decreasing"] for r in rep["tn_rows"])
    dump_json(os.path.join(out, "report.json"), {
        "t": rep["t"], "eps": rep["eps"], "t_v": rep["t_v"],
        "bound_constant": rep["bound_constant"],
        "witness_height": rep["witness_height"],
        "warnings": rep["warnings"], "holds": ok,
        "states": gen.n_states,
    })
    write_csv(os.path.join(out, "tv_rows.csv"),
              ("height", "tv", "top_mass", "truncated"),
              [(r["height"], r["tv"], r["top_mass"], r["truncated"])
               for r in rep["tv_rows"]])
    write_csv(os.path.join(out, "tn_rows.csv"),
              ("n", "height", "p_exit", "bound", "within_bound", "decreasing"),
              [(r["n"], r["height"], r["p_exit"], r["bound"],
                r["within_bound"], r["decreasing"]) for r in rep["tn_rows"]])
    artifacts = ["report.json", "tv_rows.csv", "tn_rows.csv"]
    return (EXIT_OK if ok else EXIT_REFUTED), artifacts


def _exec_escape(config, out):
    from .models import (TransitoryDecomposition, combine_escape_bounds,
                         estimate_linked_constants)
    spec = _diffusion_model(config)
    p = config["parameters"]
    decomp = TransitoryDecomposition(y_inf=float(p["y_inf"]),
                                     n_c=float(p["n_c"]),
                                     y_lo=float(p["y_lo"]))
    est = estimate_linked_constants(spec, decomp, float(p["rho"]),
                                    int(p["paths"]), config["seed"],
                                    dt=float(p["dt"]),
                                    t_cap=float(p["t_cap"]))
    combined = combine_escape_bounds(
        c_y=est["TYinf"]["C"], c_x=est["TXinf"]["C"], c_0=est["T0"]["C"],
        eps_x=est["TXinf"]["eps"], eps_0=est["T0"]["eps"])
    inequalities = {
        "TYinf": est["TYinf"]["E"] <= est["TYinf"]["C"]
        * (1.0 + est["TXinf"]["E"]),
        "TXinf": est["TXinf"]["E"] <= est["TXinf"]["C"]
        * (1.0 + est["T0"]["E"]) + est["TXinf"]["eps"] * est["TYinf"]["E"],
        "T0": est["T0"]["E"] <= est["T0"]["C"] + est["T0"]["eps"]
        * (est["TYinf"]["E"] + est["TXinf"]["E"]),
    }
    ok = all(inequalities.values()) and combined["thresholds_ok"] \
        and combined["bound_holds"]
    dump_json(os.path.join(out, "escape.json"), {
        "decomposition": {"y_inf": decomp.y_inf, "n_c": decomp.n_c,
                          "y_lo": decomp.y_lo},
        "constants": est, "combined": combined,
        "inequalities": inequalities, "holds": ok,
    })
    return (EXIT_OK if ok else EXIT_REFUTED), ["escape.json"]


_TASKS = {
    "solve": _exec_solve,
    "verify": _exec_verify,
    "couple": _exec_couple,
    "simulate": _exec_simulate,
    "nonuniformity": _exec_nonuniformity,
    "escape-moments": _exec_escape,
}


def _execute(config, out):
    os.makedirs(out, exist_ok=True)
    return _TASKS[config["task"]](config, out)


# --- reporting ---------------------------------------------------------------

def _md_table(header, rows):
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(v) for v in row) + " |")
    return "\n".join(lines)


def _fmt(v, digits=6):
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def _report_markdown(run_dir, manifest):
    cfg = manifest["config"]
    task = cfg["task"]
    lines = [f"# qsd run report: {task}", "",
             f"- tool version: {manifest['version']}",
             f"- seed: {cfg['seed']}, threads: {cfg['threads']}, "
             f"tol: {_fmt(cfg['tol'])}", ""]

    def art(name):
        path = os.path.join(run_dir, name)
        return load_json(path) if os.path.exists(path) else None

    if task == "solve":
        eig = art("eigen.json")
        lines += ["## Eigen-triple", "",
                  _md_table(("quantity", "value"), [
                      ("lambda0", _fmt(eig["lambda0"], 10)),
                      ("spectral gap", _fmt(eig["gap"], 10)),
                      ("residual norm", _fmt(eig["residual"], 3)),
                      ("iterations", eig["iterations"]),
                      ("eta range", f"[{_fmt(eig['eta_min'])}, "
                                    f"{_fmt(eig['eta_max'])}]")]), ""]
    elif task == "verify":
        certs = art("certificates.json")
        rows = []
        for c in certs["certificates"]:
            mark = "holds" if c["holds"] else "**FAILS**"
            keys = ", ".join(f"{k}={_fmt(v)}" for k, v in
                             sorted(c["constants"].items())
                             if not isinstance(v, (list, dict)))
            rows.append((c["name"], mark, keys))
        lines += ["## Assumption certificates", "",
                  _md_table(("certificate", "verdict", "constants"), rows), ""]
        consts = art("constants.json")
        if consts is not None:
            lines += ["## Derived constants", "",
                      _md_table(("symbol", "value"), [
                          ("lambda0", _fmt(consts["lambda0"], 10)),
                          ("zeta", _fmt(consts["zeta"], 10)),
                          ("C(n, xi)", _fmt(consts["bound_constant"], 10)),
                          ("e_T", _fmt(consts["e_T"], 10)),
                          ("rho_sv", _fmt(consts["rho_sv"], 10)),
                          ("rho_eT", _fmt(consts["rho_et"], 10)),
                          ("t_db / c_db", f"{_fmt(consts['t_db'])} / "
                                          f"{_fmt(consts['c_db'])}"),
                          ("t_ps / c_ps", f"{_fmt(consts['t_ps'])} / "
                                          f"{_fmt(consts['c_ps'])}"),
                          ("xi_rn / t_xt", f"{_fmt(consts['xi_rn'])} / "
                                           f"{_fmt(consts['t_xt'])}"),
                          ("eta sup-bound",
                           f"{_fmt(consts['eta_bound']['eta_max'])} <= "
                           f"{_fmt(consts['eta_bound']['bound'])} "
                           f"({'holds' if consts['eta_bound']['holds'] else '**FAILS**'})")]),
                      ""]
        deriv = art("derivation.json")
        if deriv is not None and not deriv["ok"]:
            lines += ["## Derivation", "",
                      f"**FAILS**: {deriv['reason']}", ""]
    elif task == "couple":
        dom = art("domination.json")
        verdict = "holds" if dom["holds"] else f"**FAILS**: {dom['reason']}"
        lines += ["## Coupling induction", "",
                  _md_table(("quantity", "value"), [
                      ("steps accepted", f"{dom['steps_accepted']} / {dom['J']}"),
                      ("domination", verdict),
                      ("worst entrywise slack", _fmt(dom["worst_slack"], 3)),
                      ("floor mass at horizon", _fmt(dom["floor_mass"])),
                      ("residual (1-c_bar)^J", _fmt(dom["residual"], 3)),
                      ("zeta", _fmt(dom["zeta"], 10))]), ""]
    elif task == "nonuniformity":
        rep = art("report.json")
        wit = rep["witness_height"]
        lines += ["## Initial-condition nonuniformity", "",
                  _md_table(("t", "eps", "witness height", "verdict"),
                            [(rep["t"], rep["eps"],
                              wit if wit is not None else "none found",
                              "holds" if rep["holds"] else "**FAILS**")]), ""]
        rows = [(r.split(",")[0], r.split(",")[2], r.split(",")[3],
                 r.split(",")[4]) for r in
                open(os.path.join(run_dir, "tn_rows.csv"))
                .read().splitlines()[1:]]
        lines += ["## Fast window exits vs height", "",
                  _md_table(("n", "p_exit", "bound", "within"), rows), ""]
        for w in rep["warnings"]:
            lines.append(f"- warning: {w}")
        if rep["warnings"]:
            lines.append("")
    elif task == "escape-moments":
        esc = art("escape.json")
        rows = []
        for region in ("TYinf", "TXinf", "T0"):
            r = esc["constants"][region]
            rows.append((region, _fmt(r["E"]), _fmt(r["C"]), _fmt(r["eps"]),
                         _fmt(r["capped_fraction"], 3)))
        comb = esc["combined"]
        lines += ["## Escape moments", "",
                  _md_table(("region", "E", "C", "eps", "capped"), rows), "",
                  _md_table(("check", "verdict"), [
                      ("linked inequalities",
                       "hold" if all(esc["inequalities"].values())
                       else "**FAIL**"),
                      ("smallness thresholds",
                       "hold" if comb["thresholds_ok"] else "**FAIL**"),
                      ("product bound e_T <= 12 C_Y C_X C_0",
                       f"{'holds' if comb['bound_holds'] else '**FAILS**'} "
                       f"(bound {_fmt(comb['product_bound'])})")]), ""]
    elif task == "simulate":
        res = art("result.json")
        lines += ["## Simulation result", "",
                  _md_table(("field", "value"),
                            sorted((k, _fmt(v) if isinstance(v, float)
                                    else str(v)) for k, v in res.items())),
                  ""]
    lines += ["## Artifacts", ""]
    for name, digest in sorted(manifest["artifacts"].items()):
        lines.append(f"- `{name}` sha256 `{digest[:16]}...`")
    lines.append("")
    return "\n".join(lines)


def _cmd_report(args):
    manifest = read_manifest(args.run_dir)
    text = _report_markdown(args.run_dir, manifest)
    path = os.path.join(args.run_dir, "report.md")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(text)
    return EXIT_OK


def _cmd_replay(args):
    manifest = read_manifest(args.run_dir)
    config = dict(manifest["config"])
    if args.threads is not None:
        config["threads"] = args.threads
    out = args.out or args.run_dir.rstrip("/") + "-replay"
    code, artifacts = _execute(config, out)
    fresh = write_manifest(out, config, artifacts)
    old, new = manifest["artifacts"], fresh["artifacts"]
    mismatched = sorted(set(old) ^ set(new))
    mismatched += sorted(k for k in set(old) & set(new) if old[k] != new[k])
    for name in sorted(set(old) | set(new)):
        status = "missing" if name in set(old) ^ set(new) else \
            ("identical" if old[name] == new[name] else "DIFFERS")
        print(f"{name}: {status}")
    if mismatched:
        print(f"replay of {args.run_dir} diverged: {', '.join(mismatched)}")
        return EXIT_ERROR
    print(f"replay reproduced {len(new)} artifacts byte-identically in {out}")
    return code


# --- argument wiring ---------------------------------------------------------

def _resolve_threads(value):
    env = os.environ.get("QSD_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise SchemaError(f"QSD_THREADS: {env!r} is not an integer") from exc
    return max(1, value if value is not None else 1)


def _base_config(args, task, parameters, need_exhaustion=False):
    config = {
        "task": task,
        "seed": int(args.seed),
        "threads": _resolve_threads(args.threads),
        "tol": float(args.tol),
        "model": load_model_config(args.model),
        "exhaustion": None,
        "parameters": parameters,
    }
    if need_exhaustion:
        if args.exhaustion is None:
            raise SchemaError(f"{task} needs --exhaustion")
        config["exhaustion"] = load_exhaustion_config(args.exhaustion)
    return config


def _run_and_finish(config, out):
    code, artifacts = _execute(config, out)
    write_manifest(out, config, artifacts)
    verdict = {EXIT_OK: "ok", EXIT_REFUTED: "refuted"}[code]
    print(f"{config['task']}: {verdict}; artifacts in {out}")
    return code


def build_parser():
    parser = _Parser(prog="qsd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True,
                           help="model config JSON path")
            p.add_argument("--exhaustion", default=None,
                           help="exhaustion config JSON path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="run directory")
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (QSD_THREADS overrides)")

    p = sub.add_parser("solve", help="eigen-triple of a chain model")
    common(p)

    p = sub.add_parser("verify", help="assumption certificates and constants")
    common(p)
    p.add_argument("--t-mix", type=float, default=1.0,
                   help="regeneration window length")
    p.add_argument("--rho", type=float, default=None,
                   help="escape-moment rate (default: auto search)")

    p = sub.add_parser("couple", help="step-by-step coupling below a horizon")
    common(p)
    p.add_argument("--constants", required=True,
                   help="constants.json from a verify run")
    p.add_argument("--mu", default="delta:0", help="delta:K | uniform | file:PATH")
    p.add_argument("--t-h", type=float, required=True, help="horizon")

    p = sub.add_parser("simulate", help="stochastic runs (chains or diffusion)")
    common(p)
    p.add_argument("--kind", required=True,
                   choices=("gillespie", "fv", "qprocess", "naive", "diffusion"))
    p.add_argument("--mu", default="delta:0")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--n0", type=float, default=None, help="diffusion: initial population")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--steps", type=int, default=None, help="qprocess: event budget")
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--window", type=float, default=0.5,
                   help="fv: trailing fraction for the rate estimate")

    p = sub.add_parser("nonuniformity",
                       help="initial-condition sensitivity on a ladder")
    common(p)
    p.add_argument("--t", type=float, default=5.0)
    p.add_argument("--eps", type=float, default=0.1)

    p = sub.add_parser("escape-moments",
                       help="linked escape-time moments of a diffusion")
    common(p)
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--dt", type=float, default=2e-3)
    p.add_argument("--t-cap", type=float, default=30.0)
    p.add_argument("--y-lo", type=float, required=True)
    p.add_argument("--y-inf", type=float, required=True)
    p.add_argument("--n-c", type=float, required=True)

    p = sub.add_parser("report", help="markdown summary of a run directory")
    p.add_argument("run_dir")

    p = sub.add_parser("replay", help="re-execute a run from its manifest")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    return parser


def _dispatch(args):
    cmd = args.command
    if cmd == "report":
        return _cmd_report(args)
    if cmd == "replay":
        return _cmd_replay(args)

    if cmd == "solve":
        config = _base_config(args, "solve", {})
    elif cmd == "verify":
        config = _base_config(args, "verify",
                              {"t_mix": args.t_mix, "rho": args.rho},
                              need_exhaustion=True)
    elif cmd == "couple":
        config = _base_config(args, "couple", {
            "constants": load_json(args.constants),
            "mu": _mu_config(args.mu), "t_h": args.t_h})
    elif cmd == "simulate":
        params = {"kind": args.kind}
        if args.kind == "diffusion":
            if args.t is None or args.n0 is None:
                raise SchemaError("simulate diffusion needs --t and --n0")
            params.update(x0=[args.x0], n0=args.n0, t=args.t, dt=args.dt)
        elif args.kind == "gillespie":
            if args.t is None:
                raise SchemaError("simulate gillespie needs --t")
            params.update(x0=int(args.x0), t=args.t)
        elif args.kind == "fv":
            if args.t is None:
                raise SchemaError("simulate fv needs --t")
            params.update(mu=_mu_config(args.mu), t=args.t,
                          particles=args.particles, window=args.window)
        elif args.kind == "qprocess":
            if args.t is None and args.steps is None:
                raise SchemaError("simulate qprocess needs --t or --steps")
            params.update(x0=int(args.x0), t=args.t, steps=args.steps)
        else:
            if args.t is None:
                raise SchemaError("simulate naive needs --t")
            params.update(mu=_mu_config(args.mu), t=args.t, paths=args.paths)
        config = _base_config(args, "simulate", params)
    elif cmd == "nonuniformity":
        config = _base_config(args, "nonuniformity",
                              {"t": args.t, "eps": args.eps})
    else:
        config = _base_config(args, "escape-moments", {
            "rho": args.rho, "paths": args.paths, "dt": args.dt,
            "t_cap": args.t_cap, "y_lo": args.y_lo, "y_inf": args.y_inf,
            "n_c": args.n_c})
    out = args.out if args.out is not None else f"qsd-{cmd}"
    return _run_and_finish(config, out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except SchemaError as exc:
        print(f"qsd: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except QsdError as exc:
        print(f"qsd: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        print(f"qsd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

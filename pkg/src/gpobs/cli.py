"""Command-line entry point ``gpobs``.

Exit codes: 0 success, 2 usage or configuration error, 3 audit violation,
4 numerical failure (instability, singularity, failed self-check).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, hinf
from .errors import GpobsError, InstabilityError, NoiseBoundError, ScenarioError, SingularMatrixError, SynthesisError
from .observer import NON_PRIVATE, ObserverDesign, simulate, write_trajectory_csv
from .plant import PrivacyBudget
from .privacy import MODES, audit_guaranteed, dp_baseline
from .scenario import bundled_path, load_gain, load_scenario
from .synthesis import (CERTIFIED, SynthesisOptions, SynthesisProblem, load_fixture_design, synth_nonprivate,
                        synth_private)

log = logging.getLogger("gpobs")

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "manifest.txt"

# reference values of the benchmark market example
REFERENCE_GAMMA = 0.865
REFERENCE_ALPHA = 1.364


class UsageError(GpobsError):
    pass


class CheckFailed(GpobsError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _scenario(ref):
    p = Path(ref)
    if not p.exists() and bundled_path(ref).exists():
        p = bundled_path(ref)
    return load_scenario(p)


def _options(args, scn, **over):
    mask = None
    if getattr(args, "mask", "scenario") == "scenario":
        mask = scn.mask
    kw = dict(seed=args.seed if args.seed is not None else scn.options.seed, mask=mask,
              sigma=args.sigma, literal=args.literal)
    if getattr(args, "iters", None):
        kw["max_evals"] = args.iters
    kw.update(over)
    return SynthesisOptions(**kw)


def resolve_design(ref, scn, args):
    """Design from a reference: ``scenario``/``published-gain``, ``zero``, ``synth-np``, ``synth-gp`` or a gain file."""
    plant = scn.plant
    if ref in ("scenario", "published-gain"):
        if scn.gain is None:
            raise UsageError(f"scenario {scn.name or ''} has no [gain] block for design {ref!r}")
        return load_fixture_design(plant, scn.gain.L, scn.gain.alpha)
    if ref == "zero":
        d = load_fixture_design(plant, np.zeros((plant.n, plant.m)), 1.0)
        return ObserverDesign(d.L, 1.0, d.gamma, d.eta, d.Q, provenance=NON_PRIVATE)
    if ref == "synth-np":
        return synth_nonprivate(SynthesisProblem(plant, None, _options(args, scn))).design
    if ref == "synth-gp":
        if scn.budget is None:
            raise UsageError("design synth-gp needs a [privacy] section")
        return synth_private(SynthesisProblem(plant, _budget(args, scn), _options(args, scn))).design
    p = Path(ref)
    if not p.exists():
        raise UsageError(f"unknown design reference {ref!r} (not a keyword and no such file)")
    g = load_gain(p)
    return load_fixture_design(plant, g.L, g.alpha)


def _default_design(scn):
    if scn.gain is not None:
        return "scenario"
    return "synth-gp" if scn.budget is not None else "synth-np"


def _budget(args, scn):
    b = scn.budget
    if b is None:
        raise UsageError("scenario has no [privacy] section")
    eps = b.epsilon if getattr(args, "epsilon", None) is None else args.epsilon
    delta = b.delta if getattr(args, "delta", None) is None else args.delta
    rho = b.rho if getattr(args, "rho", None) is None else args.rho
    return PrivacyBudget(eps, delta, rho)


def _write(out: Path, name, text, files):
    path = out / name
    path.write_text(text)
    files.append(name)
    return path


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, args, files, extra=()):
    argv = [a for a in args.argv]
    lines = [
        f"command: {args.command}",
        f"argv: {shlex.join(argv)}",
        f"scenario: {getattr(args, 'scenario', '') or ''}",
        f"seed: {args.seed if args.seed is not None else ''}",
        f"horizon: {getattr(args, 'horizon', '') or ''}",
        f"output_dir: {out}",
        f"tool_version: {__version__}",
    ]
    lines += [f"{k}: {v}" for k, v in extra]
    lines += [f"file {name}: sha256 {_sha256(out / name)}" for name in sorted(files)]
    (out / MANIFEST).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    entries, files = {}, {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition(": ")
        if key.startswith("file "):
            files[key[5:]] = val.split()[-1]
        else:
            entries[key] = val
    return entries, files


def _strip_out(argv):
    """argv without ``--out`` so reruns can target another directory."""
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, out):
    scn = _scenario(args.scenario)
    files = []
    if args.private:
        res = synth_private(SynthesisProblem(scn.plant, _budget(args, scn), _options(args, scn)))
    else:
        res = synth_nonprivate(SynthesisProblem(scn.plant, None, _options(args, scn)))
    _write(out, "gain.cfg", res.gain_text(), files)
    lines = [f"scenario: {scn.name}", f"mode: {'private' if args.private else 'nonprivate'}"] + res.report_lines()
    if scn.name == "market5":
        lines += [f"reference_gamma: {REFERENCE_GAMMA!r}", f"reference_alpha: {REFERENCE_ALPHA!r}"]
    _write(out, "synth_report.txt", "\n".join(lines) + "\n", files)
    _write(out, "synth_history.csv", _history_csv(res.objective_history), files)
    write_manifest(out, args, files, extra=[("status", res.status)])
    print(f"status {res.status}  gamma {res.design.gamma!r}  alpha {float(res.design.alpha)!r}")
    return EXIT_OK


def _history_csv(history):
    rows = ["iteration,best_gamma"] + [f"{it},{val!r}" for it, val in history]
    return "\n".join(rows) + "\n"


def cmd_simulate(args, out):
    scn = _scenario(args.scenario)
    design = resolve_design(args.design or _default_design(scn), scn, args)
    horizon = args.horizon or scn.options.horizon
    seed0 = args.seed if args.seed is not None else scn.options.seed
    files, worst = [], math.inf
    for s in range(seed0, seed0 + args.seeds):
        traj = simulate(scn.plant, design, horizon, seed=s)
        name = f"trajectory_seed{s}.csv"
        write_trajectory_csv(traj, out / name)
        files.append(name)
        worst = min(worst, traj.containment_slack())
    ok = worst >= -1e-9
    write_manifest(out, args, files, extra=[("containment_min_slack", repr(worst)),
                                            ("containment_check", "pass" if ok else "fail")])
    print(f"{args.seeds} trajectories, containment slack {worst!r}")
    if not ok:
        raise CheckFailed(f"containment violated (slack {worst!r})")
    return EXIT_OK


def cmd_audit(args, out):
    if args.pairs < 1:
        raise UsageError("--pairs must be >= 1")
    scn = _scenario(args.scenario)
    budget = _budget(args, scn)
    design = resolve_design(args.design or _default_design(scn), scn, args)
    seed = args.seed if args.seed is not None else scn.options.seed
    horizon = args.horizon or scn.options.horizon
    rep = audit_guaranteed(scn.plant, design, budget, pairs=args.pairs, horizon=horizon, seed=seed,
                           mode=args.mode, agent=args.agent, sigma=args.sigma, literal=args.literal)
    files = []
    lines = [f"scenario: {scn.name}", f"design_gamma: {design.gamma!r}", f"design_eta: {design.eta!r}",
             f"design_alpha: {float(design.alpha)!r}"] + rep.lines()
    _write(out, "audit_report.txt", "\n".join(lines) + "\n", files)
    rep.write_csv(out / "audit_steps.csv")
    files.append("audit_steps.csv")
    write_manifest(out, args, files, extra=[("violations", rep.violations)])
    print(f"worst {rep.worst!r} vs delta {budget.delta!r}: {rep.violations} violating pairs; "
          f"budget residual {rep.budget_residual!r}")
    return EXIT_VIOLATION if rep.violations else EXIT_OK


def accuracy_table(plant, np_design, gp_design, horizon, seed=0):
    """Rows ``(k, closed form, simulated, |difference|)`` for ``k = 0..horizon``."""
    closed = hinf.accuracy_series(plant, np_design, gp_design, horizon)
    a = simulate(plant, np_design, horizon + 1, seed=seed).z_width
    b = simulate(plant, gp_design, horizon + 1, seed=seed).z_width
    sim = np.max(np.abs(a - b), axis=1)
    return [(k, closed[k], sim[k], abs(closed[k] - sim[k])) for k in range(horizon + 1)]


def _accuracy_csv(rows):
    lines = ["k,eps_closed,eps_sim,abs_diff"]
    lines += [f"{k},{c!r},{s!r},{d!r}" for k, c, s, d in ((r[0], float(r[1]), float(r[2]), float(r[3])) for r in rows)]
    return "\n".join(lines) + "\n"


def cmd_accuracy(args, out):
    scn = _scenario(args.scenario)
    np_d = resolve_design(args.np_design, scn, args)
    gp_d = resolve_design(args.gp_design, scn, args)
    horizon = args.horizon or scn.options.horizon
    rows = accuracy_table(scn.plant, np_d, gp_d, horizon)
    steady = hinf.accuracy_steady(scn.plant, np_d, gp_d)
    files = []
    _write(out, "accuracy.csv", _accuracy_csv(rows), files)
    worst = float(max(r[3] for r in rows))
    _write(out, "accuracy_report.txt",
           hinf.format_report([("eps_inf", steady), ("max_abs_diff", worst), ("horizon", horizon)]), files)
    write_manifest(out, args, files, extra=[("eps_inf", repr(steady)), ("max_abs_diff", repr(worst))])
    print(f"eps_inf {steady!r}, closed form vs simulation max diff {worst!r}")
    if worst > 1e-8:
        raise CheckFailed(f"closed form and simulation disagree by {worst!r}")
    return EXIT_OK


def _figure_csv(trajs, path):
    """Wide CSV: per design the aggregate-output framer bounds and width."""
    names = list(trajs)
    n_z = trajs[names[0]].z_lo.shape[1]
    header = ["k"] + [f"z_true_{j}" for j in range(n_z)]
    for nm in names:
        for j in range(n_z):
            header += [f"{nm}_lo_{j}", f"{nm}_hi_{j}", f"{nm}_width_{j}"]
    ref = trajs[names[0]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(ref.horizon):
            row = [k] + [repr(float(v)) for v in ref.z_true[k]]
            for nm in names:
                t = trajs[nm]
                for j in range(n_z):
                    row += [repr(float(t.z_lo[k, j])), repr(float(t.z_hi[k, j])), repr(float(t.z_width[k, j]))]
            w.writerow(row)


def reproduce_example(out: Path, seed=0, horizon=100, sigma="max", literal=False, quick=False):
    """End-to-end run on the bundled market example; returns (files, summary dict)."""
    scn = load_scenario(bundled_path("market5.cfg"))
    plant, budget = scn.plant, scn.budget
    opts = SynthesisOptions(seed=seed, mask=scn.mask, sigma=sigma, literal=literal)
    files = []

    np_res = synth_nonprivate(SynthesisProblem(plant, None, opts))
    gp_res = synth_private(SynthesisProblem(plant, budget, opts))
    fixture = load_fixture_design(plant, scn.gain.L, scn.gain.alpha)
    fix_lhs = hinf.privacy_constraint_lhs(plant, fixture, budget, sigma=sigma, literal=literal)
    # smallest delta the best search design satisfies
    delta_min = math.exp(budget.epsilon) * gp_res.lhs
    relaxed = None
    if not quick:
        relaxed = synth_private(SynthesisProblem(
            plant, PrivacyBudget(budget.epsilon, delta_min * (1 + 1e-3), budget.rho), opts))

    # figure data: NP = non-private optimum, GP = reference fixture, DP = reference gain with bounded Laplace noise
    K = horizon + 1
    np_traj = simulate(plant, np_res.design, K, seed=seed)
    gp_traj = simulate(plant, fixture, K, seed=seed)
    dp_support = budget.rho
    dp_scale = budget.rho / budget.epsilon if budget.epsilon > 0 else budget.rho
    dp_traj = dp_baseline(plant, scn.gain.L, dp_support, K, seed=seed, scale=dp_scale)
    for nm, t in (("np", np_traj), ("gp", gp_traj), ("dp", dp_traj)):
        write_trajectory_csv(t, out / f"fig1_{nm}.csv")
        files.append(f"fig1_{nm}.csv")
    _figure_csv({"np": np_traj, "gp": gp_traj, "dp": dp_traj}, out / "fig1_widths.csv")
    files.append("fig1_widths.csv")

    rows = accuracy_table(plant, np_res.design, fixture, horizon, seed=seed)
    _write(out, "accuracy.csv", _accuracy_csv(rows), files)
    eps_inf = hinf.accuracy_steady(plant, np_res.design, fixture)

    summary_rows = [
        ("reference", REFERENCE_GAMMA, "", REFERENCE_ALPHA, "", "", "reported"),
        ("np-synth", np_res.design.gamma, np_res.gamma_direct, 1.0, "", "", np_res.status),
        ("gp-synth", gp_res.design.gamma, gp_res.gamma_direct, float(gp_res.design.alpha), gp_res.lhs,
         gp_res.residual, gp_res.status),
        ("gp-fixture", fixture.gamma, hinf.gamma_direct(hinf.build_error_system(plant, fixture)),
         float(fixture.alpha), fix_lhs, fix_lhs - budget.target, "certified" if fixture.certified else "uncertified"),
    ]
    if relaxed is not None:
        summary_rows.append(("gp-relaxed-delta", relaxed.design.gamma, relaxed.gamma_direct,
                             float(relaxed.design.alpha), relaxed.lhs, relaxed.residual, relaxed.status))
    lines = ["design,gamma,gamma_direct,alpha,budget_lhs,budget_residual,status"]
    for r in summary_rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r))
    _write(out, "summary.csv", "\n".join(lines) + "\n", files)

    w_np, w_gp, w_dp = (float(t.z_width[horizon, 0]) for t in (np_traj, gp_traj, dp_traj))
    summary = {
        "budget_target": budget.target,
        "delta_min": delta_min,
        "eta_fixture": fixture.eta,
        "eps_inf": eps_inf,
        "accuracy_max_abs_diff": float(max(r[3] for r in rows)),
        "width_np_final": w_np,
        "width_gp_final": w_gp,
        "width_dp_final": w_dp,
        "np_le_gp_all_k": bool(np.all(np_traj.z_width <= gp_traj.z_width + 1e-12)),
        "gp_lt_dp_final": w_gp < w_dp,
        "dp_support": dp_support,
        "dp_scale": dp_scale,
    }
    text = [f"{k}: {v!r}" if isinstance(v, float) else f"{k}: {v}" for k, v in summary.items()]
    _write(out, "summary.txt", "\n".join(text) + "\n", files)
    return files, summary, summary_rows


def cmd_reproduce(args, out):
    if args.seed is None:
        args.seed = 0
    seed = args.seed
    files, summary, rows = reproduce_example(out, seed=seed, horizon=args.horizon or 100, sigma=args.sigma,
                                             literal=args.literal, quick=args.quick)
    write_manifest(out, args, files)
    for r in rows:
        print(f"{r[0]:>18}  gamma {r[1]!s:<22} alpha {r[3]!s:<22} {r[6]}")
    print(f"widths at final step: NP {summary['width_np_final']:.4f}  GP {summary['width_gp_final']:.4f}  "
          f"DP {summary['width_dp_final']:.4f}")
    return EXIT_OK


def cmd_rerun(args, out):
    entries, files = read_manifest(args.manifest)
    argv = shlex.split(entries.get("argv", ""))
    if not argv:
        raise UsageError(f"{args.manifest} has no argv entry")
    target = Path(args.out) if args.out else Path(entries["output_dir"])
    code = main(argv + ["--out", str(target)])
    if code != EXIT_OK:
        return code
    bad = [name for name, digest in files.items() if not (target / name).exists() or _sha256(target / name) != digest]
    for name in bad:
        print(f"mismatch: {name}")
    print(f"{len(files) - len(bad)}/{len(files)} files reproduced")
    return EXIT_NUMERIC if bad else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default $GPOBS_OUT_DIR or ./gpobs_out)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--sigma", choices=("max", "min"), default=argparse.SUPPRESS,
                        help="singular value used in the budget inequality")
    common.add_argument("--literal", action="store_true", default=argparse.SUPPRESS,
                        help="extra alpha factor on the width term of the budget inequality")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="gpobs", description="Guaranteed-private interval observers.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="synthesise an observer gain")
    s.add_argument("scenario")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--private", action="store_true")
    g.add_argument("--nonprivate", dest="private", action="store_false")
    s.add_argument("--mask", choices=("scenario", "none"), default="scenario")
    s.add_argument("--iters", type=int, default=None, help="evaluation budget of the pattern search")
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--epsilon", type=float, default=None)

    def design_opts(q):
        q.add_argument("--design", default=None, help="scenario | published-gain | zero | synth-np | synth-gp | gain file")
        q.add_argument("--horizon", type=int, default=None)
        q.add_argument("--mask", choices=("scenario", "none"), default="scenario")

    s = sub.add_parser("simulate", parents=[common], help="simulate plant and framer")
    s.add_argument("scenario")
    design_opts(s)
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")

    s = sub.add_parser("audit", parents=[common], help="empirical guaranteed-privacy audit")
    s.add_argument("scenario")
    design_opts(s)
    s.add_argument("--pairs", type=int, default=100)
    s.add_argument("--mode", choices=MODES, default="boundary")
    s.add_argument("--agent", type=int, default=0, help="0-based agent for single-agent mode")
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--epsilon", type=float, default=None)

    s = sub.add_parser("accuracy", parents=[common], help="accuracy loss of a private design")
    s.add_argument("scenario")
    s.add_argument("--np-design", default="synth-np")
    s.add_argument("--gp-design", default="scenario")
    s.add_argument("--horizon", type=int, default=None)
    s.add_argument("--mask", choices=("scenario", "none"), default="scenario")

    s = sub.add_parser("reproduce-example", parents=[common], help="end-to-end market example")
    s.add_argument("--horizon", type=int, default=100)
    s.add_argument("--quick", action="store_true", help="skip the relaxed-budget synthesis")

    s = sub.add_parser("rerun", parents=[common], help="re-execute a manifest and compare checksums")
    s.add_argument("manifest")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "audit": cmd_audit,
    "accuracy": cmd_accuracy,
    "reproduce-example": cmd_reproduce,
    "rerun": cmd_rerun,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    for key, default in (("out", None), ("seed", None), ("sigma", "max"), ("literal", False), ("verbose", False)):
        if not hasattr(args, key):
            setattr(args, key, default)
    args.argv = _strip_out(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    out = None
    if args.command != "rerun":
        out = Path(args.out or os.environ.get("GPOBS_OUT_DIR") or "gpobs_out")
        out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, out)
    except (InstabilityError, SingularMatrixError, SynthesisError, CheckFailed) as exc:
        print(f"gpobs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ScenarioError, NoiseBoundError, GpobsError, ValueError, OSError) as exc:
        print(f"gpobs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

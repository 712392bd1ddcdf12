"""Command-line front end.

Subcommands
-----------
homog    integrate a homogeneous flow, emit trajectory.csv
surface  run the normalized surface flow, emit surface.csv
symbol   random-point symbol checks, emit symbol_report.csv
pinch    pinching-ratio monitor along a homogeneous flow, emit pinch.csv
kahler   Kahler potential flow with monitors, emit kahler.csv
verify   re-check an emitted CSV against a named invariant

Exit codes: 0 success, 1 a mathematical check failed, 2 invalid input,
3 numerical breakdown.  Every run writes a manifest.txt describing the
resolved configuration and the SHA-256 of each emitted file; runs are
deterministic, so repeated invocations reproduce outputs byte for byte.

Options may also be supplied through --config FILE holding `key = value`
lines (# comments allowed); explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    InvalidInputError,
    NumericalFailureError,
    RicciLabError,
)
from .homogeneous import DiagonalMetric, MilnorSignature, ricci_diagonal
from .flow import FlowTrajectory, IntegratorConfig, integrate, sol_reduced
from .initspec import evaluate_init
from .maxprinciple import pinching_monitor
from .surface import Background, ConformalState, SurfaceFlowConfig
from .surface import evolve as surface_evolve
from .kahler import (
    ComplexTorusGrid,
    KahlerFlowConfig,
    PotentialState,
    background_metric,
    convergence_monitors,
    normalize_data,
    ricci_form,
    ricci_target,
    stationary_newton,
)
from .kahler import evolve as kahler_evolve
from . import symbols as sym


def _fmt(x):
    if x is None:
        return ""
    return "%.17g" % float(x)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parse_config_file(path):
    """Read `key = value` lines; '#' starts a comment; blank lines skipped."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError("cannot read config file %s: %s" % (path, exc))
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(
                "config line %d is not 'key = value': %r" % (ln, raw)
            )
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _resolve(args, defaults):
    """Merge built-in defaults, config-file values, and explicit flags."""
    cfg = {}
    config_path = getattr(args, "config", None)
    if config_path:
        cfg = parse_config_file(config_path)
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise InvalidInputError(
                "unknown config keys: %s" % ", ".join(sorted(unknown))
            )
    merged = {}
    for key, (typ, default) in defaults.items():
        if hasattr(args, key):
            merged[key] = getattr(args, key)
        elif key in cfg:
            merged[key] = typ(cfg[key]) if typ is not None else cfg[key]
        else:
            merged[key] = default
    return merged


class _Run:
    """Collects manifest lines and emitted files for one invocation."""

    def __init__(self, out_dir, command, resolved):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.lines = ["tool: riccilab %s" % __version__, "command: %s" % command]
        for k in sorted(resolved):
            self.lines.append("param %s: %s" % (k, resolved[k]))
        self.files = []
        self.checks = []

    def add_file(self, name):
        self.files.append(name)

    def add_check(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    def finish(self):
        for name in self.files:
            self.lines.append(
                "output %s: sha256=%s" % (name, _sha256(self.out_dir / name))
            )
        for name, passed, detail in self.checks:
            self.lines.append(
                "check %s: %s%s"
                % (name, "pass" if passed else "FAIL", " (%s)" % detail if detail else "")
            )
        (self.out_dir / "manifest.txt").write_text("\n".join(self.lines) + "\n")
        return 0 if all(p for _, p, _ in self.checks) else 1


def _write_plot_script(out_dir, csv_name, columns, title):
    lines = [
        "# gnuplot script (generated)",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set title '%s'" % title,
        "plot " + ", \\\n     ".join(
            "'%s' using 1:%d with lines" % (csv_name, c) for c in columns
        ),
    ]
    (Path(out_dir) / "plot.gp").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# homog


_HOMOG_DEFAULTS = {
    "geometry": (str, "su2"),
    "init": (str, "1,1,1"),
    "mode": (str, "unnormalized"),
    "t_end": (float, 1.0),
    "rel_tol": (float, 1e-9),
    "abs_tol": (float, 1e-12),
    "max_step": (float, 1e-2),
    "curvature_ceiling": (float, 1e8),
}


def _parse_triple(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise InvalidInputError("expected three comma-separated values, got %r" % text)
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise InvalidInputError("non-numeric metric entry in %r" % text) from None


def _write_trajectory_csv(path, traj):
    with open(path, "w", newline="") as fh:
        if traj.event is not None:
            fh.write(
                "# event: singularity t=%s reason=%s\n"
                % (_fmt(traj.event.time), traj.event.reason)
            )
        w = csv.writer(fh)
        w.writerow(["t", "A", "B", "C", "R", "K12", "K13", "K23"])
        for i, t in enumerate(traj.times):
            cd = ricci_diagonal(traj.sig, DiagonalMetric(*traj.states[i]))
            w.writerow(
                [_fmt(t)]
                + [_fmt(x) for x in traj.states[i]]
                + [_fmt(cd.scalar)]
                + [_fmt(k) for k in cd.sectional]
            )


def cmd_homog(args):
    p = _resolve(args, _HOMOG_DEFAULTS)
    sig = MilnorSignature.from_name(p["geometry"])
    g0 = DiagonalMetric(*_parse_triple(p["init"]))
    cfg = IntegratorConfig(
        t_end=p["t_end"],
        rel_tol=p["rel_tol"],
        abs_tol=p["abs_tol"],
        max_step=p["max_step"],
        curvature_ceiling=p["curvature_ceiling"],
    )
    traj = integrate(sig, g0, cfg, mode=p["mode"])
    run = _Run(args.out, "homog", p)
    _write_trajectory_csv(run.out_dir / "trajectory.csv", traj)
    run.add_file("trajectory.csv")
    _write_plot_script(run.out_dir, "trajectory.csv", [2, 3, 4], "metric coefficients")
    run.add_file("plot.gp")
    if p["geometry"] == "sol":
        rep = sol_reduced(traj)
        run.add_check(
            "sol-ac-conservation",
            rep.ac_drift_max <= 1e-9 * traj.states[0][0] * traj.states[0][2],
            "drift=%g" % rep.ac_drift_max,
        )
    if p["mode"] == "normalized":
        vol = traj.volume_density()
        drift = float(np.abs(vol - vol[0]).max())
        run.add_check("volume-constant", drift <= 10 * p["rel_tol"] * vol[0],
                      "drift=%g" % drift)
    return run.finish()


# ---------------------------------------------------------------------------
# surface


_SURFACE_DEFAULTS = {
    "background": (str, "flat_torus"),
    "n": (int, 64),
    "init": (str, "0.1*cos(x)"),
    "t_end": (float, 5.0),
    "sample_dt": (float, 0.25),
}


def cmd_surface(args):
    p = _resolve(args, _SURFACE_DEFAULTS)
    bg = Background(p["background"], p["n"])
    if bg.kind == "flat_torus":
        coords = {
            "x": bg.x[:, None] * np.ones((1, bg.N)),
            "y": np.ones((bg.N, 1)) * bg.x[None, :],
        }
    else:
        coords = {"theta": bg.theta}
    v0 = evaluate_init(p["init"], coords)
    traj = surface_evolve(
        ConformalState(bg, v0),
        SurfaceFlowConfig(t_end=p["t_end"], sample_dt=p["sample_dt"]),
    )
    run = _Run(args.out, "surface", p)
    path = run.out_dir / "surface.csv"
    with open(path, "w", newline="") as fh:
        fh.write("# background: %s N=%d chi=%d\n" % (bg.kind, bg.N, bg.chi))
        w = csv.writer(fh)
        w.writerow(
            ["t", "area", "r", "R_min", "R_max", "gauss_bonnet", "entropy",
             "M_norm", "I_osc"]
        )
        for d in traj.diagnostics:
            w.writerow(
                [_fmt(d.t), _fmt(d.area), _fmt(d.r), _fmt(d.R_min), _fmt(d.R_max),
                 _fmt(d.gauss_bonnet), _fmt(d.entropy), _fmt(d.M_norm), _fmt(d.I_osc)]
            )
    run.add_file("surface.csv")
    _write_plot_script(run.out_dir, "surface.csv", [4, 5], "scalar curvature range")
    run.add_file("plot.gp")
    target = 4 * np.pi * bg.chi
    gb_err = max(abs(d.gauss_bonnet - target) for d in traj.diagnostics)
    gb_tol = 1e-8 if bg.kind == "flat_torus" else 1e-6
    run.add_check("gauss-bonnet", gb_err <= gb_tol, "err=%g" % gb_err)
    a0 = traj.diagnostics[0].area
    a_drift = max(abs(d.area - a0) for d in traj.diagnostics)
    run.add_check("area-constant", a_drift <= 1e-6 * a0, "drift=%g" % a_drift)
    return run.finish()


# ---------------------------------------------------------------------------
# symbol


_SYMBOL_DEFAULTS = {
    "dims": (str, "2,3,4,5"),
    "trials": (int, 100),
    "seed": (int, 0),
}


def cmd_symbol(args):
    p = _resolve(args, _SYMBOL_DEFAULTS)
    try:
        dims = [int(d) for d in p["dims"].split(",")]
    except ValueError:
        raise InvalidInputError("bad --dims value %r" % p["dims"]) from None
    if any(d < 2 for d in dims):
        raise InvalidInputError("symbol checks need dimension >= 2")
    run = _Run(args.out, "symbol", p)
    path = run.out_dir / "symbol_report.csv"
    ok = True
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["n", "trial", "kernel_dim", "composition_rel", "deturck_rel",
             "lichnerowicz_rel"]
        )
        for n in dims:
            for trial in range(p["trials"]):
                ss = np.random.SeedSequence(p["seed"], spawn_key=(n, trial))
                rng = np.random.default_rng(ss)
                pt = sym.random_point(n, rng)
                M = sym.ricci_symbol(pt)
                D = sym.divadj_symbol(pt)
                kdim = sym.kernel_dimension(M)
                comp = sym.composition_residual(pt) / max(
                    np.linalg.norm(M, 2) * np.linalg.norm(D, 2), 1e-300
                )
                det = sym.deturck_identity_residual(pt)
                lich = sym.lichnerowicz_residual(pt)
                w.writerow([n, trial, kdim, _fmt(comp), _fmt(det), _fmt(lich)])
                if kdim != n or comp > 1e-12 or det > 1e-12 or lich > 1e-12:
                    ok = False
    run.add_file("symbol_report.csv")
    run.add_check("symbol-identities", ok)
    return run.finish()


# ---------------------------------------------------------------------------
# pinch


_PINCH_DEFAULTS = {
    "init": (str, "1,1.2,1.5"),
    "t_end": (float, 10.0),
    "delta": (float, None),
}


def cmd_pinch(args):
    p = _resolve(args, _PINCH_DEFAULTS)
    sig = MilnorSignature.su2()
    g0 = DiagonalMetric(*_parse_triple(p["init"]))
    traj = integrate(sig, g0, IntegratorConfig(t_end=p["t_end"]))
    series = pinching_monitor(traj, delta=p["delta"])
    run = _Run(args.out, "pinch", p)
    path = run.out_dir / "pinch.csv"
    with open(path, "w", newline="") as fh:
        fh.write("# delta=%s eps0=%s\n" % (_fmt(series.delta), _fmt(series.eps0)))
        w = csv.writer(fh)
        w.writerow(["t", "pinching_ratio"])
        for t, val in zip(series.times, series.values):
            w.writerow([_fmt(t), _fmt(val)])
    run.add_file("pinch.csv")
    _write_plot_script(run.out_dir, "pinch.csv", [2], "pinching ratio")
    run.add_file("plot.gp")
    run.add_check(
        "pinching-noninflating",
        series.passed,
        "max=%g initial=%g" % (series.values.max(), series.values[0]),
    )
    return run.finish()


# ---------------------------------------------------------------------------
# kahler


_KAHLER_DEFAULTS = {
    "nc": (int, 1),
    "n": (int, 64),
    "f": (str, "0.2*cos(x)"),
    "mode": (str, "ricci_flat"),
    "t_end": (float, 100.0),
    "sample_dt": (float, 2.0),
    "settle_tol": (float, 1e-9),
    "newton_check": (lambda s: s.lower() in ("1", "true", "yes"), False),
}


def cmd_kahler(args):
    p = _resolve(args, _KAHLER_DEFAULTS)
    grid = ComplexTorusGrid(p["nc"], p["n"])
    if grid.n_c == 1:
        coords = {
            "x": grid.x[:, None] * np.ones((1, grid.N)),
            "y": np.ones((grid.N, 1)) * grid.x[None, :],
        }
    else:
        ones = np.ones(grid.shape)
        coords = {
            "x1": grid.x.reshape(-1, 1, 1, 1) * ones,
            "y1": grid.x.reshape(1, -1, 1, 1) * ones,
            "x2": grid.x.reshape(1, 1, -1, 1) * ones,
            "y2": grid.x.reshape(1, 1, 1, -1) * ones,
        }
    f = normalize_data(grid, evaluate_init(p["f"], coords))
    g0 = background_metric(grid.n_c)
    state = PotentialState(
        grid=grid, g0=g0, f=f, u=np.zeros(grid.shape), mode=p["mode"]
    )
    traj = kahler_evolve(
        state,
        KahlerFlowConfig(
            t_end=p["t_end"], sample_dt=p["sample_dt"], settle_tol=p["settle_tol"]
        ),
    )
    mon = convergence_monitors(traj)
    run = _Run(args.out, "kahler", p)
    path = run.out_dir / "kahler.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["t", "max_abs_dudt", "oscillation", "energy", "volume_identity_err",
             "trace_min"]
        )
        for i, s in enumerate(traj.samples):
            w.writerow(
                [_fmt(s.t), _fmt(mon.max_abs_dudt[i]), _fmt(mon.oscillation[i]),
                 _fmt(mon.energy[i]), _fmt(mon.volume_identity_err[i]),
                 _fmt(mon.trace_min[i])]
            )
    run.add_file("kahler.csv")
    _write_plot_script(run.out_dir, "kahler.csv", [3, 4], "decay monitors")
    run.add_file("plot.gp")
    run.lines.append("settled: %s" % traj.settled)
    run.lines.append("equiv_K: %s" % _fmt(mon.equiv_K))
    run.add_check(
        "speed-bound",
        bool((mon.max_abs_dudt <= mon.max_abs_f + 1e-12).all()),
        "max=%g bound=%g" % (mon.max_abs_dudt.max(), mon.max_abs_f),
    )
    run.add_check("trace-positive", bool(mon.trace_min.min() > 0))
    if p["newton_check"]:
        u_newton = stationary_newton(grid, g0, f, mode=p["mode"])
        u_flow = traj.samples[-1].u
        diff = float(
            np.abs((u_flow - u_flow.mean()) - (u_newton - u_newton.mean())).max()
        )
        tol = 1e-6 if grid.n_c == 1 else 1e-5
        run.add_check("flow-vs-newton", diff <= tol, "diff=%g" % diff)
        gt = traj.final_state().metric()
        tgt = ricci_target(grid, f, mode=p["mode"], gt=gt, g0=g0)
        ric_err = float(np.abs(ricci_form(grid, gt) - tgt).max())
        run.add_check("ricci-vs-target", ric_err <= tol, "err=%g" % ric_err)
    return run.finish()


# ---------------------------------------------------------------------------
# verify


def _read_csv(path):
    comments = []
    with open(path, newline="") as fh:
        rows = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line.strip())
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    data = {h: [] for h in header}
    for row in reader:
        for h, val in zip(header, row):
            data[h].append(float(val) if val else np.nan)
    return comments, {h: np.array(v) for h, v in data.items()}


def cmd_verify(args):
    comments, data = _read_csv(args.csv)
    check = args.check
    tol = args.tol
    if "t" not in data:
        raise InvalidInputError("CSV has no time column")
    t = data["t"]
    ok, detail = False, ""
    if check == "times-monotone":
        ok = bool(np.all(np.diff(t) > 0))
    elif check == "sol-ac":
        ac = data["A"] * data["C"]
        drift = float(np.abs(ac - ac[0]).max())
        tol = tol if tol is not None else 1e-9 * abs(ac[0])
        ok, detail = drift <= tol, "drift=%g" % drift
    elif check == "volume-constant":
        vol = np.sqrt(data["A"] * data["B"] * data["C"])
        drift = float(np.abs(vol - vol[0]).max())
        tol = tol if tol is not None else 1e-8 * vol[0]
        ok, detail = drift <= tol, "drift=%g" % drift
    elif check == "ordering":
        ok = bool(
            np.all(data["A"] <= data["B"] * (1 + 1e-12))
            and np.all(data["B"] <= data["C"] * (1 + 1e-12))
        )
    elif check == "gauss-bonnet":
        chi = None
        for c in comments:
            if "chi=" in c:
                chi = float(c.split("chi=")[1].split()[0])
        if chi is None:
            raise InvalidInputError("CSV lacks a '# background: ... chi=' comment")
        err = float(np.abs(data["gauss_bonnet"] - 4 * np.pi * chi).max())
        tol = tol if tol is not None else 1e-6
        ok, detail = err <= tol, "err=%g" % err
    elif check == "area-constant":
        drift = float(np.abs(data["area"] - data["area"][0]).max())
        tol = tol if tol is not None else 1e-6 * data["area"][0]
        ok, detail = drift <= tol, "drift=%g" % drift
    elif check == "entropy-monotone":
        ent = data["entropy"]
        if np.any(np.isnan(ent)):
            raise InvalidInputError("entropy column has gaps (R <= 0 somewhere?)")
        ok = bool(np.all(np.diff(ent) <= 1e-8))
    else:
        raise InvalidInputError("unknown check %r" % check)
    print("%s: %s%s" % (check, "pass" if ok else "FAIL", " " + detail if detail else ""))
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="riccilab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add(name, func, defaults, needs_out=True):
        sp = sub.add_parser(name)
        sp.set_defaults(func=func)
        if needs_out:
            sp.add_argument("--out", required=True, help="output directory")
            sp.add_argument("--config", help="key = value config file")
        for key, (typ, _default) in defaults.items():
            sp.add_argument(
                "--" + key.replace("_", "-"),
                dest=key,
                type=typ if typ not in (None,) else str,
                default=argparse.SUPPRESS,
            )
        return sp

    add("homog", cmd_homog, _HOMOG_DEFAULTS)
    add("surface", cmd_surface, _SURFACE_DEFAULTS)
    add("symbol", cmd_symbol, _SYMBOL_DEFAULTS)
    add("pinch", cmd_pinch, _PINCH_DEFAULTS)
    add("kahler", cmd_kahler, _KAHLER_DEFAULTS)
    sp = sub.add_parser("verify")
    sp.set_defaults(func=cmd_verify)
    sp.add_argument("csv")
    sp.add_argument("--check", required=True)
    sp.add_argument("--tol", type=float, default=None)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except NumericalFailureError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    except RicciLabError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

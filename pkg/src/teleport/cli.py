"""Command-line front end.

    teleport wp --p 2 a.msr b.msr [--plan plan.csv]
    teleport tele --p 2 --threshold 0.1 mu.msr nu.smsr [--plan-eps 0.01] [--out dir]
    teleport scaling --config run.ini [--out dir]
    teleport tele-limit --config run.ini [--out dir]
    teleport curve --config run.ini [--out dir]
    teleport verify [--seed 42] [--only 1,5]

Exit status is 0 iff every verdict passes; input errors exit with 2.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance
from .asymptotics import (CurveExperiment, EpsilonGrid, LinearMass, critical_ratio_check, curve_holder_experiment,
                          scaling_experiment, teleport_limit_check)
from .component_graph import (build_graph, build_teleport_plan, component_charges,
                              label_components, teleport_norm)
from .io import Config, FormatError, emit_csv, read_measure, read_signed_measure
from .measures import FAMILIES, DensitySpec, DiscreteMeasure, SignedMeasure, discretize
from .ot_exact import GAP_RTOL, SolverError, wasserstein_1d, wasserstein_p

COMMANDS = ("wp", "tele", "scaling", "tele-limit", "curve", "verify")


@dataclass
class Report:
    command: str
    inputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    verdicts: list[tuple[str, bool, str]] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    outputs: list[Path] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v[1] for v in self.verdicts)

    def check(self, name: str, passed, detail: str = "") -> None:
        self.verdicts.append((name, bool(passed), detail))

    def render(self) -> str:
        lines = [f"== {self.command}"]
        for k, v in self.inputs.items():
            lines.append(f"  {k}: {v}")
        for k, v in self.results.items():
            if isinstance(v, str) and "\n" in v:
                lines.append(f"{k}:")
                lines.extend("  " + s for s in v.splitlines())
            else:
                lines.append(f"{k}: {_show(v)}")
        for path in self.outputs:
            lines.append(f"wrote {path}")
        if self.verdicts:
            lines.append("verdicts:")
            for name, passed, detail in self.verdicts:
                lines.append(f"  [{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
        for k, v in self.timings.items():
            lines.append(f"time {k}: {v:.2f}s")
        return "\n".join(lines)


def _show(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _table(mat: np.ndarray) -> str:
    return "\n".join(" ".join(f"{x:12.6g}" for x in row) for row in mat)


# --------------------------------------------------------------------------- config helpers


def _parse_value(raw: str):
    parts = [s for s in raw.replace(",", " ").split() if s]
    vals = [float(s) for s in parts]
    return vals[0] if len(vals) == 1 else tuple(vals)


def _family_from(sec) -> DensitySpec:
    family = sec.get_str("family")
    if family not in FAMILIES:
        raise sec._err("family", f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    params = {}
    for key in list(sec._sec):
        if key.startswith("family."):
            name = key.split(".", 1)[1]
            params[name] = sec._convert(key, None, _parse_value, "a real or list of reals")
            if name in ("first", "second") and not isinstance(params[name], tuple):
                raise sec._err(key, f"{key} needs two numbers")
    if family == "wedge" and "k" in params:
        params["k"] = int(params["k"])
    try:
        return DensitySpec(family, params)
    except ValueError as exc:
        raise sec._err("family", str(exc)) from None


def _grid_from(sec, eps_max=0.1, eps_min=1e-3, ratio=0.6) -> EpsilonGrid:
    try:
        return EpsilonGrid.geometric(sec.get_float("eps_max", eps_max), sec.get_float("eps_min", eps_min),
                                     sec.get_float("ratio", ratio))
    except ValueError as exc:
        raise sec._err("eps_min", str(exc)) from None


def _nu_from(sec, mu: DiscreteMeasure) -> SignedMeasure:
    """Perturbation: a signed-measure file, ``endpoints``, or a dipole between two points."""
    path = sec.get_str("nu_file", None)
    if path is not None:
        return read_signed_measure(Path(sec.cfg.path).parent / path)
    mode = sec.get_str("nu", "dipole")
    mass = sec.get_float("nu_mass", 1.0)
    if mode == "endpoints":
        return SignedMeasure(DiscreteMeasure.dirac(mu.points[0], mass), DiscreteMeasure.dirac(mu.points[-1], mass))
    if mode != "dipole":
        raise sec._err("nu", f"nu must be 'dipole' or 'endpoints', got {mode!r}")
    xp = np.atleast_1d(sec.get_floats("nu_plus"))
    xm = np.atleast_1d(sec.get_floats("nu_minus"))
    if len(xp) != mu.dim or len(xm) != mu.dim:
        raise sec._err("nu_plus", f"dipole points need {mu.dim} coordinates")
    if sec.get_bool("snap", True):
        xp, xm = mu.points[mu.nearest_atom(xp)], mu.points[mu.nearest_atom(xm)]
    return SignedMeasure(DiscreteMeasure.dirac(xp, mass), DiscreteMeasure.dirac(xm, mass))


def _section(args, name):
    if args.config is None:
        raise FormatError("<command line>", None, f"'{name}' needs --config")
    return Config(args.config).section(name)


def _p(args, sec=None, default=2.0) -> float:
    p = args.p if args.p is not None else (sec.get_float("p", default) if sec is not None else default)
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(p)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- commands


def cmd_wp(args, rep: Report) -> None:
    a, b = read_measure(args.measures[0]), read_measure(args.measures[1])
    p = _p(args)
    rep.inputs.update(a=f"{args.measures[0]} ({len(a)} atoms)", b=f"{args.measures[1]} ({len(b)} atoms)", p=p)
    t0 = time.perf_counter()
    if p == 1:
        if a.dim != 1:
            raise ValueError("p = 1 is only supported on the line (quantile formula)")
        rep.results["value"] = wasserstein_1d(a, b, 1.0)
        rep.check("quantile formula", True, "p = 1, no plan")
    else:
        res = wasserstein_p(a, b, p)
        rep.results.update(value=res.value, plan_size=len(res.plan), duality_gap=res.gap)
        rep.check("duality gap", res.gap <= GAP_RTOL * (1 + res.plan.cost), f"{res.gap:.3e}")
        if args.plan:
            rep.outputs += emit_csv(res.plan, args.plan)
    rep.timings["solve"] = time.perf_counter() - t0


def cmd_tele(args, rep: Report) -> None:
    mu, nu = read_measure(args.measures[0]), read_signed_measure(args.measures[1])
    p = _p(args)
    if args.threshold is None:
        raise ValueError("tele needs --threshold")
    rep.inputs.update(mu=args.measures[0], nu=args.measures[1], p=p, threshold=args.threshold)
    t0 = time.perf_counter()
    labels = label_components(mu, args.threshold)
    g = build_graph(mu, labels, p)
    charges = component_charges(nu, labels)
    r = teleport_norm(g, charges)
    rep.timings["graph"] = time.perf_counter() - t0
    rep.results.update(
        m=g.m, edge_len=_table(g.edge_len), geo_len=_table(g.geo_len),
        charges=" ".join(f"{x:.12g}" for x in charges.nu_bar), norm=r.value,
        fluxes="\n".join(f"{k} -> {l}: {f:.12g}" for (k, l), f in sorted(r.edge_flux.items())) or "(none)",
        potentials=" ".join(f"{z:.12g}" for z in r.dual_z))
    rep.check("primal = dual", r.gap <= 1e-9, f"{r.gap:.2e}")
    kirch = float(np.abs(r.kirchhoff_residual()).max())
    rep.check("Kirchhoff balance", kirch <= 1e-10, f"{kirch:.2e}")
    out = _out(args)
    rep.outputs += emit_csv(r, out / "tele.csv")
    if args.plan_eps is not None:
        target, plan = build_teleport_plan(mu, labels, g, r, args.plan_eps)
        rep.results.update(plan_cost=plan.cost, plan_cost_over_eps=plan.cost / args.plan_eps)
        rep.outputs += emit_csv(plan, out / "tele_plan.csv")


def cmd_scaling(args, rep: Report) -> None:
    sec = _section(args, "scaling")
    spec = _family_from(sec)
    resolution = sec.get_int("resolution")
    p = _p(args, sec)
    # the beta profile is d-connected on the line; other families use their ambient dimension
    d = sec.get_float("d", float(spec.params["d"]) if spec.family == "beta-profile" else float(spec.dim))
    grid = _grid_from(sec)
    method = sec.get_str("method", "auto")
    tol = sec.get_float("tolerance", 0.05)
    spread_max = sec.get_float("spread_max", 3.0)
    mu = discretize(spec, resolution)
    nu = _nu_from(sec, mu)
    sec.check_unused()
    rep.inputs.update(family=spec.family, params=dict(spec.params), resolution=resolution, p=p, d=d,
                      eps=f"{grid.values[0]:.3g} .. {grid.values[-1]:.3g} ({len(grid)} points)")
    t0 = time.perf_counter()
    r = scaling_experiment(mu, nu, p, grid, d=d, method=method)
    rep.timings["experiment"] = time.perf_counter() - t0
    rep.results.update(q_hat=r.q_hat, q_pred=r.q_pred, stderr=r.stderr, critical=r.critical,
                       degenerate=r.degenerate)
    rep.outputs += emit_csv(r, _out(args) / "scaling.csv")
    if r.degenerate:
        rep.check("nondegenerate perturbation", False, "all distances vanish")
    elif r.critical:
        c = critical_ratio_check(r)
        rep.results.update(critical_spread=c.spread, linear_growth=c.linear_growth)
        rep.check("critical ratio bounded", c.spread < spread_max, f"spread {c.spread:.3f} < {spread_max:g}")
    else:
        rep.check("exponent", abs(r.q_hat - r.q_pred) <= tol, f"|{r.q_hat:.4f} - {r.q_pred:.4f}| <= {tol:g}")


def cmd_tele_limit(args, rep: Report) -> None:
    sec = _section(args, "tele-limit")
    spec = _family_from(sec)
    resolution = sec.get_int("resolution")
    p = _p(args, sec)
    threshold = args.threshold if args.threshold is not None else sec.get_float("threshold")
    grid = _grid_from(sec)
    d_within = sec.get_float("d_within", 1.0)
    tol = sec.get_float("tolerance", 0.05)
    method = sec.get_str("method", "auto")
    mu = discretize(spec, resolution)
    nu = _nu_from(sec, mu)
    sec.check_unused()
    rep.inputs.update(family=spec.family, resolution=resolution, p=p, threshold=threshold)
    t0 = time.perf_counter()
    r = teleport_limit_check(mu, nu, p, grid, threshold, d_within=d_within, method=method)
    rep.timings["experiment"] = time.perf_counter() - t0
    rep.results.update(m=r.m, norm=r.norm.value, target=r.target, smallest_eps_estimate=float(r.estimates[-1]),
                       rel_deviation=r.rel_deviation, richardson=r.richardson)
    rep.outputs += emit_csv(r, _out(args) / "tele_limit.csv")
    rep.check("smallest-eps estimate", r.rel_deviation <= tol, f"{r.rel_deviation:.2%} <= {tol:.0%}")
    rep.check("dual lower bound", np.all(r.estimates >= r.lower_bounds - 1e-9))


def cmd_curve(args, rep: Report) -> None:
    sec = _section(args, "curve")
    p = _p(args, sec)
    x0, x1 = sec.get_float("x0", 0.0), sec.get_float("x1", 1.0)
    m0, slope = sec.get_float("m0", 0.3), sec.get_float("slope", 0.4)
    t_grid = np.linspace(0.0, sec.get_float("t_max", 0.5), sec.get_int("t_points", 6))
    expect = sec.get_float("expect", None)
    tol = sec.get_float("tolerance", 0.05)
    background = None
    if sec.get_str("family", None) is not None:
        background = discretize(_family_from(sec), sec.get_int("resolution"))
    sec.check_unused()
    rep.inputs.update(p=p, x0=x0, x1=x1, m=f"{m0:g} + {slope:g} t",
                      background="none" if background is None else f"{len(background)} atoms")
    spec = CurveExperiment(t_grid, LinearMass(m0, slope), x0, x1, background)
    t0 = time.perf_counter()
    r = curve_holder_experiment(spec, p)
    rep.timings["experiment"] = time.perf_counter() - t0
    rep.results.update(exponent=r.exponent, stderr=r.stderr, degenerate=r.degenerate)
    rep.outputs += emit_csv(r, _out(args) / "curve.csv")
    if expect is not None:
        rep.check("exponent", abs(r.exponent - expect) <= tol, f"|{r.exponent:.4f} - {expect:g}| <= {tol:g}")


def cmd_verify(args, rep: Report) -> None:
    only = None
    if args.only:
        only = {int(s) for s in args.only.split(",")}
    rep.inputs["seed"] = args.seed
    for v in acceptance.run_suite(args.seed, only):
        print(v.line(), flush=True)
        rep.check(f"criterion {v.criterion} {v.name}", v.passed, v.detail)
        rep.timings[f"criterion {v.criterion}"] = v.seconds


HANDLERS = {"wp": cmd_wp, "tele": cmd_tele, "scaling": cmd_scaling, "tele-limit": cmd_tele_limit,
            "curve": cmd_curve, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=float, help="transport exponent")
    common.add_argument("--config", help="INI file with a section per command")
    common.add_argument("--out", default=".", help="directory for CSV output")
    common.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    common.add_argument("--threshold", type=float, help="single-linkage distance for components")

    parser = argparse.ArgumentParser(prog="teleport", description="Exact Wasserstein experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    wp = sub.add_parser("wp", parents=[common], help="W_p between two measure files")
    wp.add_argument("measures", nargs=2)
    wp.add_argument("--plan", help="write plan entries to this CSV")
    tele = sub.add_parser("tele", parents=[common], help="teleportation norm of a perturbation")
    tele.add_argument("measures", nargs=2, metavar=("MU", "NU"))
    tele.add_argument("--plan-eps", type=float, help="also build the explicit plan at this eps")
    for name in ("scaling", "tele-limit", "curve"):
        sub.add_parser(name, parents=[common], help=f"{name} experiment from --config")
    verify = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    verify.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def run(args) -> Report:
    rep = Report(args.command)
    HANDLERS[args.command](args, rep)
    return rep


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rep = run(args)
    except (FormatError, FileNotFoundError, ValueError, SolverError) as exc:
        print(f"teleport {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(rep.render())
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())

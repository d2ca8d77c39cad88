"""Scenario runner: parses structured configs, executes named
experiments against the library modules, and writes CSV tables, run
manifests, and companion PNG figures.

Config grammar (``--config file``): one ``key = value`` per line,
``#`` starts a comment, keys are the long flag names with dashes
replaced by underscores.  Config values override command-line flags.
All floating-point output is printed with 17 significant digits, so a
run is byte-reproducible from its manifest.

Metric specs: ``flat``, ``schwarzschild{m}``, ``conformal{f-spec}``,
``radial{a-spec,b-spec}``, ``grid{file}``.  A profile spec is ``1``,
``1+C/ell`` or ``1+C/ell^P`` (also with ``-``), e.g.
``schwarzschild{1.0}`` or ``radial{1+2.0/ell,1+0.5/ell^2}``.

Map specs (``glue``): ``isometry{O=...;v=...}``,
``perturbed-isometry{O=...;v=...;eps=...;bump=sin|compact}``,
``synthetic-transition{tau=...;c=...}``; ``O`` is ``identity`` or n*n
row-major comma-separated floats, ``v`` is n comma-separated floats.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from math import pi
from typing import Dict, List, Optional

import numpy as np

from . import acceptance as A
from . import charts as C
from . import flow as F
from . import geometry as G
from . import mass as M
from . import testfn as T


def _cap_threads() -> Optional[int]:
    """Honor C0MASS_THREADS by capping the BLAS/OpenMP pools."""
    raw = os.environ.get("C0MASS_THREADS")
    if not raw:
        return None
    try:
        cap = max(1, int(raw))
    except ValueError:
        raise SystemExit(f"error: C0MASS_THREADS={raw!r} is not an integer")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(cap)
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=cap)
    except ImportError:
        pass
    return cap


def fmt17(x) -> str:
    """17-significant-digit decimal rendering (round-trips float64)."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# config files


def parse_config(path: str) -> Dict[str, str]:
    """Line-based ``key = value`` config; '#' comments; errors carry the
    line number."""
    out: Dict[str, str] = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise SystemExit(f"error: cannot read config {path}: {exc}")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(
                f"error: {path}:{lineno}: expected 'key = value', "
                f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise SystemExit(
                f"error: {path}:{lineno}: empty key or value")
        out[key] = value
    return out


def apply_config(args: argparse.Namespace, parser_dests: List[str]) -> None:
    """Overlay config-file values onto parsed flags (config wins)."""
    if not getattr(args, "config", None):
        return
    cfg = parse_config(args.config)
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in parser_dests:
            raise SystemExit(
                f"error: {args.config}: unknown key {key!r} for scenario "
                f"{args.scenario!r}")
        current = getattr(args, dest)
        if isinstance(current, bool):
            setattr(args, dest, value.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int) and not isinstance(current, bool):
            setattr(args, dest, int(value))
        elif isinstance(current, float):
            setattr(args, dest, float(value))
        else:
            setattr(args, dest, value)


def require(args: argparse.Namespace, *keys: str) -> None:
    for key in keys:
        if getattr(args, key, None) is None:
            raise SystemExit(
                f"error: missing required key '{key}' (set --{key.replace('_', '-')} "
                f"or add '{key} = ...' to the config)")


def check_decay_condition(tau: float, n: int) -> None:
    """The mass-convergence experiments assume the decay condition
    tau > (n-2)/2; slower decay is rejected by name."""
    if tau <= 0.5 * (n - 2):
        raise SystemExit(
            f"error: tau = {fmt17(tau)} violates the decay condition "
            f"tau > (n-2)/2 = {fmt17(0.5 * (n - 2))} required for the mass "
            f"limit to exist; rerun with a faster-decaying field")


# ---------------------------------------------------------------------------
# metric and map specs


_PROFILE_RX = re.compile(
    r"^1(?:(?P<sign>[+-])(?P<c>[0-9.eE+-]+)/ell(?:\^(?P<p>[0-9.eE+-]+))?)?$")


def parse_profile_spec(spec: str):
    """``1``, ``1+C/ell`` or ``1+C/ell^P`` -> callable of ell."""
    m = _PROFILE_RX.match(spec.replace(" ", ""))
    if not m:
        raise SystemExit(
            f"error: bad profile spec {spec!r} (grammar: 1, 1+C/ell, "
            f"1+C/ell^P)")
    if m.group("c") is None:
        return lambda ell: np.ones_like(np.asarray(ell, dtype=float))
    c = float(m.group("c")) * (1.0 if m.group("sign") == "+" else -1.0)
    p = float(m.group("p")) if m.group("p") is not None else 1.0
    return lambda ell: 1.0 + c * np.asarray(ell, dtype=float) ** (-p)


def _split_spec(spec: str):
    if "{" not in spec:
        return spec, ""
    if not spec.endswith("}"):
        raise SystemExit(f"error: unbalanced braces in spec {spec!r}")
    head, _, body = spec.partition("{")
    return head, body[:-1]


def parse_metric_spec(spec: str, n: int) -> G.MetricField:
    head, body = _split_spec(spec.strip())
    if head == "flat":
        return G.flat_metric(n)
    if head == "schwarzschild":
        if not body:
            raise SystemExit("error: schwarzschild{m} needs a mass value")
        return G.schwarzschild_leading(float(body), n)
    if head == "schwarzschild-isotropic":
        if not body:
            raise SystemExit(
                "error: schwarzschild-isotropic{m} needs a mass value")
        return G.schwarzschild_isotropic(float(body), n)
    if head == "conformal":
        prof = parse_profile_spec(body)
        return G.conformal_metric(
            n, lambda x: prof(np.linalg.norm(np.atleast_2d(x), axis=-1)))
    if head == "radial":
        parts = body.split(",")
        if len(parts) != 2:
            raise SystemExit(
                "error: radial{a-spec,b-spec} needs two profile specs")
        a, b = (parse_profile_spec(p) for p in parts)
        return G.MetricField.from_radial_profiles(
            n, a, b, domain=G.Domain.ball_complement(0.0), name=spec)
    if head == "power-decay":
        parts = body.split(",")
        if len(parts) != 2:
            raise SystemExit("error: power-decay{c0,tau} needs two values")
        return G.power_decay_metric(float(parts[0]), float(parts[1]), n)
    if head == "grid":
        try:
            return G.read_grid_file(body)
        except (OSError, ValueError) as exc:
            raise SystemExit(f"error: grid metric {body!r}: {exc}")
    raise SystemExit(
        f"error: unknown metric keyword {head!r} (known: flat, "
        f"schwarzschild, schwarzschild-isotropic, conformal, radial, "
        f"power-decay, grid)")


def _parse_fields(body: str) -> Dict[str, str]:
    out = {}
    for part in body.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise SystemExit(f"error: map spec field {part!r} needs '='")
        key, _, value = part.partition("=")
        out[key.strip()] = value.strip()
    return out


def _parse_orthogonal(spec: str, n: int) -> np.ndarray:
    if spec == "identity":
        return np.eye(n)
    vals = np.array([float(v) for v in spec.split(",")])
    if vals.size != n * n:
        raise SystemExit(
            f"error: O needs {n * n} entries, got {vals.size}")
    O = vals.reshape(n, n)
    if np.max(np.abs(O @ O.T - np.eye(n))) > 1e-10:
        raise SystemExit("error: O is not orthogonal to 1e-10")
    return O


def parse_map_spec(spec: str, n: int = 3) -> C.SmoothMap:
    head, body = _split_spec(spec.strip())
    fields = _parse_fields(body)

    def isometry_of(fields):
        O = _parse_orthogonal(fields.get("O", "identity"), n)
        v = (np.array([float(x) for x in fields["v"].split(",")])
             if "v" in fields else np.zeros(n))
        if v.size != n:
            raise SystemExit(f"error: v needs {n} entries")
        return C.EuclideanIsometry(O, v)

    if head == "isometry":
        return isometry_of(fields).as_map()
    if head == "perturbed-isometry":
        L = isometry_of(fields)
        eps = float(fields.get("eps", "0.01"))
        bump = fields.get("bump", "sin")
        return C.perturbed_isometry_map(L, eps, bump=bump)
    if head == "synthetic-transition":
        tau = float(fields.get("tau", "1.0"))
        c = float(fields.get("c", "0.5"))
        return C.synthetic_transition_map(tau, c, n)
    raise SystemExit(
        f"error: unknown map keyword {head!r} (known: isometry, "
        f"perturbed-isometry, synthetic-transition)")


# ---------------------------------------------------------------------------
# outputs


def write_csv(path: str, header: List[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt17(v) for v in row) + "\n")


def write_manifest(out: str, scenario: str, args: argparse.Namespace,
                   measured: Dict[str, object]) -> str:
    """Record every parameter and measured constant next to the CSV."""
    path = os.path.splitext(out)[0] + ".manifest.txt"
    skip = {"func", "dests"}
    with open(path, "w") as fh:
        fh.write(f"scenario = {scenario}\n")
        for key in sorted(vars(args)):
            if key in skip:
                continue
            value = getattr(args, key)
            if isinstance(value, float):
                value = fmt17(value)
            fh.write(f"{key} = {value}\n")
        for key in sorted(measured):
            value = measured[key]
            if isinstance(value, (list, tuple, np.ndarray)):
                value = "[" + ", ".join(fmt17(v) for v in value) + "]"
            elif isinstance(value, (float, np.floating)):
                value = fmt17(value)
            fh.write(f"measured.{key} = {value}\n")
    return path


def render_figure(out: str, draw) -> str:
    """Render a companion PNG next to the delimited output."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    draw(ax)
    path = os.path.splitext(out)[0] + ".png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _floats(csv: str) -> List[float]:
    return [float(v) for v in csv.split(",") if v.strip()]


# ---------------------------------------------------------------------------
# scenarios


def run_mass(args) -> int:
    require(args, "metric", "dim", "r", "out")
    n = args.dim
    field = parse_metric_spec(args.metric, n)
    a, b = _floats(args.phi)
    phi = T.make_bump(a, b)
    if args.normalization == "paper":
        norm = None
    elif args.normalization == "unit":
        norm = 1.0
    elif args.normalization.startswith("custom:"):
        norm = float(args.normalization.split(":", 1)[1])
    else:
        raise SystemExit(
            f"error: bad --normalization {args.normalization!r} "
            f"(paper | unit | custom:<float>)")
    rows = []
    for r in _floats(args.r):
        rep = M.c0_local_mass(field, phi, r, radial_order=args.quad_radial,
                              sphere_degree=args.quad_sph,
                              normalization=norm,
                              testfn_id=f"bump({fmt17(a)},{fmt17(b)})")
        rows.append((rep.r, rep.raw_volume, rep.raw_boundary,
                     rep.unnormalized, rep.normalized))
    header = ["r [coordinate length]",
              "raw_volume [length^(n-2) weighted]",
              "raw_boundary [length^(n-2) weighted]",
              "unnormalized [averaged surface integral]",
              "normalized [unnormalized x normalization]"]
    write_csv(args.out, header, rows)
    measured = {"normalization": (M.paper_normalization(n)
                                  if norm is None else norm),
                "phi_integral": phi.integral(0.9, 1.1)}
    write_manifest(args.out, "mass", args, measured)

    def draw(ax):
        rs = [row[0] for row in rows]
        ax.plot(rs, [row[3] for row in rows], "o-", label="unnormalized")
        ax.set_xlabel("r")
        ax.set_ylabel("annulus mass functional")
        ax.legend()
    render_figure(args.out, draw)
    return 0


def run_testfn(args) -> int:
    require(args, "phi", "theta", "dim", "out")
    a, b = _floats(args.phi)
    phi = T.make_bump(a, b)
    theta = args.theta
    store = np.linspace(0.0, theta, args.snapshots)
    flw = T.evolve_testfn(phi, theta, args.dim, n_nodes=args.nodes,
                          store_times=store)
    rows = []
    for k, t in enumerate(flw.t_slices):
        for j, ell in enumerate(flw.ell):
            rows.append((t, ell, flw.values[k, j], flw.dvalues[k, j]))
    header = ["t [flow time]", "ell [radius]",
              "phi [dimensionless]", "dphi [1/length]"]
    write_csv(args.out, header, rows)
    measured = {"theta_threshold": T.theta_threshold(phi, args.dim),
                "min_value": flw.min_value}
    write_manifest(args.out, "testfn", args, measured)

    def draw(ax):
        for k, t in enumerate(flw.t_slices):
            ax.plot(flw.ell, flw.values[k], label=f"t={t:.3g}")
        ax.set_xlabel("ell")
        ax.set_ylabel("phi_theta")
        ax.legend(fontsize=7)
    render_figure(args.out, draw)
    return 0


def _diag_rows(traj: F.FlowTrajectory):
    rows = []
    ratios = traj.grad_ratio_series()
    for k, t in enumerate(traj.diag_times):
        rows.append((t, "sup_h", traj.diag_sup_h[k]))
        rows.append((t, "sup_grad_h", traj.diag_sup_grad[k]))
        rows.append((t, "grad_ratio", ratios[k]))
    return rows


def run_flow(args) -> int:
    require(args, "metric", "dim", "T", "out")
    field = parse_metric_spec(args.metric, args.dim)
    kwargs = dict(dt_factor=args.dt_factor)
    if args.solver == "grid":
        kwargs.update(grid_n=args.grid, half_width=args.half_width)
    else:
        kwargs.update(radial_nodes=args.radial,
                      ell_range=(0.0, args.ell_max))
    traj = F.rdtf_solve(field, args.T, solver=args.solver,
                        output_times=[args.T], **kwargs)
    header = ["t [flow time]", "diag_name [.]", "value [sup norm scale]"]
    rows = _diag_rows(traj)
    write_csv(args.out, header, rows)
    if args.snapshot_out:
        state = traj.state_at(args.T)
        if state.kind != "grid":
            raise SystemExit(
                "error: --snapshot-out needs the grid solver")
        G.write_grid_file(args.snapshot_out, state.h + np.eye(args.dim),
                          origin=state.origin, spacing=state.spacing)
    measured = {"eps0": traj.eps0, "dt": traj.dt,
                "aborted": traj.aborted}
    write_manifest(args.out, "flow", args, measured)

    def draw(ax):
        ax.plot(traj.diag_times, traj.diag_sup_h, label="sup |h|")
        ax.plot(traj.diag_times, traj.diag_sup_grad, label="sup |grad h|")
        ax.set_xlabel("t")
        if np.any(np.asarray(traj.diag_sup_h) > 0.0):
            ax.set_yscale("log")
        ax.legend()
    render_figure(args.out, draw)
    return 0


def run_distortion(args) -> int:
    require(args, "metric", "dim", "r", "theta", "out")
    field = parse_metric_spec(args.metric, args.dim)
    a, b = _floats(args.phi)
    phi = T.make_bump(a, b)
    series = F.distortion_experiment(
        field, args.r, args.theta, phi,
        n_snapshots=args.snapshots, radial_nodes=args.radial,
        testfn_nodes=args.testfn_nodes)
    header = ["t [flow time, unit scale]", "diag_name [.]",
              "value [unnormalized mass]"]
    masses = [rep.unnormalized for rep in series.reports]
    rows = [(t, "coupled_mass", m) for t, m in zip(series.times, masses)]
    write_csv(args.out, header, rows)
    measured = {"total_variation": series.total_variation,
                "theta": args.theta}
    write_manifest(args.out, "distortion", args, measured)

    def draw(ax):
        ax.plot(series.times, masses, "o-")
        ax.set_xlabel("t (unit scale)")
        ax.set_ylabel("coupled mass")
    render_figure(args.out, draw)
    return 0


def run_monotonicity(args) -> int:
    require(args, "metric", "dim", "r", "r2", "out")
    check_decay_condition(args.tau, args.dim)
    field = parse_metric_spec(args.metric, args.dim)
    a, b = _floats(args.phi)
    phi = T.make_bump(a, b)
    rprimes = _floats(args.r2)
    res = F.monotonicity_experiment(field, args.r, rprimes, phi, phi,
                                    eta=args.eta, tau=args.tau,
                                    radial_nodes=args.radial)
    header = ["r [coordinate length]", "rprime [coordinate length]",
              "delta_m [unnormalized mass]", "c_fit [allowance constant]"]
    rows = [(res.r, rp, dm, res.c_fit)
            for rp, dm in zip(res.rprimes, res.delta_m)]
    write_csv(args.out, header, rows)
    measured = {"mass_r": res.mass_r, "masses_rprime": res.masses_rprime,
                "c_fit": res.c_fit, "exponent": res.exponent,
                "eps0": res.eps0}
    write_manifest(args.out, "monotonicity", args, measured)

    def draw(ax):
        ax.plot(res.rprimes, res.delta_m, "o-")
        ax.axhline(0.0, color="gray", lw=0.5)
        ax.set_xlabel("r'")
        ax.set_ylabel("Delta M")
    render_figure(args.out, draw)
    return 0


def run_finiteness(args) -> int:
    require(args, "metric", "dim", "r", "r2", "out")
    check_decay_condition(args.tau, args.dim)
    field = parse_metric_spec(args.metric, args.dim)
    rks = _floats(args.r)
    rprimes = _floats(args.r2)
    rows = []
    series = []
    for rk in rks:
        scaled = F.extend_metric(G.rescaled_field(F._as_radial(field), rk),
                                 (0.95, 11.5), (0.88, 12.3))
        s_k = (0.9 / 1.1) ** (2.0 - args.eta) * rk ** (-args.eta)
        traj = F.rdtf_solve(scaled, s_k, solver="radial",
                            radial_nodes=args.radial,
                            ell_range=(0.0, 12.5), output_times=[s_k])
        vals = F.scalar_l1_annulus(traj.state_at(s_k), 1.0, rprimes)
        series.append(rk * float(np.max(np.abs(vals))))
        for rp, v in zip(rprimes, vals):
            rows.append((s_k, f"annulus_l1@rprime={fmt17(rp)}", v))
        rows.append((s_k, f"scaled_statistic@r={fmt17(rk)}", series[-1]))
    header = ["t [flow time, unit scale]", "diag_name [.]",
              "value [scalar curvature L1]"]
    write_csv(args.out, header, rows)
    increasing = bool(np.all(np.diff(series) > 0.0)) if len(series) > 1 \
        else False
    measured = {"scaled_series": series,
                "flagged_divergent": increasing}
    write_manifest(args.out, "finiteness", args, measured)

    def draw(ax):
        ax.plot(rks, series, "o-")
        ax.set_xlabel("r_k")
        ax.set_ylabel("r_k * max annulus L1")
    render_figure(args.out, draw)
    return 0


def run_glue(args) -> int:
    require(args, "map", "r", "out")
    Fmap = parse_map_spec(args.map)
    res = C.glue_to_isometry(Fmap, args.r, seed=args.seed)
    pts = C.annulus_sample(3, 0.9 * args.r, 11.0 * args.r, args.samples,
                           seed=args.seed)
    fx = Fmap(pts)
    gx = res.map(pts)
    dF = res.map.differential(pts)
    dev = np.max(np.abs(np.einsum("pki,pkj->pij", dF, dF) - np.eye(3)),
                 axis=(1, 2))
    header = ["x1 [length]", "x2 [length]", "x3 [length]",
              "F1 [length]", "F2 [length]", "F3 [length]",
              "Ftilde1 [length]", "Ftilde2 [length]", "Ftilde3 [length]",
              "pullback_deviation [dimensionless]"]
    rows = [tuple(p) + tuple(f) + tuple(g) + (d,)
            for p, f, g, d in zip(pts, fx, gx, dev)]
    write_csv(args.out, header, rows)
    measured = {"delta_input": res.delta_input,
                "pullback_sup": res.pullback_sup,
                "loss_ratio": res.loss_ratio}
    write_manifest(args.out, "glue", args, measured)
    if args.delta_report:
        print(f"delta_input = {fmt17(res.delta_input)}")
        print(f"pullback_sup = {fmt17(res.pullback_sup)}")
        print(f"loss_ratio = {fmt17(res.loss_ratio)}")

    def draw(ax):
        ax.semilogy(np.linalg.norm(pts, axis=1), np.maximum(dev, 1e-18),
                    ".", ms=2)
        ax.set_xlabel("|x|")
        ax.set_ylabel("|Ftilde* delta - delta|")
    render_figure(args.out, draw)
    return 0


def run_accept(args) -> int:
    def progress(res):
        verdict = "PASS" if res.passed else "FAIL"
        print(f"{verdict} {res.name} ({res.runtime_s:.1f}s)", flush=True)

    try:
        results = A.run_acceptance(args.filter, progress=progress)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    for line in A.summary_lines(results)[-1:]:
        print(line)
    if args.out:
        payload = [{"name": r.name, "passed": bool(r.passed),
                    "runtime_s": r.runtime_s,
                    "checks": {k: bool(v) for k, v in r.checks.items()},
                    "measured": json.loads(json.dumps(
                        r.measured, default=lambda o: float(o)
                        if isinstance(o, (np.floating, np.integer))
                        else list(o)))}
                   for r in results]
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(sp):
    sp.add_argument("--config", help="key = value config file; overrides flags")
    sp.add_argument("--seed", type=int, default=0,
                    help="seed for sampled diagnostics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="c0mass-lab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="scenario", required=True)

    sp = sub.add_parser("mass", help="annulus mass functional table")
    sp.add_argument("--metric")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--r", help="comma-separated radii")
    sp.add_argument("--phi", default="0.95,1.05", help="bump support a,b")
    sp.add_argument("--quad-radial", type=int, default=128)
    sp.add_argument("--quad-sph", type=int, default=23)
    sp.add_argument("--normalization", default="paper",
                    help="paper | unit | custom:<float>")
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_mass)

    sp = sub.add_parser("testfn", help="evolved test-function table")
    sp.add_argument("--phi", help="bump support a,b")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--nodes", type=int, default=2048)
    sp.add_argument("--snapshots", type=int, default=9)
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_testfn)

    sp = sub.add_parser("flow", help="flow trajectory diagnostics")
    sp.add_argument("--metric")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--solver", choices=("radial", "grid"), default="radial")
    sp.add_argument("--grid", type=int, default=64)
    sp.add_argument("--half-width", type=float, default=1.5)
    sp.add_argument("--radial", type=int, default=4096)
    sp.add_argument("--ell-max", type=float, default=3.0)
    sp.add_argument("--T", type=float)
    sp.add_argument("--dt-factor", type=float, default=0.2)
    sp.add_argument("--snapshot-out", help="binary grid snapshot at T")
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_flow)

    sp = sub.add_parser("distortion", help="coupled mass series")
    sp.add_argument("--metric")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--r", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--phi", default="0.96,1.04")
    sp.add_argument("--snapshots", type=int, default=7)
    sp.add_argument("--radial", type=int, default=1600)
    sp.add_argument("--testfn-nodes", type=int, default=2048)
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_distortion)

    sp = sub.add_parser("monotonicity", help="two-radius mass comparison")
    sp.add_argument("--metric")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--r", type=float)
    sp.add_argument("--r2", help="comma-separated r' values")
    sp.add_argument("--eta", type=float, default=0.5)
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--phi", default="0.92,1.08")
    sp.add_argument("--radial", type=int, default=1024)
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_monotonicity)

    sp = sub.add_parser("finiteness", help="flowed scalar L1 statistic")
    sp.add_argument("--metric")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--r", help="comma-separated base radii r_k")
    sp.add_argument("--r2", help="comma-separated r'/r ratios")
    sp.add_argument("--eta", type=float, default=0.5)
    sp.add_argument("--tau", type=float, default=1.0)
    sp.add_argument("--radial", type=int, default=640)
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_finiteness)

    sp = sub.add_parser("glue", help="glue a near-isometry to an isometry")
    sp.add_argument("--map", help="map spec, see module docstring")
    sp.add_argument("--r", type=float)
    sp.add_argument("--delta-report", action="store_true")
    sp.add_argument("--samples", type=int, default=400)
    sp.add_argument("--out")
    _add_common(sp)
    sp.set_defaults(func=run_glue)

    sp = sub.add_parser("accept", help="run the acceptance suite")
    sp.add_argument("--filter", default="",
                    help="anchored regex over criterion names")
    sp.add_argument("--out", help="JSON report path")
    _add_common(sp)
    sp.set_defaults(func=run_accept)

    return parser


def main(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    apply_config(args, list(vars(args)))
    try:
        return args.func(args)
    except (ValueError, G.OutOfDomainError, G.DegenerateMetricError,
            F.FlowBlowupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

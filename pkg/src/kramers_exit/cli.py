"""Command-line runner: ``kramers-exit {verify,predict,simulate,solve,capacity,compare}``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .asymptotics import (
    constant_boundary_mean_exit,
    find_boundary_minima,
    morse_boundary_mean_exit,
    sharp_mean_exit,
)
from .capacity import (
    capacity_asymptotic,
    capacity_lower_bound,
    capacity_pde,
    capacity_upper_bound,
    default_capacitor,
    log_mean_exit_via_capacity,
    validate_capacitor,
    CapacitorConfig,
)
from .config import load_config
from .domain import build_boundary_quadrature, make_domain, verify_hypothesis
from .eikonal import build_chart, chart_identities_report
from .errors import ConfigError, KramersError, SimulationError
from .pde import Grid2D, assemble, smallest_eigenvalue, solve_mean_exit
from .potential import make_potential
from .sde import SimulationConfig, default_max_steps, simulate_exit

EXIT_OK = 0
EXIT_HYPOTHESIS = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SIMULATION = 4


# output helpers ------------------------------------------------------------


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _atomic_write(path, data):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    return buf.getvalue().encode("utf-8")


def _json_bytes(doc):
    return (json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n").encode("utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


class Run:
    """One output directory: artifacts plus a manifest of their hashes."""

    def __init__(self, out, command, cfg):
        self.out = out
        self.command = command
        self.files = {}
        self.write("config.json", _json_bytes(cfg.to_dict()))

    def write(self, name, data):
        _atomic_write(os.path.join(self.out, name), data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def close(self):
        manifest = {"command": self.command, "version": __version__, "files": dict(sorted(self.files.items()))}
        _atomic_write(os.path.join(self.out, "manifest.json"), _json_bytes(manifest))


# experiment context ----------------------------------------------------------


class Context:
    def __init__(self, cfg):
        self.cfg = cfg
        try:
            self.p = make_potential(cfg.potential.name, **cfg.potential.params)
            self.dom = make_domain(cfg.domain.name, **cfg.domain.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        self.bq = build_boundary_quadrature(self.dom, cfg.boundary_nodes)
        self.report = verify_hypothesis(self.p, self.dom, self.bq)
        self._chart = None
        self._minima = None

    @property
    def x0(self):
        if self.report.x0 is None:
            raise KramersError("no interior minimum found; run 'verify' for details")
        return self.report.x0

    @property
    def start(self):
        return tuple(self.cfg.start) if self.cfg.start is not None else tuple(float(v) for v in self.x0.location)

    def chart(self):
        if self._chart is None:
            bq = build_boundary_quadrature(self.dom, self.cfg.chart.nodes)
            self._chart = build_chart(self.p, self.dom, bq, delta=self.cfg.chart.delta)
        return self._chart

    def capacitor(self):
        chart = self.chart()
        if self.cfg.capacity.radius is None:
            return default_capacitor(self.dom, self.bq, self.x0, chart.delta, chart)
        cfg = CapacitorConfig(tuple(float(v) for v in self.x0.location), self.cfg.capacity.radius, chart.delta)
        return validate_capacitor(cfg, self.dom, chart)

    def minima(self):
        if self._minima is None:
            self._minima = find_boundary_minima(self.p, self.bq)
        return self._minima

    def prediction(self, method, eps):
        if method == "sharp":
            return sharp_mean_exit(self.p, self.dom, self.bq, self.x0, eps)
        if method == "lap11":
            f1 = float(np.min(self.p.value(self.bq.nodes)))
            return constant_boundary_mean_exit(self.p, self.bq, self.x0, f1, eps)
        if method == "lap12":
            return morse_boundary_mean_exit(self.p, self.bq, self.x0, self.minima(), eps)
        raise ValueError(method)

    def sim_config(self, eps):
        s = self.cfg.sde
        if s.max_steps is not None:
            steps = s.max_steps
        else:
            steps = default_max_steps(sharp_mean_exit(self.p, self.dom, self.bq, self.x0, eps).mean_exit, s.dt)
        return SimulationConfig(
            epsilon=eps, dt=s.dt, n_paths=s.n_paths, max_steps=steps, start=self.start,
            seed=self.cfg.seed, crossing_mode=s.crossing_mode, workers=s.workers,
            max_censored_fraction=s.max_censored_fraction,
        )

    def pde(self, eps):
        grid = Grid2D(self.dom, self.cfg.grid.h, anchor=self.start, cut=self.cfg.grid.cut)
        op = assemble(self.p, grid, eps)
        u = solve_mean_exit(op)
        lam, _ = smallest_eigenvalue(op)
        return {"u": u.at_node(self.start), "lambda": lam, "peclet": op.peclet}


# commands ---------------------------------------------------------------------


def cmd_verify(ctx, run):
    doc = ctx.report.to_dict()
    run.write("hypothesis.json", _json_bytes(doc))
    print(f"hypothesis {'passed' if doc['passed'] else 'FAILED'}: min dn f = {doc['normal_derivative_min']:.6g}, "
          f"unique minimum = {doc['unique_minimum']}")
    return EXIT_OK if doc["passed"] else EXIT_HYPOTHESIS


def _prediction_methods(ctx):
    return [m for m in ctx.cfg.methods if m in ("sharp", "lap11", "lap12")] or ["sharp"]


def cmd_predict(ctx, run):
    rows = []
    for eps in ctx.cfg.epsilon:
        ref = ctx.prediction("sharp", eps)
        for m in _prediction_methods(ctx):
            pr = ctx.prediction(m, eps)
            rows.append((eps, m, pr.log_mean_exit, pr.mean_exit, pr.eigenvalue,
                         math.exp(pr.log_mean_exit - ref.log_mean_exit)))
    run.write("predict.csv", _csv_bytes(
        ["epsilon", "method", "log_mean_exit", "mean_exit", "eigenvalue", "ratio_to_sharp"], rows))
    for r in rows:
        print(f"eps={r[0]:<8g} {r[1]:<6} log E[tau]={r[2]:.10g}  E[tau]={r[3]:.6g}")
    return EXIT_OK


def cmd_simulate(ctx, run):
    docs = []
    for eps in ctx.cfg.epsilon:
        sc = ctx.sim_config(eps)
        st = simulate_exit(ctx.p, ctx.dom, sc)
        d = {"epsilon": eps, "config": sc.to_dict(), "stats": st.to_dict()}
        docs.append(d)
        if ctx.cfg.sde.dump_raw:
            buf = st.raw.times[st.raw.status == 0].astype("<f8").tobytes()
            run.write(f"exit_times_eps{eps!r}.bin", buf)
        print(f"eps={eps:<8g} mean={st.mean:.6g}  95% CI [{st.ci95[0]:.6g}, {st.ci95[1]:.6g}]  "
              f"censored={st.censored_fraction:.2%}")
    run.write("simulate.json", _json_bytes({"runs": docs}))
    return EXIT_OK


def cmd_solve(ctx, run):
    rows = []
    for eps in ctx.cfg.epsilon:
        r = ctx.pde(eps)
        rows.append((eps, ctx.cfg.grid.h, r["u"], r["lambda"], r["lambda"] * r["u"], r["peclet"]))
        print(f"eps={eps:<8g} u(x0)={r['u']:.8g}  lambda={r['lambda']:.8g}  lambda*u={r['lambda'] * r['u']:.6f}")
    run.write("solve.csv", _csv_bytes(["epsilon", "h", "u_x0", "lambda", "lambda_times_u", "peclet"], rows))
    return EXIT_OK


def _capacity_rows(ctx, eps):
    cap_cfg = ctx.capacitor()
    chart = ctx.chart()
    bi = capacity_asymptotic(ctx.p, ctx.bq, eps)
    out = {"boundary-integral": bi}
    if "capacity-upper" in ctx.cfg.methods or "capacity-pde" not in ctx.cfg.methods:
        out["test-function-upper"] = capacity_upper_bound(chart, cap_cfg, eps)
    if "capacity-pde" in ctx.cfg.methods:
        est, field = capacity_pde(ctx.p, ctx.dom, cap_cfg, eps, ctx.cfg.grid.h, shift=bi.shift, cut=ctx.cfg.grid.cut)
        out["pde-dirichlet-form"] = est
        hd = np.minimum(field(chart.psi_nodes[:, -1]), 1.0)
        out["fiber-optimal-lower"] = capacity_lower_bound(chart, cap_cfg, eps, hd)
    return bi, out


def cmd_capacity(ctx, run):
    rows = []
    for eps in ctx.cfg.epsilon:
        bi, caps = _capacity_rows(ctx, eps)
        for name, c in caps.items():
            rows.append((eps, name, c.log_value, c.ratio(bi)))
        print(f"eps={eps:<8g} " + "  ".join(f"{k}={c.ratio(bi):.5f}" for k, c in caps.items()))
    run.write("capacity.csv", _csv_bytes(["epsilon", "method", "log_value", "ratio_to_boundary_integral"], rows))
    return EXIT_OK


def fit_linear_constant(eps, ratios):
    """Least-squares C in ``ratio = 1 + C eps`` and the worst residual as a
    fraction of ``|C eps|``."""
    e = np.asarray(eps, dtype=float)
    r = np.asarray(ratios, dtype=float) - 1.0
    C = float(np.sum(e * r) / np.sum(e * e))
    resid = np.abs(r - C * e)
    scale = np.abs(C * e)
    frac = float(np.max(resid / np.where(scale > 0, scale, np.inf))) if C != 0 else math.inf
    return C, frac


def cmd_compare(ctx, run):
    cfg = ctx.cfg
    eps_list = cfg.epsilon
    table = {}
    extra = {}
    for eps in eps_list:
        row = {}
        for m in _prediction_methods(ctx):
            row[m] = ctx.prediction(m, eps).log_mean_exit
        if "sharp" not in row:
            row["sharp"] = ctx.prediction("sharp", eps).log_mean_exit
        if "mc" in cfg.methods:
            st = simulate_exit(ctx.p, ctx.dom, ctx.sim_config(eps))
            row["mc"] = math.log(st.mean)
            extra[(eps, "mc_std_error")] = st.std_error
        if "pde" in cfg.methods:
            r = ctx.pde(eps)
            row["pde"] = math.log(r["u"])
            extra[(eps, "pde_lambda_times_u")] = r["lambda"] * r["u"]
        if "capacity-upper" in cfg.methods or "capacity-pde" in cfg.methods:
            _, caps = _capacity_rows(ctx, eps)
            if "test-function-upper" in caps:
                row["capacity-upper"] = log_mean_exit_via_capacity(caps["test-function-upper"], ctx.x0, eps)
            if "pde-dirichlet-form" in caps:
                row["capacity-pde"] = log_mean_exit_via_capacity(caps["pde-dirichlet-form"], ctx.x0, eps)
        table[eps] = row

    methods = [m for m in ("sharp", "lap11", "lap12", "mc", "pde", "capacity-upper", "capacity-pde")
               if all(m in table[e] for e in eps_list)]
    header = ["epsilon"] + [f"log_mean_exit_{m}" for m in methods] + [f"ratio_{m}_to_sharp" for m in methods if m != "sharp"]
    header += ["mc_std_error", "pde_lambda_times_u"]
    rows = []
    for eps in eps_list:
        row = table[eps]
        vals = [eps] + [row[m] for m in methods]
        vals += [math.exp(row[m] - row["sharp"]) for m in methods if m != "sharp"]
        vals += [extra.get((eps, "mc_std_error")), extra.get((eps, "pde_lambda_times_u"))]
        rows.append(vals)
    run.write("compare.csv", _csv_bytes(header, rows))

    fits = []
    for m in methods:
        if m == "sharp":
            continue
        ratios = [math.exp(table[e][m] - table[e]["sharp"]) for e in eps_list]
        C, frac = fit_linear_constant(eps_list, ratios)
        fits.append((m, C, frac))
    run.write("fits.csv", _csv_bytes(["method", "fitted_C", "max_residual_fraction"], fits))

    if ctx._chart is not None:
        diag = chart_identities_report(ctx._chart)
        run.write("chart_diagnostics.json", _json_bytes(diag.as_dict()))

    print("epsilon  " + "  ".join(f"{m:>14}" for m in methods))
    for eps in eps_list:
        print(f"{eps:<8g} " + "  ".join(f"{math.exp(table[eps][m]):14.6g}" for m in methods))
    for m, C, frac in fits:
        print(f"{m}: ratio to sharp ~ 1 + {C:.4g} eps (worst residual {frac:.1%} of C eps)")
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "capacity": cmd_capacity,
    "compare": cmd_compare,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="kramers-exit", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment TOML file")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="override the random seed")
    ap.add_argument("--epsilon", help="comma-separated temperatures (override)")
    ap.add_argument("--workers", type=int, help="Monte Carlo worker threads (override)")
    return ap


def _parse_eps(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--epsilon: cannot parse {text!r}") from None
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise ConfigError("--epsilon: expected positive numbers")
    return vals


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.epsilon is not None:
            cfg.epsilon = _parse_eps(args.epsilon)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg.sde = replace(cfg.sde, workers=args.workers)
        out = args.out or cfg.output
        print(f"kramers-exit {args.command}  started {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
        ctx = Context(cfg)
        run = Run(out, args.command, cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            code = COMMANDS[args.command](ctx, run)
        run.close()
        print(f"outputs in {out}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except KramersError as exc:
        print(f"{args.command} failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    discrete-aoi analytic --discipline preemptive --Y geometric:0.5 --S geometric:0.5
    discrete-aoi compare  --discipline nonpreemptive --Y geometric:0.5 --gamma 0.5
    discrete-aoi sweep    --discipline preemptive --Y geometric:0.5 --grid gamma=0.1:0.9:0.1

Exit status: 0 success, 1 tolerance or convergence failure, 2 usage or
parameter error.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import chain as chain_mod
from .analytic import (
    CertificationError,
    Discipline,
    SystemSpec,
    UnsupportedAnalyticsError,
    analyze,
)
from .dist import DomainError, ParameterError, make_geometric, parse_dist
from .report import FORMATS, Report, pmf_rows, plot_pmfs, plot_sweep
from .sim import SimConfig, simulate

log = logging.getLogger("discrete_aoi")

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE = 0, 1, 2
COMMANDS = ("analytic", "chain", "sim", "compare", "sweep")
MAX_GRID = 10_000
SWEEP_PARAMS = ("p", "gamma")


class ToleranceFailure(RuntimeError):
    """Raised when a comparison exceeds its tolerance; carries the report."""

    def __init__(self, message: str, report: Report):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class RunConfig:
    command: str
    spec: Optional[SystemSpec]
    order: int = 256
    nmax: Optional[int] = None
    tol: float = 1e-12
    max_iters: int = 1_000_000
    slots: int = 1_000_000
    warmup: Optional[int] = None
    seed: int = 0
    replications: int = 4
    fmt: str = "csv"
    out: Optional[str] = None
    plot: Optional[str] = None
    tol_mean: float = 1e-6
    tol_pmf: float = 1e-6
    sim_sigmas: float = 3.0
    tol_sim_pmf: float = 0.01
    grid: tuple = ()
    engines: tuple = ("analytic",)
    jobs: int = 1
    dump_edges: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command {self.command!r}")
        if self.fmt not in FORMATS:
            raise ParameterError(f"unknown format {self.fmt!r}")
        for name in ("order", "slots", "replications", "max_iters", "jobs"):
            if getattr(self, name) < 1:
                raise ParameterError(f"--{name.replace('_', '-')} must be positive")
        if self.nmax is not None and self.nmax < 3:
            raise ParameterError("--nmax must be at least 3")
        for name in ("tol", "tol_mean", "tol_pmf", "sim_sigmas", "tol_sim_pmf"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"--{name.replace('_', '-')} must be positive")

    @property
    def sim_warmup(self) -> int:
        if self.warmup is not None:
            return self.warmup
        return min(10_000, self.slots // 10)


# -- argument parsing -------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discrete-aoi",
        description="Stationary discrete Age of Information for bufferless status-update links.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("system")
    g.add_argument("--discipline", required=True, choices=[d.value for d in Discipline])
    g.add_argument("--Y", dest="Y", help="interarrival distribution, e.g. geometric:0.5")
    svc = g.add_mutually_exclusive_group()
    svc.add_argument("--S", dest="S", help="service distribution, e.g. explicit:0.5,0.5")
    svc.add_argument("--gamma", type=float, help="geometric service rate (shorthand for --S geometric:RATE)")
    k = common.add_argument_group("numerics")
    k.add_argument("--order", type=_positive_int, default=256, help="series truncation order T (default 256)")
    k.add_argument("--nmax", type=_positive_int, help="AoI truncation of the Markov chain")
    k.add_argument("--tol", type=_positive_float, default=1e-12, help="stationary-iteration tolerance")
    k.add_argument("--max-iters", type=_positive_int, default=1_000_000)
    k.add_argument("--slots", type=_positive_int, default=1_000_000, help="simulated slots per replication")
    k.add_argument("--warmup", type=int, help="discarded slots (default min(1e4, slots/10))")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--reps", type=_positive_int, default=4, help="simulation replications")
    o = common.add_argument_group("output")
    o.add_argument("--format", dest="fmt", choices=FORMATS, default="csv")
    o.add_argument("--out", help="table path; the summary goes to <stem>.summary.<ext>")
    o.add_argument("--plot", help="also render a PNG figure to this path")

    sub.add_parser("analytic", parents=[common], help="closed-form pmf and mean")
    p = sub.add_parser("chain", parents=[common], help="truncated Markov-chain oracle")
    p.add_argument("--dump-edges", help="write the transition list to this file")
    sub.add_parser("sim", parents=[common], help="Monte Carlo simulation")
    p = sub.add_parser("compare", parents=[common], help="cross-check all applicable engines")
    p.add_argument("--tol-mean", type=_positive_float, default=1e-6, help="analytic vs chain mean gap")
    p.add_argument("--tol-pmf", type=_positive_float, default=1e-6, help="analytic vs chain L-inf pmf gap")
    p.add_argument("--sim-sigmas", type=_positive_float, default=3.0, help="allowed simulated mean error in SEs")
    p.add_argument("--tol-sim-pmf", type=_positive_float, default=0.01, help="simulated L-inf pmf gap")
    p.add_argument("--no-sim", action="store_true", help="skip the simulator")
    p = sub.add_parser("sweep", parents=[common], help="mean AoI over a parameter grid")
    p.add_argument("--grid", action="append", default=[], metavar="NAME=VALUES",
                   help="p or gamma, VALUES as start:stop:step or v1,v2,...; repeat for a product grid")
    p.add_argument("--engines", default="analytic", help="comma list from analytic,chain,sim")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    return parser


def parse_grid_values(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(x) for x in parts)
        if not step > 0:
            raise ParameterError("range step must be positive")
        if stop < start:
            return []
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        if count > MAX_GRID:
            raise ParameterError(f"grid axis has {count} points (max {MAX_GRID})")
        return [float(f"{start + i * step:.12g}") for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def parse_grid(items: Sequence[str]) -> tuple:
    axes = []
    seen = set()
    for item in items:
        name, sep, values = item.partition("=")
        name = name.strip()
        if not sep or name not in SWEEP_PARAMS:
            raise ParameterError(f"grid axis must be p=... or gamma=..., got {item!r}")
        if name in seen:
            raise ParameterError(f"grid axis {name!r} given twice")
        seen.add(name)
        axes.append((name, tuple(parse_grid_values(values))))
    total = 1
    for _, vals in axes:
        total *= len(vals)
    if not axes or total == 0:
        raise ParameterError("empty sweep grid")
    if total > MAX_GRID:
        raise ParameterError(f"sweep grid has {total} points (max {MAX_GRID})")
    return tuple(axes)


def _spec_from_args(args, needs_y: bool = True, needs_s: bool = True) -> Optional[SystemSpec]:
    if args.Y is None and needs_y:
        raise ParameterError("--Y is required")
    if args.S is None and args.gamma is None and needs_s:
        raise ParameterError("one of --S or --gamma is required")
    Y = parse_dist(args.Y) if args.Y is not None else make_geometric(0.5)
    if args.gamma is not None:
        S = make_geometric(args.gamma)
    elif args.S is not None:
        S = parse_dist(args.S)
    else:
        S = make_geometric(0.5)
    return SystemSpec(Discipline.parse(args.discipline), Y, S)


def config_from_args(args) -> RunConfig:
    kw = {}
    if args.command == "sweep":
        grid = parse_grid(args.grid)
        names = {n for n, _ in grid}
        spec = _spec_from_args(args, needs_y="p" not in names, needs_s="gamma" not in names)
        engines = tuple(e.strip() for e in args.engines.split(",") if e.strip())
        bad = [e for e in engines if e not in ("analytic", "chain", "sim")]
        if bad or not engines:
            raise ParameterError(f"unknown engines {bad or args.engines!r}")
        kw.update(grid=grid, engines=engines, jobs=args.jobs)
    else:
        spec = _spec_from_args(args)
    if args.command == "compare":
        kw.update(tol_mean=args.tol_mean, tol_pmf=args.tol_pmf, sim_sigmas=args.sim_sigmas,
                  tol_sim_pmf=args.tol_sim_pmf, extra={"no_sim": args.no_sim})
    if args.command == "chain":
        kw.update(dump_edges=args.dump_edges)
    if args.warmup is not None and not (0 <= args.warmup < args.slots):
        raise ParameterError("--warmup must satisfy 0 <= warmup < slots")
    return RunConfig(command=args.command, spec=spec, order=args.order, nmax=args.nmax,
                     tol=args.tol, max_iters=args.max_iters, slots=args.slots,
                     warmup=args.warmup, seed=args.seed, replications=args.reps,
                     fmt=args.fmt, out=args.out, plot=args.plot, **kw)


# -- engines ----------------------------------------------------------------

def _spec_fields(spec: SystemSpec) -> dict:
    return {"discipline": spec.discipline.value, "Y": spec.interarrival.spec_string(),
            "S": spec.service.spec_string()}


def run_analytic(cfg: RunConfig) -> Report:
    rep = analyze(cfg.spec, cfg.order)
    d = rep.distribution
    summary = {
        **_spec_fields(cfg.spec),
        "formula": rep.formula,
        "order": cfg.order,
        "mean_series": d.mean,
        "mean_lower": d.mean_bracket[0],
        "mean_upper": d.mean_bracket[1],
        "certified": bool(d.certified),
        "captured_mass": d.captured_mass,
        "tail_bound": d.tail_bound,
        "mean_closed_form": rep.closed_form_mean,
        "mean_gap": rep.mean_gap,
    }
    return Report("analytic", summary, ("n", "prob"), pmf_rows(d.pmf))


def _chain_summary(model, pi, aoi) -> dict:
    return {
        "nmax": model.nmax,
        "states": model.size,
        "iterations": pi.iterations,
        "residual": pi.residual,
        "leak_rate": pi.leak_rate,
        "balance_residual": chain_mod.residuals(model, pi),
        "mean": aoi.mean,
        "captured_mass": aoi.captured_mass,
        "tail_bound": aoi.tail_bound,
    }


def run_chain(cfg: RunConfig) -> Report:
    model, pi, aoi = chain_mod.solve(cfg.spec, cfg.nmax, cfg.tol, cfg.max_iters)
    if cfg.dump_edges:
        with open(cfg.dump_edges, "w") as fh:
            model.dump_edges(fh)
    summary = {**_spec_fields(cfg.spec), "tol": cfg.tol, **_chain_summary(model, pi, aoi)}
    return Report("chain", summary, ("n", "prob"), pmf_rows(aoi.pmf))


def _sim(cfg: RunConfig):
    return simulate(SimConfig(cfg.spec, cfg.slots, cfg.sim_warmup, cfg.seed, cfg.replications))


def run_sim(cfg: RunConfig) -> Report:
    res = _sim(cfg)
    summary = {**_spec_fields(cfg.spec), "mean": res.mean, "stderr": res.stderr}
    for key in ("slots", "warmup", "replications", "seed", "rng"):
        summary[key] = res.metadata[key]
    for r, m in enumerate(res.rep_means):
        summary[f"rep{r}_mean"] = float(m)
    return Report("sim", summary, ("n", "prob"), pmf_rows(res.pmf))


def _linf(a: np.ndarray, b: np.ndarray, upto: int) -> float:
    n = min(upto + 1, max(a.size, b.size))
    pa = np.zeros(n)
    pb = np.zeros(n)
    pa[: min(n, a.size)] = a[:n]
    pb[: min(n, b.size)] = b[:n]
    return float(np.max(np.abs(pa - pb)))


def run_compare(cfg: RunConfig) -> Report:
    spec = cfg.spec
    pmfs, summary, failures = {}, dict(_spec_fields(spec)), []
    try:
        rep = analyze(spec, cfg.order)
        pmfs["analytic"] = rep.distribution.pmf
        summary["mean_analytic"] = (rep.closed_form_mean if rep.closed_form_mean is not None
                                    else rep.distribution.mean)
        summary["formula"] = rep.formula
    except UnsupportedAnalyticsError as exc:
        log.info("analytic engine skipped: %s", exc)
    model, pi, aoi = chain_mod.solve(spec, cfg.nmax, cfg.tol, cfg.max_iters)
    pmfs["chain"] = aoi.pmf
    summary["mean_chain"] = aoi.mean
    summary["nmax"] = model.nmax
    if not cfg.extra.get("no_sim"):
        res = _sim(cfg)
        pmfs["sim"] = res.pmf
        summary["mean_sim"] = res.mean
        summary["sim_stderr"] = res.stderr
    if len(pmfs) < 2:
        raise UnsupportedAnalyticsError("compare needs at least two applicable engines")

    ref = "analytic" if "analytic" in pmfs else "chain"
    if "analytic" in pmfs:
        gap_mean = abs(summary["mean_analytic"] - summary["mean_chain"])
        gap_pmf = _linf(pmfs["analytic"], pmfs["chain"], min(cfg.order, model.nmax))
        summary["gap_mean_analytic_chain"] = gap_mean
        summary["gap_pmf_analytic_chain"] = gap_pmf
        if not gap_mean <= cfg.tol_mean:
            failures.append(f"analytic/chain mean gap {gap_mean:.3e} > {cfg.tol_mean:g}")
        if not gap_pmf <= cfg.tol_pmf:
            failures.append(f"analytic/chain pmf gap {gap_pmf:.3e} > {cfg.tol_pmf:g}")
    if "sim" in pmfs:
        gap_mean = abs(summary["mean_sim"] - summary[f"mean_{ref}"])
        gap_pmf = _linf(pmfs["sim"], pmfs[ref], cfg.order)
        summary[f"gap_mean_sim_{ref}"] = gap_mean
        summary[f"gap_pmf_sim_{ref}"] = gap_pmf
        allowed = cfg.sim_sigmas * summary["sim_stderr"]
        if not gap_mean <= allowed:
            failures.append(f"sim/{ref} mean gap {gap_mean:.3e} > {cfg.sim_sigmas:g} SE ({allowed:.3e})")
        if not gap_pmf <= cfg.tol_sim_pmf:
            failures.append(f"sim/{ref} pmf gap {gap_pmf:.3e} > {cfg.tol_sim_pmf:g}")
    summary["pass"] = not failures

    engines = list(pmfs)
    upto = min(cfg.order, model.nmax)
    rows = []
    for n in range(1, upto + 1):
        rows.append((n, *(float(pmfs[e][n]) if n < pmfs[e].size else 0.0 for e in engines)))
    report = Report("compare", summary, ("n", *(f"prob_{e}" for e in engines)), rows)
    if failures:
        raise ToleranceFailure("; ".join(failures), report)
    return report


def _sweep_point(args) -> tuple:
    spec, engines, cfg = args
    out = []
    if "analytic" in engines:
        rep = analyze(spec, cfg.order)
        out.append(rep.closed_form_mean if rep.closed_form_mean is not None else rep.distribution.mean)
    if "chain" in engines:
        out.append(chain_mod.solve(spec, cfg.nmax, cfg.tol, cfg.max_iters)[2].mean)
    if "sim" in engines:
        res = _sim(RunConfig("sim", spec, slots=cfg.slots, warmup=cfg.warmup, seed=cfg.seed,
                             replications=cfg.replications))
        out.extend([res.mean, res.stderr])
    return tuple(out)


def run_sweep(cfg: RunConfig) -> Report:
    names = [n for n, _ in cfg.grid]
    points = list(itertools.product(*(vals for _, vals in cfg.grid)))
    tasks = []
    for point in points:
        params = dict(zip(names, point))
        Y = make_geometric(params["p"]) if "p" in params else cfg.spec.interarrival
        S = make_geometric(params["gamma"]) if "gamma" in params else cfg.spec.service
        tasks.append((SystemSpec(cfg.spec.discipline, Y, S), cfg.engines, cfg))
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    columns = list(names)
    for e in cfg.engines:
        columns.append(f"mean_{e}")
        if e == "sim":
            columns.append("stderr_sim")
    rows = [tuple(point) + res for point, res in zip(points, results)]
    summary = {"discipline": cfg.spec.discipline.value, "points": len(rows),
               "engines": ",".join(cfg.engines)}
    if "p" not in names:
        summary["Y"] = cfg.spec.interarrival.spec_string()
    if "gamma" not in names:
        summary["S"] = cfg.spec.service.spec_string()
    return Report("sweep", summary, columns, rows)


RUNNERS = {
    "analytic": run_analytic,
    "chain": run_chain,
    "sim": run_sim,
    "compare": run_compare,
    "sweep": run_sweep,
}


# -- output -----------------------------------------------------------------

def emit(report: Report, cfg: RunConfig, stream=None):
    stream = sys.stdout if stream is None else stream
    if cfg.out:
        body, summ = report.write(cfg.out, cfg.fmt)
        log.info("wrote %s and %s", body, summ)
    else:
        stream.write(report.summary_text(cfg.fmt))
        stream.write("\n")
        stream.write(report.body_text(cfg.fmt))
    if cfg.plot:
        render_plot(report, cfg.plot)


def render_plot(report: Report, path: str):
    title = " ".join(f"{k}={report.summary[k]}" for k in ("discipline", "Y", "S") if k in report.summary)
    if report.kind == "sweep":
        x = report.columns[0]
        ycols = [c for c in report.columns if c.startswith("mean_")]
        plot_sweep(path, report, x, ycols, title)
        return
    n = np.array(report.column("n"), dtype=int)
    curves = []
    for col in report.columns[1:]:
        pmf = np.zeros(int(n.max()) + 1 if n.size else 1)
        pmf[n] = report.column(col)
        curves.append((col.replace("prob_", "") if col != "prob" else report.kind, pmf))
    plot_pmfs(path, curves, title)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        report = RUNNERS[cfg.command](cfg)
    except ToleranceFailure as exc:
        emit(exc.report, cfg)
        print(f"error: tolerance exceeded: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (chain_mod.ConvergenceError, CertificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (ParameterError, DomainError, UnsupportedAnalyticsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    emit(report, cfg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

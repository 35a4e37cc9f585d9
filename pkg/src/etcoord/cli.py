"""Command line entry point: single runs and Monte Carlo campaigns.

    etcoord run --config rendezvous --seed 3 --out out/run
    etcoord campaign --config rendezvous --b 1,10,100 --schemes etc,ttc,stc --runs 100 --out out/camp

``--config`` takes a file path or the name of a bundled scenario.
Exit codes: 0 success, 2 configuration error, 3 certificate violation.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfg
from .analysis import (
    CampaignSummary,
    RunMetrics,
    campaign_aggregate,
    lyapunov_monitor,
    run_metrics,
)
from .hybrid_sim import CertificateViolation, HybridTrajectory, initialize_rendezvous, make_rng, simulate

log = logging.getLogger("etcoord")

EXIT_OK, EXIT_CONFIG, EXIT_CERTIFICATE = 0, 2, 3


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def resolve_config(name_or_path: str) -> cfg.Scenario:
    path = Path(name_or_path)
    if not path.exists() and not path.suffix:
        bundled = resources.files("etcoord") / "scenarios" / f"{name_or_path}.cfg"
        if bundled.is_file():
            return cfg.parse(bundled.read_text(), source=str(bundled))
    return cfg.load(path)


def execute(scenario: cfg.Scenario, run_index: int = 0, seed: Optional[int] = None) -> HybridTrajectory:
    """Simulate one random start; the stream depends only on (seed, run_index)."""
    seed = scenario.seed if seed is None else seed
    net = scenario.network()
    rng = make_rng(seed, run_index)
    initial = initialize_rendezvous(net, rng, scenario.spread)
    return simulate(scenario.sim_config(seed), initial, net, rng)


# -- artifacts --------------------------------------------------------------

def write_trajectory(traj: HybridTrajectory, path: Path) -> None:
    net = traj.network
    N, M = net.node_count, net.edge_count
    header = (["t", "k"] + [f"p_{i}" for i in range(1, traj.p.shape[1] + 1)]
              + [f"v_{i}" for i in range(1, traj.v.shape[1] + 1)]
              + [f"zhat_{l}" for l in range(1, traj.zhat.shape[1] + 1)]
              + [f"trigger_{l}" for l in range(1, M + 1)])
    rows = ([t, int(k), *p, *v, *zh, *tr] for t, k, p, v, zh, tr
            in zip(traj.t, traj.k, traj.p, traj.v, traj.zhat, traj.trigger))
    _write_csv(path, header, rows)


def write_events(traj: HybridTrajectory, path: Path) -> None:
    _write_csv(path, ["t", "k", "edge"],
               ([t, int(k), int(e)] for t, k, e in zip(traj.event_t, traj.event_k, traj.event_edge)))


def _metrics_rows(runs: Sequence[RunMetrics]):
    M = len(runs[0].events_per_edge) if runs else 0
    header = (["scheme", "b", "seed", "events_total"] + [f"events_{l}" for l in range(1, M + 1)]
              + ["t_5pct"] + [f"min_interevent_{l}" for l in range(1, M + 1)]
              + ["max_state_norm", "lyap_max_increase", "sat_breaches"])
    rows = ([r.scheme, r.b, r.seed, r.events_total, *map(int, r.events_per_edge),
             "not reached" if r.t_5pct is None else r.t_5pct, *r.min_interevent,
             r.max_state_norm, r.lyap_max_increase, r.sat_breaches] for r in runs)
    return header, rows


def write_metrics(runs: Sequence[RunMetrics], path: Path) -> None:
    _write_csv(path, *_metrics_rows(runs))


def write_lyapunov(report, path: Path) -> None:
    _write_csv(path, ["t", "k", "u_phys", "u_cyber", "u_total", "mode"],
               ([s.t, s.k, s.u_phys, s.u_cyber, s.u_total, report.mode] for s in report.samples))


def emit_plot_data(traj: HybridTrajectory, path) -> None:
    """Long-format (t, series, value) rows for every position and velocity."""
    path = Path(path)
    rows = []
    for j in range(traj.p.shape[1]):
        rows += [(t, f"p_{j + 1}", x) for t, x in zip(traj.t, traj.p[:, j])]
    for j in range(traj.v.shape[1]):
        rows += [(t, f"v_{j + 1}", x) for t, x in zip(traj.t, traj.v[:, j])]
    _write_csv(path, ["t", "series", "value"], rows)


def summary_table(cells: Sequence[CampaignSummary]) -> str:
    """Plain-text table with one column per b and one row per scheme and metric."""
    bs = sorted({c.b for c in cells})
    schemes = [s for s in ("etc", "stc", "ttc") if any(c.scheme == s for c in cells)]
    by = {(c.scheme, c.b): c for c in cells}

    def line(label, scheme, getter):
        vals = []
        for b in bs:
            c = by.get((scheme, b))
            v = None if c is None else getter(c)
            vals.append(f"{'-' if v is None else f'{v:.6g}':>12}")
        return f"{label:<22}{scheme.upper():<5}" + "".join(vals)

    head = " " * 27 + "".join(f"{'b=' + format(b, 'g'):>12}" for b in bs)
    out = [head, "-" * len(head)]
    for label, get in (("Average # of events", lambda c: c.mean_events),
                       ("Average t_5%", lambda c: c.mean_t5),
                       ("Fraction reached", lambda c: c.fraction_reached)):
        for i, s in enumerate(schemes):
            out.append(line(label if i == 0 else "", s, get))
        out.append("-" * len(head))
    return "\n".join(out) + "\n"


def write_summary(cells: Sequence[CampaignSummary], path: Path) -> None:
    _write_csv(path, ["scheme", "b", "runs", "mean_events", "std_events", "mean_t5", "std_t5",
                      "fraction_reached"],
               ([c.scheme, c.b, c.runs, c.mean_events, c.std_events,
                 "" if c.mean_t5 is None else c.mean_t5, "" if c.std_t5 is None else c.std_t5,
                 c.fraction_reached] for c in cells))


# -- commands ---------------------------------------------------------------

def _overrides(args) -> dict:
    return {"flow_step": args.flow_step, "event_tolerance": args.event_tol}


def cmd_run(args) -> int:
    scenario = resolve_config(args.config).with_overrides(**_overrides(args))
    seed = scenario.seed if args.seed is None else args.seed
    traj = execute(scenario, 0, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = lyapunov_monitor(traj, kappa=scenario.kappa)
    metrics = run_metrics(traj, seed, report)
    write_trajectory(traj, out / "trajectory.csv")
    write_events(traj, out / "events.csv")
    write_metrics([metrics], out / "metrics.csv")
    write_lyapunov(report, out / "lyapunov.csv")
    emit_plot_data(traj, out / "plot_data.csv")
    t5 = "not reached" if metrics.t_5pct is None else f"{metrics.t_5pct:.4f} s"
    print(f"{scenario.scheme} b={scenario.b:g} seed={seed}: {metrics.events_total} events, "
          f"t_5% {t5}, Lyapunov {report.mode} ({'ok' if report.ok else 'VIOLATED'})")
    return EXIT_OK


def _campaign_run(scenario: cfg.Scenario, run_index: int) -> RunMetrics:
    traj = execute(scenario, run_index)
    return run_metrics(traj, run_index, lyapunov_monitor(traj, kappa=scenario.kappa))


def cmd_campaign(args) -> int:
    base = resolve_config(args.config).with_overrides(**_overrides(args))
    runs = args.runs if args.runs is not None else base.runs
    if runs < 1:
        raise cfg.ConfigError("--runs must be at least 1")
    try:
        bs = [float(x) for x in args.b.split(",")] if args.b else [base.b]
    except ValueError as exc:
        raise cfg.ConfigError(f"--b {args.b!r}: expected comma-separated numbers") from exc
    schemes = [s.strip().lower() for s in args.schemes.split(",")] if args.schemes else [base.scheme]
    cells = [base.with_overrides(scheme=s, b=b) for s in schemes for b in bs]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries, all_runs, failed = [], [], []
    pool = ProcessPoolExecutor(args.jobs) if args.jobs > 1 else None
    try:
        for sc in cells:
            try:
                if pool is None:
                    metrics = [_campaign_run(sc, r) for r in range(runs)]
                else:
                    metrics = list(pool.map(_campaign_run, [sc] * runs, range(runs)))
            except CertificateViolation as exc:
                failed.append((sc.scheme, sc.b, str(exc)))
                log.error("cell %s b=%g aborted: %s", sc.scheme, sc.b, exc)
                continue
            summaries.append(campaign_aggregate(metrics))
            all_runs += metrics
            log.info("cell %s b=%g done", sc.scheme, sc.b)
    finally:
        if pool is not None:
            pool.shutdown()

    write_metrics(all_runs, out / "metrics.csv")
    write_summary(summaries, out / "summary.csv")
    table = summary_table(summaries)
    (out / "table.txt").write_text(table)
    print(table, end="")
    for scheme, b, msg in failed:
        print(f"cell {scheme} b={b:g} failed: {msg}", file=sys.stderr)
    return EXIT_CERTIFICATE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="etcoord", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario file or bundled scenario name")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--flow-step", type=float, default=None, help="override the RK4 step")
        sp.add_argument("--event-tol", type=float, default=None, help="override the event tolerance")

    r = sub.add_parser("run", help="simulate one random start and write its artifacts")
    common(r)
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="Monte Carlo runs over a scheme x b grid")
    common(c)
    c.add_argument("--b", default=None, help="comma-separated b values")
    c.add_argument("--schemes", default=None, help="comma-separated subset of etc,ttc,stc")
    c.add_argument("--runs", type=int, default=None)
    c.add_argument("--jobs", type=int, default=1, help="worker processes")
    c.set_defaults(func=cmd_campaign)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateViolation as exc:
        print(f"certificate violation: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``vcgmpc <subcommand> [options]``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 certificate
required but invalid.
"""

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import certificate_table
from .exceptions import ConfigError, InvalidParameterError, NoCertificateError, NumericalError
from .mechanism import DEFAULT_FACTORS, VCGMechanism, misreport_search, optimal_cost, worker_count
from .mpc import openloop_step, run_mpc
from .power_model import STATE_NAMES, state_labels
from .scenario import load_scenario

log = logging.getLogger("vcgmpc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CERT = 0, 2, 3, 4

# reference costs (J1, J2, J1 + J2) of the two-area case study
REFERENCE_COSTS = {
    "case1": (24.64, 18.01, 42.65),
    "case2": (23.83, 19.62, 43.45),
}
CASE2_VALVE_WEIGHT = 1000.0
SENSITIVITY_METHODS = ("euler", "zoh")
SENSITIVITY_STEPS = (300, 600, 1200)


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.12g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


@dataclass
class RunReport:
    trajectory: object
    agent_costs: np.ndarray
    ledger: object = None
    net_costs: object = None
    certificates: list = field(default_factory=list)
    timings_ms: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


def cmd_simulate(scenario):
    plant = scenario.plant()
    start = time.perf_counter()
    traj = run_mpc(plant, scenario.x0, scenario.true_stream(), scenario.horizon, scenario.sim_steps)
    elapsed = time.perf_counter() - start
    return RunReport(
        traj,
        traj.agent_costs,
        metadata={
            "scenario": scenario.name,
            "seed": scenario.seed,
            "horizon": scenario.horizon,
            "steps": scenario.sim_steps,
            "duration_s": elapsed,
        },
    )


def cmd_mechanism(scenario):
    plant = scenario.plant()
    start = time.perf_counter()
    mech = VCGMechanism(scenario.horizon, scenario.sim_steps, taxes=scenario.tax_mode)
    mech.fit(plant, scenario.x0, scenario.true_stream())
    elapsed = time.perf_counter() - start
    return RunReport(
        mech.trajectory_,
        mech.agent_costs_,
        ledger=mech.ledger_,
        net_costs=mech.net_costs_,
        metadata={
            "scenario": scenario.name,
            "seed": scenario.seed,
            "horizon": scenario.horizon,
            "steps": scenario.sim_steps,
            "tax_mode": scenario.tax_mode,
            "duration_s": elapsed,
        },
    )


def mpc_step_ms(plant, x, profile, horizon, repeats=25):
    """Best-of-``repeats`` wall time of one receding-horizon input computation."""
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        openloop_step(plant, x, profile, horizon)
        best = min(best, time.perf_counter() - start)
    return 1e3 * best


def cmd_bounds(scenario, horizons):
    plant = scenario.plant()
    certs = certificate_table(plant, scenario.envelope(), horizons)
    profile = scenario.true_types
    # timed serially so the measurements do not contend with each other
    timings = [mpc_step_ms(plant, scenario.x0, profile, T) for T in horizons]
    return certs, dict(zip(horizons, timings))


def cmd_misreport(scenario, agent, factors=DEFAULT_FACTORS, horizon=None):
    plant = scenario.plant()
    horizon = scenario.horizon if horizon is None else horizon
    env = scenario.envelope()
    results = {}
    for taxes in (True, False):
        results[taxes] = misreport_search(
            plant,
            scenario.x0,
            scenario.true_stream(),
            agent,
            horizon,
            scenario.sim_steps,
            envelope=env,
            factors=factors,
            taxes=taxes,
        )
    cert = None
    if horizon is not None:
        cert = certificate_table(plant, env, [horizon])[0]
    J0 = optimal_cost(plant, scenario.x0, scenario.true_types)
    return results, cert, J0


def case_profiles(scenario):
    truth = scenario.true_types
    theta = truth[0]
    Q = np.array(theta.Q)
    Q[2, 2] = CASE2_VALVE_WEIGHT
    misreport = truth.replace(type(theta)(0, Q, theta.R))
    return truth, misreport


def case_costs(scenario, method, steps):
    """``(J1, J2, total)`` of both LQR cases under the given discretization."""
    plant = scenario.replace(discretization=method).plant()
    truth, misreport = case_profiles(scenario)
    out = {}
    for case, reported in (("case1", truth), ("case2", misreport)):
        traj = run_mpc(plant, scenario.x0, reported, None, steps, true_stream=truth)
        J = traj.agent_costs
        out[case] = (float(J[0]), float(J[1]), float(J.sum()))
    return out


def cmd_repro_tables(scenario, steps=None):
    steps = scenario.sim_steps if steps is None else steps
    main = case_costs(scenario, scenario.discretization, steps)
    table = []
    for case in ("case1", "case2"):
        measured = main[case]
        ref = REFERENCE_COSTS[case]
        rel = tuple((m - r) / r for m, r in zip(measured, ref))
        table.append((case, measured, ref, rel))
    sensitivity = []
    for method in SENSITIVITY_METHODS:
        for n in SENSITIVITY_STEPS:
            costs = case_costs(scenario, method, n)
            for case in ("case1", "case2"):
                sensitivity.append((method, n, case) + costs[case])
    return table, sensitivity


def emit_artifacts(report, out_dir, plots=True):
    """Write ``trajectory.csv``, ``costs.csv``, ``taxes.csv`` (if taxed) and SVG plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = report.trajectory
    n_agents = traj.partition.n_agents
    dt = report.metadata.get("dt", 1.0)

    x_cols = state_labels(n_agents)
    u_cols = [f"u{i + 1}" for i in range(n_agents)]
    rows = []
    for k in range(traj.steps + 1):
        u = traj.u[k] if k < traj.steps else [None] * n_agents
        rows.append([k, k * dt, *traj.x[k], *u])
    write_csv(out / "trajectory.csv", ["step", "time_s", *x_cols, *u_cols], rows)

    cum = np.cumsum(traj.stage_costs, axis=0)
    header = (
        ["step"]
        + [f"c{i + 1}" for i in range(n_agents)]
        + [f"cum{i + 1}" for i in range(n_agents)]
        + ["cum_total"]
    )
    rows = [[k, *traj.stage_costs[k], *cum[k], cum[k].sum()] for k in range(traj.steps)]
    write_csv(out / "costs.csv", header, rows)

    if report.ledger is not None:
        led = report.ledger
        header = (
            ["step"]
            + [f"p{i + 1}" for i in range(n_agents)]
            + [f"K{i + 1}" for i in range(n_agents)]
            + [f"pi{i + 1}" for i in range(n_agents)]
        )
        rows = [[k, *led.p[k], *led.K[k], *led.pi[k]] for k in range(traj.steps)]
        write_csv(out / "taxes.csv", header, rows)

    if report.certificates:
        write_certificates(out / "certificate.csv", report.certificates, report.timings_ms)

    if plots:
        write_plots(traj, dt, out)
    return out


def write_certificates(path, certs, timings):
    header = ["T", "alpha", "rho", "gamma", "eps", "valid", "mpc_step_ms"]
    rows = [
        [c.T, c.alpha_T, c.rho_T, c.gamma_T, c.eps_T, c.valid, timings.get(c.T)] for c in certs
    ]
    write_csv(path, header, rows)


def write_plots(traj, dt, out):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "vcgmpc"
    t = np.arange(traj.steps + 1) * dt
    n_agents = traj.partition.n_agents
    titles = {"omega": "frequency deviation", "delta": "rotor angle deviation", "pv": "steam valve position"}
    for name in ("omega", "delta", "pv"):
        col = STATE_NAMES.index(name)
        fig, ax = plt.subplots(figsize=(6, 3))
        for i in range(n_agents):
            ax.plot(t, traj.x[:, 4 * i + col], label=f"area {i + 1}")
        ax.set_xlabel("time (s)")
        ax.set_title(titles[name])
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"{name}.svg", format="svg", metadata={"Date": None})
        plt.close(fig)


def _print_costs(report):
    for i, J in enumerate(report.agent_costs):
        line = f"agent {i + 1}: J = {J:.6g}"
        if report.net_costs is not None:
            line += f"  tax = {report.ledger.total[i]:.6g}  net = {report.net_costs[i]:.6g}"
        print(line)
    print(f"total: {float(np.sum(report.agent_costs)):.6g}")


def build_parser():
    parser = argparse.ArgumentParser(prog="vcgmpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("--config", default="two_area_table1", help="config path or bundled name")
        p.add_argument("--out", default=default_out, help="output directory")
        p.add_argument("--horizon", help="MPC horizon, or 'infinite' for LQR")
        p.add_argument("--steps", type=int, help="simulation length")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--no-tax", action="store_true", help="disable taxes")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("simulate", help="closed-loop MPC or LQR run"), "out/simulate")
    common(sub.add_parser("mechanism", help="MPC run with VCG taxes"), "out/mechanism")
    p = sub.add_parser("bounds", help="efficiency certificates over horizons")
    common(p, "out/bounds")
    p.add_argument("--horizons", default="10,20,50", help="comma-separated horizons")
    p.add_argument("--require-certificate", action="store_true")
    p = sub.add_parser("misreport", help="adversarial misreport grid search")
    common(p, "out/misreport")
    p.add_argument("--agent", type=int, default=1, help="1-based agent index")
    p.add_argument("--factors", default=",".join(str(f) for f in DEFAULT_FACTORS))
    p.add_argument("--require-certificate", action="store_true")
    common(sub.add_parser("repro-tables", help="two-area case study cost table"), "out/repro")
    return parser


def _scenario(args):
    sc = load_scenario(args.config)
    changes = {}
    if args.horizon is not None:
        h = args.horizon.strip().lower()
        try:
            changes["horizon"] = None if h in ("infinite", "inf") else int(h)
        except ValueError as exc:
            raise ConfigError(f"--horizon: invalid value {args.horizon!r}") from exc
        if changes["horizon"] is not None and changes["horizon"] < 1:
            raise ConfigError(f"--horizon: must be >= 1, got {args.horizon}")
    if args.steps is not None:
        if args.steps < 1:
            raise ConfigError(f"--steps: must be >= 1, got {args.steps}")
        changes["sim_steps"] = args.steps
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.no_tax:
        changes["tax_mode"] = False
    return sc.replace(**changes) if changes else sc


def run(args):
    sc = _scenario(args)
    out = Path(args.out)
    if args.command in ("simulate", "mechanism"):
        report = (cmd_simulate if args.command == "simulate" else cmd_mechanism)(sc)
        report.metadata["dt"] = sc.dt
        emit_artifacts(report, out)
        with open(out / "metadata.json", "w") as fh:
            json.dump(report.metadata, fh, indent=2, sort_keys=True)
        _print_costs(report)
        return EXIT_OK

    if args.command == "bounds":
        horizons = [int(v) for v in args.horizons.split(",")] if args.horizon is None else [sc.horizon]
        if any(h is None for h in horizons):
            raise ConfigError("--horizon: bounds need finite horizons")
        certs, timings = cmd_bounds(sc, horizons)
        out.mkdir(parents=True, exist_ok=True)
        write_certificates(out / "certificate.csv", certs, timings)
        print(f"{'T':>5} {'alpha':>12} {'rho':>12} {'gamma':>12} {'eps':>12} {'valid':>6} {'ms':>8}")
        for c in certs:
            eps = f"{c.eps_T:12.6g}" if c.valid else f"{'-':>12}"
            print(
                f"{c.T:5d} {c.alpha_T:12.6g} {c.rho_T:12.6g} {c.gamma_T:12.6g} {eps} "
                f"{str(c.valid):>6} {timings[c.T]:8.3f}"
            )
        if args.require_certificate and not all(c.valid for c in certs):
            raise NoCertificateError("gamma_T >= 1 for at least one horizon")
        return EXIT_OK

    if args.command == "misreport":
        agent = args.agent - 1
        if not 0 <= agent < sc.n_agents:
            raise ConfigError(f"--agent: agent {args.agent} does not exist")
        factors = tuple(float(v) for v in args.factors.split(","))
        results, cert, J0 = cmd_misreport(sc, agent, factors)
        out.mkdir(parents=True, exist_ok=True)
        bound = cert.eps_T * J0 if cert is not None and cert.valid else None
        rows = []
        for taxes in (True, False):
            r = results[taxes]
            factors_txt = " ".join(fmt(f) for f in r.best_factors) if r.best_factors else ""
            rows.append(["on" if taxes else "off", args.agent, factors_txt, r.best_gap, r.evaluated, r.skipped, bound])
            print(
                f"tax {'on ' if taxes else 'off'}: best gap {r.best_gap:.6g} at factors ({factors_txt}); "
                f"{r.evaluated} evaluated, {r.skipped} inadmissible"
            )
        write_csv(
            out / "misreport.csv",
            ["tax_mode", "agent", "factors", "gap", "evaluated", "skipped", "bound"],
            rows,
        )
        if bound is None:
            print("no efficiency certificate for this horizon (gamma_T >= 1)")
        else:
            print(f"certified bound eps_T * J0 = {bound:.6g}")
        if args.require_certificate and bound is None:
            raise NoCertificateError("no certificate for the configured horizon")
        return EXIT_OK

    if args.command == "repro-tables":
        table, sensitivity = cmd_repro_tables(sc, args.steps)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(
            out / "case_costs.csv",
            ["case", "J1", "J2", "total", "ref_J1", "ref_J2", "ref_total", "rel_J1", "rel_J2", "rel_total"],
            [[case, *m, *r, *d] for case, m, r, d in table],
        )
        write_csv(
            out / "sensitivity.csv",
            ["discretization", "steps", "case", "J1", "J2", "total"],
            sensitivity,
        )
        print(f"{'case':<6} {'J1':>9} {'J2':>9} {'total':>9}   reference (rel. dev.)")
        for case, m, r, d in table:
            refs = "  ".join(f"{rv:.2f} ({dv:+.1%})" for rv, dv in zip(r, d))
            print(f"{case:<6} {m[0]:9.4f} {m[1]:9.4f} {m[2]:9.4f}   {refs}")
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    log.info("threads: %d", worker_count())
    try:
        return run(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoCertificateError as exc:
        print(f"certificate invalid: {exc}", file=sys.stderr)
        return EXIT_CERT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

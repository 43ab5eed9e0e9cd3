"""Command-line entry point: ``floesim <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioConfig, parse_config, reference_page
from .errors import ConfigurationError, FloesimError

log = logging.getLogger("floesim")

COMMANDS = ("init", "simulate", "reduce", "uq", "inflate", "assimilate", "score", "bench",
            "config-reference")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (key = value [unit])")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for ensembles")
    common.add_argument("--output-dir", help="output directory (env FLOESIM_OUTPUT_DIR)")
    common.add_argument("--oracle", action="store_true", help="all-pairs contact search")
    common.add_argument("--obs-interval-steps", type=int, help="steps between observations")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="floesim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("init", parents=[common], help="sample a floe field")
    s = sub.add_parser("simulate", parents=[common], help="integrate one trajectory")
    s.add_argument("--field", help="start from this field JSON instead of sampling")
    s.add_argument("--steps", type=int, help="number of steps (default: t_final / dt)")
    s.add_argument("--checkpoint", help="restart from a binary checkpoint")
    r = sub.add_parser("reduce", parents=[common], help="coarse-grain into superfloes")
    r.add_argument("--field", help="field JSON to reduce")
    u = sub.add_parser("uq", parents=[common], help="ensemble spread and long-run statistics")
    u.add_argument("--members", type=int)
    u.add_argument("--long-steps", type=int, help="steps of the long runs (default: uq.long_run / dt)")
    i = sub.add_parser("inflate", parents=[common], help="superfloe-based inflation coefficients")
    i.add_argument("--steps", type=int)
    a = sub.add_parser("assimilate", parents=[common], help="EAKF twin experiment")
    a.add_argument("--model", choices=("full", "bare", "inflation"))
    a.add_argument("--members", type=int)
    a.add_argument("--cycles", type=int)
    a.add_argument("--inflation", help="coefficients JSON from 'inflate'")
    sc = sub.add_parser("score", parents=[common], help="RMSE and PCC of two tables")
    sc.add_argument("--truth", help="CSV with the reference values")
    sc.add_argument("--estimate", help="CSV with the estimates")
    sc.add_argument("--columns", help="comma-separated numeric columns (default: all shared)")
    sc.add_argument("--da", help="DA output CSV (scores truth vs posterior mean per variable)")
    b = sub.add_parser("bench", parents=[common], help="full vs reduced wall clock")
    b.add_argument("--steps", type=int, default=10_000)
    b.add_argument("--repeats", type=int, default=1)
    sub.add_parser("config-reference", parents=[common], help="print the configuration key table")
    return p


class Run:
    """Shared state of one CLI invocation."""

    def __init__(self, args):
        self.args = args
        cfg = parse_config(args.config) if args.config else ScenarioConfig()
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.oracle:
            updates["integrator.neighbor_grid"] = False
        if args.obs_interval_steps is not None:
            updates["da.obs_interval_steps"] = args.obs_interval_steps
        if updates:
            cfg = ScenarioConfig({**cfg.explicit, **updates}, cfg.source)
        self.cfg = cfg
        out = args.output_dir or os.environ.get("FLOESIM_OUTPUT_DIR") or cfg["output.dir"]
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "error.json").unlink(missing_ok=True)
        self.outputs: list[Path] = []
        self.seed = int(cfg["seed"])
        ss = np.random.SeedSequence(self.seed)
        self.seeds = {"master": self.seed}
        self._children = dict(zip(("field", "ocean", "run", "ensemble", "da"), ss.spawn(5)))
        for k, v in cfg.deviations().items():
            log.info("config: %s = %r (default %r)", k, v, _default(k))

    def child(self, name):
        return self._children[name]

    def path(self, name) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def initial_state(self, field=None):
        from .integrator import SimulationState
        from .ocean import check_phase_margin, draw_stationary
        field = field if field is not None else self.cfg.field(seed=self.child("field"))
        ocean = self.cfg.ocean()
        check_phase_margin(ocean, self.cfg["integrator.dt"])
        if self.cfg["ocean.stationary_start"]:
            draw_stationary(ocean, np.random.default_rng(self.child("ocean")))
        return SimulationState(field, ocean, 0.0)

    def finish(self, extra=None):
        for p in self.outputs:
            if not p.exists():
                raise FloesimError(f"expected output {p} was not written")
        io.write_manifest(self.out, self.args.command, self.cfg, self.seeds, self.outputs, extra)


def _default(key):
    from .config import KEYS
    return KEYS[key].default


def cmd_init(run: Run):
    from .floes import field_statistics
    field = run.cfg.field(seed=run.child("field"))
    io.write_field_json(run.path("field.json"), field)
    io.write_field_csv(run.path("field.csv"), field)
    stats = field_statistics(field)
    run.path("field_stats.json").write_text(json.dumps(stats, indent=2))
    print(json.dumps(stats))


def cmd_simulate(run: Run):
    from .integrator import NoiseStreams, run as integrate
    cfg, args = run.cfg, run.args
    if args.checkpoint:
        state = io.read_checkpoint(args.checkpoint)
    else:
        field = io.read_field_json(args.field) if args.field else None
        state = run.initial_state(field)
    settings = cfg.integrator()
    steps = args.steps if args.steps is not None else int(round(cfg["integrator.t_final"] / settings.dt))
    traj = io.TrajectoryWriter(run.path("trajectory.csv"))
    sinks = [traj]
    contact_log = None
    if cfg["integrator.contact_log"]:
        contact_log = io.ContactLogWriter(run.path("contacts.csv"), cfg.material(),
                                          cfg["contact.thickness_ref"])
        sinks.append(contact_log)

    def sink(s):
        for k in sinks:
            k(s)

    t0 = time.perf_counter()
    integrate(state, state.t + steps * settings.dt, cfg["integrator.record_every"], sink,
              cfg.material(), settings, streams=NoiseStreams.from_seed(run.child("run")))
    wall = time.perf_counter() - t0
    traj.close()
    if contact_log:
        contact_log.close()
    io.write_ocean_json(run.path("ocean.json"), state.ocean)
    io.write_checkpoint(run.path("checkpoint.bin"), state)
    io.write_grid_csv(run.path("ocean_grid.csv"), state.ocean)
    io.write_field_json(run.path("final_field.json"), state.field)
    print(json.dumps({"steps": steps, "snapshots": traj.count, "wall_s": wall}))


def cmd_reduce(run: Run):
    from .superfloe import reduce
    field = io.read_field_json(run.args.field) if run.args.field else run.cfg.field(seed=run.child("field"))
    reduced, report = reduce(field, run.cfg.reduction())
    io.write_field_json(run.path("reduced_field.json"), reduced)
    run.path("reduction_report.json").write_text(report.to_json())
    run.path("reduction_table.txt").write_text(report.table() + "\n")
    print(report.table())


def cmd_uq(run: Run):
    from .integrator import SimulationState, run as integrate
    from .superfloe import bare_truncation, reduce
    from .uq import (contact_force_series, empirical_pdf, ensemble_forecast, excess_kurtosis,
                     long_run_statistics)
    cfg, args = run.cfg, run.args
    mat, settings = cfg.material(), cfg.integrator()
    state = run.initial_state()
    spin = cfg["uq.spinup"]
    if spin > 0:
        integrate(state, spin, record_every=10**9, mat=mat, settings=settings,
                  seed=run.child("run"), sink=lambda s: None)
    reduced, _ = reduce(state.field, cfg.reduction())
    bare = bare_truncation(state.field, cfg["floes.large"])
    members = args.members or cfg["uq.members"]
    systems = {"full": state.field, "superfloe": reduced, "bare": bare}
    summary = {"members": members, "final_spread": {}}
    for name, fld in systems.items():
        ic = SimulationState(fld, state.ocean.copy(), state.t)
        ms = ensemble_forecast(ic, members, state.t + cfg["uq.t_final"], run.child("ensemble"), mat,
                               settings, cfg["uq.record_every"], threads=args.threads)
        bands = ms.bands()
        cols = {"t": ms.times}
        for q in ("p1", "p2", "L"):
            for k in ("mean", "lo1", "hi1", "lo2", "hi2"):
                cols[f"{q}_{k}"] = bands[q][k]
        units = {c: ("s" if c == "t" else "kg m2/s" if c.startswith("L") else "kg m/s") for c in cols}
        io.write_table(run.path(f"momentum_bands_{name}.csv"), cols, units)
        summary["final_spread"][name] = {"p": float(ms.p_spread()[-1]), "L": float(ms.L_std[-1])}

    long_steps = args.long_steps or int(round(cfg["uq.long_run"] / settings.dt))
    bins = cfg["uq.bins"]
    summary["kurtosis"] = {}
    for name, fld in (("full", state.field), ("superfloe", reduced)):
        sim = SimulationState(fld, state.ocean.copy(), state.t)
        series = contact_force_series(sim, cfg["floes.large"], long_steps, mat, settings,
                                      seed=run.child("run"))
        burn = int(cfg["uq.burn_in"] * long_steps)
        k0 = int(np.argmax([fld.radius[fld.index_of(i)] for i in series.ids]))
        io.write_table(run.path(f"contact_forces_{name}.csv"),
                       {"t": series.times, **{f"{c}_{int(i)}": series.component(q, c)
                                              for q, i in enumerate(series.ids) for c in ("x", "y", "omega")}},
                       {"t": "s"})
        tq = series.torque[burn:, k0]
        if np.ptp(tq) > 0:
            pdf = empirical_pdf(tq, bins)
            io.write_table(run.path(f"contact_torque_pdf_{name}.csv"),
                           {"center": pdf.centers, "density": pdf.density, "normal_fit": pdf.normal_fit()},
                           {"center": "N m", "density": "1/(N m)", "normal_fit": "1/(N m)"})
            summary["kurtosis"][name] = excess_kurtosis(tq)
        stats = long_run_statistics(SimulationState(fld, state.ocean.copy(), state.t), cfg["floes.large"],
                                    long_steps, cfg["uq.record_every"], mat, settings,
                                    seed=run.child("run"), burn_in=cfg["uq.burn_in"])
        pooled = stats.pooled_pdfs(bins)
        for q, pdf in pooled.items():
            io.write_table(run.path(f"pdf_{name}_pooled_{q}.csv"),
                           {"center": pdf.centers, "density": pdf.density})
        for fid, d in stats.per_floe_pdfs(bins).items():
            for q, pdf in d.items():
                io.write_table(run.path(f"pdf_{name}_floe{fid}_{q}.csv"),
                               {"center": pdf.centers, "density": pdf.density})
    run.path("uq_summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))


def cmd_inflate(run: Run):
    from .da import inflation_from_superfloes
    cfg = run.cfg
    state = run.initial_state()
    mat, settings = cfg.material(), cfg.integrator()
    steps = run.args.steps or cfg["da.inflation_steps"]
    coeffs, series = inflation_from_superfloes(state, cfg.reduction(), steps, cfg["da.obs_interval_steps"],
                                               cfg["da.inflation_spinup"], mat, settings,
                                               seed=run.child("run"))
    run.path("inflation.json").write_text(json.dumps(coeffs.to_dict(), indent=2))
    print(json.dumps(coeffs.to_dict()))


def cmd_assimilate(run: Run):
    from .da import DAScenario, InflationCoefficients, assimilate
    from .integrator import run as integrate
    cfg, args = run.cfg, run.args
    mat, settings = cfg.material(), cfg.integrator()
    truth = run.initial_state()
    spin = cfg["uq.spinup"]
    if spin > 0:
        integrate(truth, spin, record_every=10**9, mat=mat, settings=settings, seed=run.child("run"),
                  sink=lambda s: None)
    inflation = None
    if args.inflation:
        inflation = InflationCoefficients.from_dict(json.loads(Path(args.inflation).read_text()))
    da_seed = int(run.child("da").generate_state(1)[0])
    run.seeds["da"] = da_seed
    sc = DAScenario(
        forecast_model=args.model or cfg["da.forecast_model"], n_large=cfg["floes.large"],
        n_super=cfg["floes.super"], n_members=args.members or cfg["da.members"],
        n_cycles=args.cycles or cfg["da.cycles"], obs_interval_steps=cfg["da.obs_interval_steps"],
        sigma_x=cfg["da.sigma_x"], sigma_angle=cfg["da.sigma_angle"],
        forecast_gravity=cfg["da.forecast_gravity"], inflation_steps=cfg["da.inflation_steps"],
        inflation_spinup=cfg["da.inflation_spinup"], seed=da_seed, threads=args.threads)
    res = assimilate(truth, sc, mat, settings, inflation)
    rows = {"cycle": [], "variable": [], "truth": [], "mean": [], "spread": []}
    for c in range(len(res.times)):
        for q, fid in enumerate(res.observed_ids):
            for comp in range(2):
                rows["cycle"].append(c)
                rows["variable"].append(f"v{comp + 1}_floe{int(fid)}")
                rows["truth"].append(res.velocity_truth[c, q, comp])
                rows["mean"].append(res.velocity_mean[c, q, comp])
                rows["spread"].append(res.velocity_spread[c, q, comp])
        for g, k in enumerate(res.mode_k):
            for part, fn in (("re", np.real), ("im", np.imag)):
                rows["cycle"].append(c)
                rows["variable"].append(f"gb_{int(k[0])}_{int(k[1])}_{part}")
                rows["truth"].append(float(fn(res.mode_truth[c, g])))
                rows["mean"].append(float(fn(res.mode_mean[c, g])))
                rows["spread"].append(res.mode_spread[c, g] / np.sqrt(2.0))
    io.write_table(run.path("da.csv"), {k: np.array(v, dtype=object) for k, v in rows.items()})
    scores = res.scores()
    run.path("scores.json").write_text(json.dumps(scores, indent=2))
    if res.inflation is not None:
        run.path("inflation.json").write_text(json.dumps(res.inflation.to_dict(), indent=2))
    print(json.dumps(scores))


def cmd_score(run: Run):
    from .da import pcc, rmse
    args = run.args
    out = {}
    if args.da:
        t = io.read_table(args.da)
        variables = t["variable"]
        groups = {"floe_velocity": np.array([str(v).startswith("v") for v in variables]),
                  "ocean_gb": np.array([str(v).startswith("gb_") for v in variables])}
        for name, mask in groups.items():
            if mask.any():
                out[name] = {"rmse": rmse(t["truth"][mask], t["mean"][mask]),
                             "pcc": pcc(t["truth"][mask], t["mean"][mask])}
    else:
        if not (args.truth and args.estimate):
            raise ConfigurationError("score needs --truth and --estimate, or --da")
        a, b = io.read_table(args.truth), io.read_table(args.estimate)
        cols = args.columns.split(",") if args.columns else [
            c for c in a if c in b and a[c].dtype != object and b[c].dtype != object]
        if not cols:
            raise ConfigurationError("no shared numeric columns to score")
        ta = np.concatenate([a[c] for c in cols])
        tb = np.concatenate([b[c] for c in cols])
        out = {"rmse": rmse(ta, tb), "pcc": pcc(ta, tb), "columns": cols}
    run.path("scores.json").write_text(json.dumps(out, indent=2))
    print(json.dumps(out))


def bench_systems(cfg, steps: int, seed, repeats: int = 1, threads: int = 1, field=None):
    """Wall clock of ``steps`` steps for the full field (sampled from ``cfg``
    unless given) and its superfloe reduction."""
    from .integrator import Ensemble, NoiseStreams, SimulationState
    from .ocean import draw_stationary
    from .superfloe import reduce
    field = field if field is not None else cfg.field(seed=seed)
    reduced, _ = reduce(field, cfg.reduction())
    ocean = cfg.ocean()
    draw_stationary(ocean, np.random.default_rng(seed))
    mat, settings = cfg.material(), cfg.integrator()
    out = {}
    for name, fld in (("full", field), ("reduced", reduced)):
        # compile outside the timed region
        warm = Ensemble(SimulationState(fld, ocean.copy()), 1, mat, settings, seed=0)
        warm.advance(2)
        times = []
        for _ in range(repeats):
            ens = Ensemble(SimulationState(fld, ocean.copy()), 1, mat, settings,
                           streams=[NoiseStreams.from_seed(seed)])
            t0 = time.perf_counter()
            ens.advance(steps, threads=threads)
            times.append(time.perf_counter() - t0)
        out[name] = {"floes": len(fld), "steps": steps, "wall_s": min(times),
                     "substeps": ens.stats.substeps}
    out["ratio"] = out["reduced"]["wall_s"] / out["full"]["wall_s"]
    return out


def cmd_bench(run: Run):
    res = bench_systems(run.cfg, run.args.steps, run.child("field"), run.args.repeats, run.args.threads)
    lines = [f"{'system':<8} {'floes':>6} {'steps':>7} {'wall [s]':>10} {'sub-steps':>10}"]
    for name in ("full", "reduced"):
        r = res[name]
        lines.append(f"{name:<8} {r['floes']:>6} {r['steps']:>7} {r['wall_s']:>10.3f} {r['substeps']:>10}")
    lines.append(f"reduced / full = {res['ratio']:.3f}")
    run.path("bench.txt").write_text("\n".join(lines) + "\n")
    run.path("bench.json").write_text(json.dumps(res, indent=2))
    print("\n".join(lines))


def cmd_config_reference(run: Run):
    text = reference_page()
    run.path("config_reference.md").write_text(text)
    print(text)


HANDLERS = {"init": cmd_init, "simulate": cmd_simulate, "reduce": cmd_reduce, "uq": cmd_uq,
            "inflate": cmd_inflate, "assimilate": cmd_assimilate, "score": cmd_score,
            "bench": cmd_bench, "config-reference": cmd_config_reference}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    run = None
    try:
        run = Run(args)
        HANDLERS[args.command](run)
        run.finish()
        return 0
    except Exception as exc:  # every failure becomes a structured error document
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        for attr in ("line", "path", "ids", "floe_id", "time", "member"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        if not isinstance(exc, FloesimError):
            err["traceback"] = traceback.format_exc()
        doc = json.dumps(err, default=str)
        print(doc, file=sys.stderr)
        # before the config is parsed only the flag or the environment can name the directory
        out = run.out if run is not None else (args.output_dir or os.environ.get("FLOESIM_OUTPUT_DIR"))
        if out is not None:
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                (Path(out) / "error.json").write_text(doc)
            except OSError:
                pass
        return 2


if __name__ == "__main__":
    sys.exit(main())

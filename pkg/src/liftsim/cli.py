"""Command-line entry point: ``liftsim <subcommand> [flags]``.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 numeric failure,
5 truncated episode.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import dqn, nnfa
from .config import (ConfigError, atomic_write, config_hash, created_stamp, file_digest,
                     load_kv, parse_bool, resolve_seed)
from .metrics import REPORT_FIELDS, MetricsReport, compute_metrics
from .naive import run_naive
from .simcore import Action, BuildingConfig, Elevator, Observation, TraceStep, markov_probe
from .traffic import TrafficFormatError, TrafficProfile, WeightModel, generate_day, read_csv, write_csv

log = logging.getLogger("liftsim")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_TRUNCATED = 0, 2, 3, 4, 5

TRACE_COLUMNS = ("step", "clock_s", "floor", "action", "reward", "boarded", "delivered",
                 "waiting", "arrivals", "obs", "next_obs")
SERIES_COLUMNS = ("config_hash",) + dqn.LOG_COLUMNS

# flags that name files; hashed by content, never by path
_INPUT_PATHS = ("tape", "checkpoint", "trace", "log")
_OUTPUT_PATHS = ("out", "out_dir", "config")
_BOOL_FLAGS = ("allow_idle_doors", "paper_literal_loop", "resample_traffic", "no_figures")


class TruncatedEpisode(RuntimeError):
    pass


# --- argument plumbing ------------------------------------------------------

def _building_flags(p):
    g = p.add_argument_group("building")
    g.add_argument("--floors", type=int, default=8)
    g.add_argument("--capacity", type=float, default=1000.0, help="car capacity [kg]")
    g.add_argument("--door-cycle", type=float, default=15.0, help="open/load/close time [s]")
    g.add_argument("--floor-travel", type=float, default=5.0, help="time per floor [s]")
    g.add_argument("--allow-idle-doors", action="store_true",
                   help="let the doors cycle even when nobody boards or leaves")


def _profile_flags(p):
    g = p.add_argument_group("traffic profile")
    g.add_argument("--workers", type=int, default=200)
    g.add_argument("--arrival-mean", type=float, default=32400.0)
    g.add_argument("--departure-mean", type=float, default=61200.0)
    g.add_argument("--peak-std", type=float, default=1800.0)
    g.add_argument("--lunch-mean", type=float, default=43200.0)
    g.add_argument("--lunch-duration", type=float, default=1800.0)
    g.add_argument("--distribution", choices=("normal", "poisson"), default="normal")


def _common(p):
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="liftsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["generate"] = sub.add_parser("generate", help="write a day of traffic as CSV")
    _common(p)
    _profile_flags(p)
    p.add_argument("--floors", type=int, default=8)
    p.add_argument("--out", required=True)

    p = subs["run-naive"] = sub.add_parser("run-naive", help="run the naive controller")
    _common(p)
    _building_flags(p)
    p.add_argument("--tape", required=True)
    p.add_argument("--out-dir", required=True)

    p = subs["train-dqn"] = sub.add_parser("train-dqn", help="train the DQN agent")
    _common(p)
    _building_flags(p)
    _profile_flags(p)
    p.add_argument("--tape", help="traffic CSV; generated from the profile flags if omitted")
    p.add_argument("--out-dir", required=True)
    h = dqn.DqnHyperparams()
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--epochs", type=int, default=h.epochs)
    g.add_argument("--epsilon", type=float, default=h.epsilon)
    g.add_argument("--discount", type=float, default=h.discount)
    g.add_argument("--lr", type=float, default=h.lr)
    g.add_argument("--batch-size", type=int, default=h.batch_size)
    g.add_argument("--replay-capacity", type=int, default=h.replay_capacity)
    g.add_argument("--sync-period", type=int, default=h.sync_period)
    g.add_argument("--step-cap-factor", type=int, default=h.step_cap_factor)
    g.add_argument("--td-mode", choices=("standard", "paper-literal"), default=h.td_mode)
    g.add_argument("--waiting", choices=("all", "hall"), default=h.waiting)
    g.add_argument("--reward-scale", type=float, default=h.reward_scale)
    g.add_argument("--grad-clip", type=float, default=h.grad_clip)
    g.add_argument("--momentum", type=float, default=h.momentum)
    g.add_argument("--paper-literal-loop", action="store_true")
    g.add_argument("--resample-traffic", action="store_true",
                   help="draw a fresh day from the profile every epoch (seed + epoch)")
    g.add_argument("--hidden", default="64,64", help="hidden layer widths, comma separated")

    p = subs["infer-dqn"] = sub.add_parser("infer-dqn", help="greedy rollout of a checkpoint")
    _common(p)
    _building_flags(p)
    p.add_argument("--tape", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)

    p = subs["probe-markov"] = sub.add_parser("probe-markov",
                                              help="find non-Markov transitions in a trace")
    _common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)

    p = subs["report"] = sub.add_parser("report", help="epoch log to plot-ready series")
    _common(p)
    p.add_argument("--log", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    return parser, subs


def _parse(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = load_kv(args.config)
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {', '.join(unknown)}")
        for key in _BOOL_FLAGS:
            if key in values:
                values[key] = parse_bool(values[key])
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    args.seed = resolve_seed(args.seed)
    return args


def _run_config(args) -> dict:
    cfg = {}
    for key, value in sorted(vars(args).items()):
        if key in _OUTPUT_PATHS or key in ("verbose",):
            continue
        if key in _INPUT_PATHS and value is not None:
            value = "sha256:" + file_digest(value)
        cfg[key] = value
    return cfg


def _meta_line(args, chash: str) -> str:
    return f"liftsim {args.command} config_hash={chash} seed={args.seed}"


def _building(args) -> BuildingConfig:
    cfg = BuildingConfig(floor_count=args.floors, capacity_kg=args.capacity,
                         door_cycle_s=args.door_cycle, floor_travel_s=args.floor_travel,
                         allow_idle_doors=args.allow_idle_doors)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _profile(args, seed: int) -> TrafficProfile:
    profile = TrafficProfile(floor_count=args.floors, workers=args.workers,
                             arrival_mean_s=args.arrival_mean,
                             departure_mean_s=args.departure_mean,
                             peak_std_s=args.peak_std, lunch_mean_s=args.lunch_mean,
                             lunch_duration_s=args.lunch_duration, seed=seed,
                             distribution=args.distribution, weights=WeightModel())
    try:
        profile.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return profile


def _load_tape(path, floors: int):
    with open(path, newline="") as fh:
        return read_csv(fh, floor_count=floors)


def _write_report(path, report: MetricsReport, meta: str) -> None:
    with atomic_write(path) as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        d = report.as_dict()
        w.writerow([repr(d[k]) if isinstance(d[k], float) else str(d[k]).lower()
                    if isinstance(d[k], bool) else d[k] for k in REPORT_FIELDS])


def read_report(path) -> dict:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, values = rows[0], rows[1]
    out = {}
    for k, v in zip(header, values):
        if k == "truncated":
            out[k] = v == "true"
        elif k in ("num_events", "people_moved"):
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


# --- subcommands ------------------------------------------------------------

def cmd_generate(args, chash):
    profile = _profile(args, args.seed)
    table = generate_day(profile)
    with atomic_write(args.out) as fh:
        write_csv(table, fh, comment=_meta_line(args, chash))
    log.info("wrote %d records to %s", len(table), args.out)
    return EXIT_OK


def cmd_run_naive(args, chash):
    building = _building(args)
    table = _load_tape(args.tape, building.floor_count)
    env = Elevator(table, building)
    run = run_naive(env, seed=args.seed)
    report = compute_metrics(env.state.passengers, num_events=env.num_events)
    report.truncated = report.truncated or run.truncated
    out = Path(args.out_dir)
    meta = _meta_line(args, chash)
    _write_report(out / "report.csv", report, meta)
    write_trace(out / "trace.csv", run, meta)
    log.info("moved %d/%d, mean total time %.1f s", report.people_moved, report.num_events,
             report.mean_total_time_s)
    if report.truncated:
        raise TruncatedEpisode(f"naive run stopped with {report.people_moved}/"
                               f"{report.num_events} delivered")
    return EXIT_OK


def write_trace(path, run, meta: str) -> None:
    with atomic_write(path) as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i, (out, rec) in enumerate(zip(run.outcomes, run.trace)):
            r = dqn.waiting_cost(run.waiting[i], out.elapsed_s)
            w.writerow([i, repr(run.clocks[i]), rec.obs.current_floor, rec.action.name,
                        repr(r), len(out.boarded), len(out.delivered), run.waiting[i],
                        len(out.arrivals), rec.obs.key(), rec.next_obs.key()])


def read_trace(path) -> list[TraceStep]:
    steps = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(header[:8]) != TRACE_COLUMNS[:8]:
            raise ConfigError(f"{path}: not a trace file")
        col = {name: k for k, name in enumerate(header)}
        for lineno, row in enumerate(reader, start=2):
            try:
                steps.append(TraceStep(Observation.from_key(row[col["obs"]]),
                                       Action[row[col["action"]]],
                                       Observation.from_key(row[col["next_obs"]]),
                                       tuple(range(int(row[col["arrivals"]])))))
            except (KeyError, ValueError, IndexError) as exc:
                raise ConfigError(f"{path}: bad trace row {lineno}: {exc}") from None
    return steps


def cmd_probe_markov(args, chash):
    trace = read_trace(args.trace)
    groups = markov_probe(trace)
    with atomic_write(args.out) as fh:
        fh.write(f"# {_meta_line(args, chash)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group", "obs", "action", "occurrences", "distinct_successors",
                    "steps_with_arrivals", "successors"))
        for k, g in enumerate(groups):
            with_arrivals = len({i for i, _ in g.arrivals})
            w.writerow((k, g.obs.key(), g.action.name, len(g.steps), len(g.successors),
                        with_arrivals, ";".join(s.key() for s in g.successors)))
    print(f"{len(groups)} violation groups over {len(trace)} steps")
    return EXIT_OK


def _hidden(text: str) -> list:
    try:
        sizes = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --hidden {text!r}") from None
    if any(s < 1 for s in sizes):
        raise ConfigError("hidden widths must be positive")
    return sizes


def _hyper(args) -> dqn.DqnHyperparams:
    h = dqn.DqnHyperparams(epsilon=args.epsilon, discount=args.discount, lr=args.lr,
                           batch_size=args.batch_size, replay_capacity=args.replay_capacity,
                           sync_period=args.sync_period, epochs=args.epochs,
                           step_cap_factor=args.step_cap_factor, td_mode=args.td_mode,
                           waiting=args.waiting, reward_scale=args.reward_scale,
                           grad_clip=args.grad_clip, momentum=args.momentum,
                           paper_literal_loop=args.paper_literal_loop,
                           resample_traffic=args.resample_traffic)
    try:
        h.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return h


def cmd_train_dqn(args, chash):
    building = _building(args)
    hyper = _hyper(args)
    if args.tape:
        base = _load_tape(args.tape, building.floor_count)
    else:
        base = generate_day(_profile(args, args.seed))

    def factory(epoch):
        if hyper.resample_traffic:
            return Elevator(generate_day(_profile(args, args.seed + epoch)), building)
        return Elevator(base, building)

    sizes = [dqn.encoded_size(building.floor_count)] + _hidden(args.hidden) + [dqn.N_ACTIONS]
    q = nnfa.init_network(sizes, seed=args.seed)
    out = Path(args.out_dir)
    meta = _meta_line(args, chash)
    try:
        result = dqn.train(factory, hyper, (q, q.copy()), seed=args.seed)
    except dqn.NumericFailure as exc:
        with atomic_write(out / "failed_minibatch.json") as fh:
            fh.write(exc.dump())
        raise
    with atomic_write(out / "epochs.tsv") as fh:
        dqn.write_epoch_log(result.records, fh, comment=meta)
    with atomic_write(out / "checkpoint.json") as fh:
        dqn.save_agent(result.net, fh, building.floor_count, building.capacity_kg,
                       meta={"created": created_stamp(), "config_hash": chash,
                             "seed": args.seed})
    return EXIT_OK


def cmd_infer_dqn(args, chash):
    building = _building(args)
    try:
        with open(args.checkpoint) as fh:
            net, enc = dqn.load_agent(fh)
    except nnfa.CheckpointError as exc:
        raise ConfigError(f"{args.checkpoint}: {exc}") from None
    if int(enc["floor_count"]) != building.floor_count:
        raise ConfigError(f"checkpoint was trained for {enc['floor_count']} floors, "
                          f"building has {building.floor_count}")
    table = _load_tape(args.tape, building.floor_count)
    result = dqn.infer(Elevator(table, building), net)
    _write_report(Path(args.out_dir) / "report.csv", result.metrics, _meta_line(args, chash))
    if result.metrics.truncated:
        raise TruncatedEpisode(f"greedy rollout hit the step cap with "
                               f"{result.metrics.people_moved}/{result.metrics.num_events} "
                               f"delivered")
    return EXIT_OK


def cmd_report(args, chash):
    with open(args.log) as fh:
        try:
            rows = dqn.read_epoch_log(fh)
        except ValueError as exc:
            raise ConfigError(f"{args.log}: {exc}") from None
    # label series by the hash of the run that produced the log
    source = chash
    with open(args.log) as fh:
        first = fh.readline()
    if first.startswith("#") and "config_hash=" in first:
        source = first.split("config_hash=", 1)[1].split()[0]
    out = Path(args.out_dir)
    with atomic_write(out / "series.csv") as fh:
        fh.write(f"# {_meta_line(args, chash)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for r in rows:
            w.writerow([source] + [dqn.format_log_value(r[c]) for c in dqn.LOG_COLUMNS])
    if not args.no_figures and rows:
        from .plotting import epoch_figure

        with atomic_write(out / "epochs.png", "wb") as fh:
            epoch_figure(rows, fh, label=f"run {source}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "run-naive": cmd_run_naive,
    "train-dqn": cmd_train_dqn,
    "infer-dqn": cmd_infer_dqn,
    "probe-markov": cmd_probe_markov,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except ConfigError as exc:
        print(f"liftsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        chash = config_hash(_run_config(args))
        return COMMANDS[args.command](args, chash)
    except (ConfigError, TrafficFormatError, ValueError) as exc:
        print(f"liftsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"liftsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (dqn.NumericFailure, nnfa.NonFiniteGradient) as exc:
        print(f"liftsim: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TruncatedEpisode as exc:
        print(f"liftsim: truncated: {exc}", file=sys.stderr)
        return EXIT_TRUNCATED


if __name__ == "__main__":
    sys.exit(main())

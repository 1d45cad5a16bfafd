"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import csv
import hashlib
import random
import time
from collections import deque
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from helpers import finite_difference_error, min_kink_distance, random_net
from liftsim import dqn
from liftsim.cli import main, read_report
from liftsim.cloning import clone_naive
from liftsim.metrics import baseline_threshold
from liftsim.nnfa import DEFAULT_SIZES
from liftsim.qcore import TOY_MDPS, load_toy, train_tabular, value_iteration
from liftsim.simcore import BuildingConfig, Elevator, init_state
from liftsim.traffic import TrafficProfile, TrafficRecord, generate_day, write_csv


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def tree_digests(root):
    root = Path(root)
    return {str(p.relative_to(root)): digest(p) for p in sorted(root.rglob("*")) if p.is_file()}


def write_tape(rows, path):
    with open(path, "w", newline="") as fh:
        write_csv([r if isinstance(r, TrafficRecord) else TrafficRecord(*r) for r in rows], fh)
    return path


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("LIFTSIM_SEED", raising=False)


def test_criterion_01_naive_liveness(tmp_path, acceptance_line):
    worst, failures = 0.0, []
    for seed in range(20):
        tape = tmp_path / f"tape{seed}.csv"
        assert main(["generate", "--workers", "200", "--seed", str(seed), "--out", str(tape)]) == 0
        out = tmp_path / f"run{seed}"
        t0 = time.perf_counter()
        code = main(["run-naive", "--tape", str(tape), "--out-dir", str(out), "--seed", str(seed)])
        elapsed = time.perf_counter() - t0
        worst = max(worst, elapsed)
        rep = read_report(out / "report.csv")
        if code != 0 or rep["people_moved"] != rep["num_events"] or rep["num_events"] != 800 \
                or elapsed >= 5.0:
            failures.append(seed)
    ok = acceptance_line(1, not failures,
                         f"20 tapes x 800 calls all delivered; slowest run-naive {worst:.2f} s "
                         f"(limit 5 s); failing seeds {failures}")
    assert ok


def test_criterion_02_oracle_equivalence(acceptance_line):
    t0 = time.perf_counter()
    dists = {}
    for name in TOY_MDPS:
        mdp = load_toy(name)
        oracle = value_iteration(mdp, tol=1e-10)
        res = train_tabular(mdp, 10_000, epsilon=0.2, alpha=0.1, seed=0, oracle=oracle)
        dists[name] = res.distances[-1]
    elapsed = time.perf_counter() - t0
    ok = all(d < 0.05 for d in dists.values()) and elapsed < 10.0
    shown = ", ".join(f"{k} {v:.2e}" for k, v in dists.items())
    assert acceptance_line(2, ok, f"max-norm distance after 10000 episodes: {shown}; "
                                  f"{elapsed:.2f} s (limit 10 s)")


def test_criterion_03_gradient_correctness(acceptance_line):
    worst_rel = worst_abs = 0.0
    for seed in range(20):
        net = random_net(DEFAULT_SIZES, seed)
        rng = np.random.default_rng(1000 + seed)
        x, u = rng.normal(size=DEFAULT_SIZES[0]), rng.normal(size=DEFAULT_SIZES[-1])
        assert min_kink_distance(net, x) > 1e-4
        rel, ab = finite_difference_error(net, x, u, h=1e-5)
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, ab)
    ok = worst_rel < 1e-4
    assert acceptance_line(3, ok, f"{DEFAULT_SIZES}, 20 seeds, every parameter: max absolute "
                                  f"error {worst_abs:.2e}; max relative error among entries "
                                  f"off by more than 1e-6: {worst_rel:.2e}")


def test_criterion_04_encoding_contract(acceptance_line):
    lengths_ok = True
    for n in (2, 3, 8, 20):
        state, _ = init_state([], BuildingConfig(floor_count=n))
        lengths_ok &= len(dqn.encode_state(state)) == 3 + 3 * n
    golden = {0: "IDLE", 1: "OPEN_CLOSE_UP", 2: "OPEN_CLOSE_DOWN", 3: "MOVE_UP", 4: "MOVE_DOWN"}
    table_ok = all(dqn.decode_action(k).name == v for k, v in golden.items())
    try:
        dqn.decode_action(5)
        reject_ok = False
    except ValueError:
        reject_ok = True
    ok = lengths_ok and table_ok and reject_ok
    assert acceptance_line(4, ok, f"length 3+3n for n in 2,3,8,20: {lengths_ok}; decode table "
                                  f"0..4: {table_ok}; code 5 rejected: {reject_ok}")


def test_criterion_05_reward_sign(acceptance_line):
    rng = random.Random(5)
    steps = bad_sign = bad_zero = 0
    seed = 0
    while steps < 10_000:
        env = Elevator(generate_day(TrafficProfile(workers=20, seed=seed)))
        seed += 1
        while not env.terminal and steps < 10_000:
            out = env.step(rng.choice(sorted(env.legal_actions())))
            r = dqn.reward(out, env.state)
            steps += 1
            bad_sign += r > 0
            zero_expected = env.state.waiting_count() == 0 or out.elapsed_s == 0
            bad_zero += (r == 0) != zero_expected
    ok = steps == 10_000 and bad_sign == 0 and bad_zero == 0
    assert acceptance_line(5, ok, f"{steps} random legal steps over {seed} days: "
                                  f"{bad_sign} positive rewards, {bad_zero} zero-iff mismatches")


def test_criterion_06_determinism(tmp_path, acceptance_line):
    tape = write_tape(generate_day(TrafficProfile(workers=5, seed=2)), tmp_path / "t.csv")

    def run_all(root):
        root.mkdir()
        main(["generate", "--workers", "30", "--seed", "7", "--out", str(root / "gen.csv")])
        main(["run-naive", "--tape", str(tape), "--out-dir", str(root / "naive"), "--seed", "7"])
        main(["train-dqn", "--tape", str(tape), "--out-dir", str(root / "train"), "--seed", "7",
              "--epochs", "2", "--step-cap-factor", "5"])
        main(["infer-dqn", "--tape", str(tape), "--checkpoint",
              str(root / "train" / "checkpoint.json"), "--out-dir", str(root / "infer"),
              "--seed", "7"])
        main(["probe-markov", "--trace", str(root / "naive" / "trace.csv"),
              "--out", str(root / "probe.csv"), "--seed", "7"])
        main(["report", "--log", str(root / "train" / "epochs.tsv"),
              "--out-dir", str(root / "report"), "--seed", "7"])
        return tree_digests(root)

    a, b = run_all(tmp_path / "a"), run_all(tmp_path / "b")
    expected = {"gen.csv", "naive/report.csv", "naive/trace.csv", "train/epochs.tsv",
                "train/checkpoint.json", "infer/report.csv", "probe.csv",
                "report/series.csv", "report/epochs.png"}
    differing = sorted(k for k in a if a.get(k) != b.get(k))
    ok = set(a) == set(b) == expected and not differing
    assert acceptance_line(6, ok, f"six subcommands run twice: {len(a)} artifacts, sha256 "
                                  f"mismatches {differing}")


def test_criterion_07_markov_probe(tmp_path, acceptance_line, capsys):
    # the second call lands while the car is opening at floor 2 for the first
    tape = write_tape([(27000.0, 1, 2, 70.0), (27030.0, 1, 2, 80.0)], tmp_path / "two.csv")
    assert main(["run-naive", "--tape", str(tape), "--out-dir", str(tmp_path / "n"),
                 "--seed", "0"]) == 0
    capsys.readouterr()
    out = tmp_path / "violations.csv"
    assert main(["probe-markov", "--trace", str(tmp_path / "n" / "trace.csv"), "--out", str(out),
                 "--seed", "0"]) == 0
    printed = capsys.readouterr().out.strip()
    with open(out) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    groups = {(r["obs"], r["action"]) for r in rows} if rows and "obs" in rows[0] else set()
    n_groups = int(printed.split()[0])
    ok = n_groups >= 1
    assert acceptance_line(7, ok, f"scripted two-arrival tape: {printed}; "
                                  f"repeated pairs {sorted(groups)}")


def test_criterion_08_dqn_pipeline(tmp_path, monkeypatch, tape50, acceptance_line):
    capacity = 1000
    shadow = deque(maxlen=capacity)
    checks = {"stores": 0, "violations": 0}
    real_train = dqn.train

    def on_store(memory, t):
        checks["stores"] += 1
        shadow.append(id(t))
        if len(memory) != min(checks["stores"], capacity) or len(memory) > capacity:
            checks["violations"] += 1
        if checks["stores"] % 250 == 0 or checks["stores"] <= capacity:
            items = list(memory)
            if items[-1] is not t or [id(x) for x in items] != list(shadow):
                checks["violations"] += 1

    def instrumented(*args, **kw):
        kw["on_store"] = on_store
        return real_train(*args, **kw)

    monkeypatch.setattr(dqn, "train", instrumented)
    tape = write_tape(tape50, tmp_path / "tape50.csv")
    out = tmp_path / "train"
    code = main(["train-dqn", "--tape", str(tape), "--out-dir", str(out), "--seed", "8",
                 "--epochs", "10", "--replay-capacity", str(capacity)])
    rows = dqn.read_epoch_log(open(out / "epochs.tsv")) if code == 0 else []
    well_formed = (len(rows) == 10 and [r["epoch"] for r in rows] == list(range(1, 11))
                   and all(r["num_events"] == 50 and np.isfinite(r["loss_mean"])
                           and 0 <= r["people_moved"] <= 50 for r in rows))
    ok = (code in (0,) and well_formed and checks["violations"] == 0
          and checks["stores"] > capacity and not (out / "failed_minibatch.json").exists())
    moved = [r["people_moved"] for r in rows]
    assert acceptance_line(8, ok, f"exit {code}; {len(rows)} log records; {checks['stores']} "
                                  f"stores past capacity {capacity}, {checks['violations']} "
                                  f"replay violations; people_moved per epoch {moved}")


def test_criterion_09_representability(acceptance_line):
    accs = []
    for seed in range(3):
        tape = generate_day(TrafficProfile(workers=50, seed=seed))
        assert len(tape) == 200
        accs.append(clone_naive(tape, epochs=50, seed=seed).accuracy)
    ok = min(accs) >= 0.90
    assert acceptance_line(9, ok, "held-out action accuracy on three 200-call tapes: "
                                  + ", ".join(f"{a:.3f}" for a in accs) + " (need 0.90)")


def test_criterion_10_baseline_threshold(acceptance_line):
    rng = np.random.default_rng(10)
    cases = [(1000.0, 4), (1000.0, 1), (0.0, 7), (17.0, 3), (0.1, 3), (12345.678, 9)]
    cases += [(float(rng.integers(0, 10**6)), int(rng.integers(1, 50))) for _ in range(500)]
    cases += [(float(rng.random() * 1e5), int(rng.integers(1, 50))) for _ in range(500)]
    mismatches = [c for c in cases if baseline_threshold(*c) != float(Fraction(c[0]) / c[1])]
    try:
        baseline_threshold(1.0, 0)
        rejects = False
    except ValueError:
        rejects = True
    ok = not mismatches and rejects and baseline_threshold(1000.0, 4) == 250.0
    assert acceptance_line(10, ok, f"{len(cases)} integer and fractional cases against exact "
                                   f"rational division: {len(mismatches)} mismatches; n=0 "
                                   f"rejected: {rejects}")

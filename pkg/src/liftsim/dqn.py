"""Deep Q-learning agent for the single elevator.

State encoding, action decoding, reward, replay memory, epsilon-greedy
selection, TD targets, the training loop with a lagged target network, and
greedy inference.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nnfa
from .metrics import MetricsReport, compute_metrics
from .simcore import Action, BuildingState, Elevator, StepOutcome

log = logging.getLogger(__name__)

N_ACTIONS = 5


class NumericFailure(FloatingPointError):
    """Training produced a non-finite loss; ``minibatch`` holds the offending samples."""

    def __init__(self, message: str, minibatch: list):
        super().__init__(message)
        self.minibatch = minibatch

    def dump(self) -> str:
        return json.dumps([
            {"s": t.s.tolist(), "a": t.a, "r": t.r, "s_next": t.s_next.tolist(),
             "terminal": t.terminal, "next_legal": list(t.next_legal)}
            for t in self.minibatch
        ], indent=1)


def encoded_size(floor_count: int) -> int:
    return 3 + 3 * floor_count


def encode_state(state: BuildingState) -> np.ndarray:
    """``[capacity, weight, floor, car buttons..., up buttons..., down buttons...]``."""
    head = [float(state.capacity_kg), float(state.current_weight_kg), float(state.current_floor)]
    buttons = [float(b) for b in state.car_buttons]
    buttons += [float(b) for b in state.up_buttons]
    buttons += [float(b) for b in state.down_buttons]
    return np.array(head + buttons, dtype=float)


def feature_scale(floor_count: int, capacity_kg: float) -> np.ndarray:
    """Divisors bringing the three scalar features to roughly unit range."""
    scale = np.ones(encoded_size(floor_count))
    scale[:3] = (capacity_kg, capacity_kg, floor_count)
    return scale


def decode_action(code: int) -> Action:
    if isinstance(code, bool) or int(code) != code or not 0 <= code < N_ACTIONS:
        raise ValueError(f"action code must be an integer in [0, 4], got {code!r}")
    return Action(int(code))


def reward(outcome: StepOutcome, state_after: BuildingState, waiting: str = "all") -> float:
    """Minus (people still waiting after the step) times (seconds the step took).

    ``waiting="all"`` counts hall passengers and riders; ``"hall"`` counts the
    hall only.
    """
    if waiting == "all":
        n = state_after.waiting_count()
    elif waiting == "hall":
        n = state_after.waiting_in_hall()
    else:
        raise ValueError(f"unknown waiting mode {waiting!r}")
    return waiting_cost(n, outcome.elapsed_s)


def waiting_cost(n_waiting: int, elapsed_s: float) -> float:
    if n_waiting == 0 or elapsed_s == 0:
        return 0.0
    return -1.0 * n_waiting * elapsed_s


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool
    next_legal: tuple = tuple(range(N_ACTIONS))


class ReplayMemory:
    """Bounded FIFO of transitions; once full the oldest entry is overwritten."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buf: list = []
        self._head = 0  # index of the oldest entry once full
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._buf)

    def push(self, t: Transition) -> None:
        if len(self._buf) < self.capacity:
            self._buf.append(t)
        else:
            self._buf[self._head] = t
            self._head = (self._head + 1) % self.capacity

    def __iter__(self):
        """Oldest first."""
        yield from self._buf[self._head:]
        yield from self._buf[:self._head]

    def sample(self, batch_size: int) -> list:
        n = len(self._buf)
        idx = self.rng.choice(n, size=min(batch_size, n), replace=False)
        return [self._buf[i] for i in idx]


def _q_values(net: nnfa.NetworkParams, s: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return nnfa.forward(net, s / scale)


def select_action(q_net: nnfa.NetworkParams, s: np.ndarray, legal, epsilon: float,
                  rng: np.random.Generator, scale: Optional[np.ndarray] = None) -> int:
    legal = sorted(int(a) for a in legal)
    if not legal:
        raise ValueError("no legal action")
    if epsilon > 0 and rng.random() < epsilon:
        return legal[int(rng.integers(len(legal)))]
    q = _q_values(q_net, s, scale if scale is not None else 1.0)
    # first maximal entry among legal codes (ascending) gives lowest-index ties
    best = legal[0]
    for a in legal[1:]:
        if q[a] > q[best]:
            best = a
    return best


def td_target(t: Transition, target_net: nnfa.NetworkParams, discount: float,
              mode: str = "standard", scale: Optional[np.ndarray] = None) -> float:
    """``r + discount * max Q*(s', a')`` over legal a' (``-`` in "paper-literal" mode)."""
    if mode not in ("standard", "paper-literal"):
        raise ValueError(f"unknown td mode {mode!r}")
    if t.terminal or discount == 0 or not t.next_legal:
        return float(t.r)
    q = _q_values(target_net, t.s_next, scale if scale is not None else 1.0)
    m = discount * max(q[a] for a in t.next_legal)
    return float(t.r + m) if mode == "standard" else float(t.r - m)


def _batch_targets(batch: Sequence[Transition], target_net, discount, mode, scale):
    r = np.array([t.r for t in batch], dtype=float)
    if discount == 0:
        return r
    mask = np.zeros((len(batch), N_ACTIONS), dtype=bool)
    for i, t in enumerate(batch):
        if not t.terminal:
            mask[i, list(t.next_legal)] = True
    q = nnfa.forward(target_net, np.stack([t.s_next for t in batch]) / scale)
    best = np.where(mask, q, -np.inf).max(axis=1)
    m = discount * np.where(mask.any(axis=1), best, 0.0)
    return r + m if mode == "standard" else r - m


def minibatch_gradients(net, batch, targets, scale):
    """Mean squared TD error over the batch and its parameter gradients.

    Gradients are None when the loss is not finite.
    """
    x = np.stack([t.s for t in batch]) / scale
    q = nnfa.forward(net, x)
    acts = np.array([t.a for t in batch])
    rows = np.arange(len(batch))
    err = q[rows, acts] - targets
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(err ** 2))
    if not math.isfinite(loss):
        return loss, None
    upstream = np.zeros_like(q)
    upstream[rows, acts] = 2.0 * err / len(batch)
    return loss, nnfa.backward(net, x, upstream)


@dataclass
class DqnHyperparams:
    epsilon: float = 0.1
    discount: float = 0.99
    lr: float = 1e-3  # 0 freezes the network
    batch_size: int = 32
    replay_capacity: int = 100_000
    sync_period: int = 1000
    epochs: int = 10
    step_cap_factor: int = 50  # step cap = factor * event count
    td_mode: str = "standard"
    waiting: str = "all"
    reward_scale: float = 1e-3
    grad_clip: float = 10.0  # max gradient L2 norm; 0 disables
    momentum: float = 0.0
    paper_literal_loop: bool = False
    resample_traffic: bool = False

    def validate(self) -> None:
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1 or self.replay_capacity < 1 or self.sync_period < 1:
            raise ValueError("batch_size, replay_capacity and sync_period must be >= 1")
        if self.epochs < 0 or self.step_cap_factor < 1:
            raise ValueError("epochs must be >= 0 and step_cap_factor >= 1")
        if self.td_mode not in ("standard", "paper-literal"):
            raise ValueError(f"unknown td_mode {self.td_mode!r}")
        if self.waiting not in ("all", "hall"):
            raise ValueError(f"unknown waiting mode {self.waiting!r}")
        if not self.reward_scale > 0:
            raise ValueError("reward_scale must be positive")


LOG_COLUMNS = ("epoch", "num_events", "people_moved", "mean_total_time_s",
               "median_total_time_s", "max_total_time_s", "sum_total_time_s",
               "epsilon", "loss_mean")


@dataclass
class EpochRecord:
    epoch: int
    metrics: MetricsReport
    epsilon: float
    loss_mean: float
    steps: int
    actions: list = field(default_factory=list, repr=False)

    def row(self) -> list:
        m = self.metrics
        return [self.epoch, m.num_events, m.people_moved, m.mean_total_time_s,
                m.median_total_time_s, m.max_total_time_s, m.sum_total_time_s,
                self.epsilon, self.loss_mean]


@dataclass
class TrainResult:
    net: nnfa.NetworkParams
    target_net: nnfa.NetworkParams
    records: list
    memory: ReplayMemory
    gradient_steps: int


def format_log_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_epoch_log(records: Sequence[EpochRecord], sink, comment: Optional[str] = None) -> None:
    if comment is not None:
        sink.write(f"# {comment}\n")
    sink.write("\t".join(LOG_COLUMNS) + "\n")
    for rec in records:
        if rec.metrics.truncated:
            sink.write(f"# epoch {rec.epoch} truncated after {rec.steps} steps\n")
        sink.write("\t".join(format_log_value(v) for v in rec.row()) + "\n")


def read_epoch_log(source) -> list[dict]:
    rows = []
    header = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        cells = line.split("\t")
        if header is None:
            if tuple(cells) != LOG_COLUMNS:
                raise ValueError(f"line {lineno}: unexpected epoch-log header")
            header = cells
            continue
        if len(cells) != len(LOG_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(LOG_COLUMNS)} columns, "
                             f"got {len(cells)}")
        row = {}
        for name, cell in zip(LOG_COLUMNS, cells):
            try:
                row[name] = int(cell) if name in ("epoch", "num_events", "people_moved") \
                    else float(cell)
            except ValueError:
                raise ValueError(f"line {lineno}, column {name}: bad value {cell!r}") from None
        rows.append(row)
    if header is None:
        raise ValueError("epoch log has no header")
    return rows


def train(env_factory: Callable[[int], Elevator], hyper: DqnHyperparams,
          nets: tuple, seed: int = 0, memory: Optional[ReplayMemory] = None,
          on_store: Optional[Callable[[ReplayMemory, Transition], None]] = None) -> TrainResult:
    """Run ``hyper.epochs`` training episodes.

    ``env_factory(epoch)`` builds a fresh building for each epoch.  ``nets`` is
    ``(q, q_target)``; both are copied, never mutated.
    """
    hyper.validate()
    q_net, target = nets[0].copy(), nets[1].copy()
    if q_net.sizes != target.sizes:
        raise ValueError("online and target networks differ in architecture")
    rng = np.random.default_rng(seed)
    if memory is None:
        memory = ReplayMemory(hyper.replay_capacity, seed=int(rng.integers(2**63)))
    optimizer = nnfa.Momentum(hyper.momentum) if hyper.momentum > 0 else None
    records = []
    grad_steps = 0

    def gradient_step(batch):
        nonlocal q_net
        targets = _batch_targets(batch, target, hyper.discount, hyper.td_mode, scale)
        loss, grads = minibatch_gradients(q_net, batch, targets, scale)
        if not math.isfinite(loss):
            raise NumericFailure(f"non-finite loss {loss} at gradient step {grad_steps}",
                                 list(batch))
        if hyper.lr > 0:
            if hyper.grad_clip > 0:
                grads = nnfa.scale_gradients(grads, hyper.grad_clip)
            if optimizer is not None:
                q_net = optimizer.step(q_net, grads, hyper.lr)
            else:
                q_net = nnfa.sgd_step(q_net, grads, hyper.lr)
        return loss

    for epoch in range(1, hyper.epochs + 1):
        env = env_factory(epoch)
        scale = feature_scale(env.config.floor_count, env.config.capacity_kg)
        if q_net.n_in != len(scale) or q_net.n_out != N_ACTIONS:
            raise ValueError(f"network {q_net.sizes} does not fit a "
                             f"{env.config.floor_count}-floor encoder")
        cap = hyper.step_cap_factor * max(env.num_events, 1)
        losses = []
        actions = []
        steps = 0
        while not env.terminal and steps < cap:
            s = encode_state(env.state)
            a = select_action(q_net, s, env.legal_actions(), hyper.epsilon, rng, scale)
            out = env.step(a)
            actions.append(a)
            steps += 1
            r = reward(out, env.state, hyper.waiting) * hyper.reward_scale
            t = Transition(s, a, r, encode_state(env.state), out.terminal,
                           tuple(sorted(int(x) for x in env.legal_actions())))
            memory.push(t)
            if on_store is not None:
                on_store(memory, t)
            batch = memory.sample(hyper.batch_size)
            if hyper.paper_literal_loop:
                count = 0
                for item in batch:
                    losses.append(gradient_step([item]))
                    grad_steps += 1
                    count += 1
                    if count % hyper.sync_period == 0:
                        target = q_net.copy()
            else:
                losses.append(gradient_step(batch))
                grad_steps += 1
                if grad_steps % hyper.sync_period == 0:
                    target = q_net.copy()
        metrics = compute_metrics(env.state.passengers, num_events=env.num_events)
        if steps >= cap and not env.terminal:
            metrics.truncated = True
        loss_mean = float(np.mean(losses)) if losses else 0.0
        rec = EpochRecord(epoch, metrics, hyper.epsilon, loss_mean, steps, actions)
        log.info("epoch %d: moved %d/%d, mean %.1f s, loss %.4g%s", epoch,
                 metrics.people_moved, metrics.num_events, metrics.mean_total_time_s,
                 loss_mean, " (truncated)" if metrics.truncated else "")
        records.append(rec)
    return TrainResult(q_net, target, records, memory, grad_steps)


@dataclass
class InferenceResult:
    metrics: MetricsReport
    actions: list
    steps: int


def infer(env: Elevator, net: nnfa.NetworkParams, step_cap: Optional[int] = None,
          step_cap_factor: int = 50) -> InferenceResult:
    """Greedy legal-masked rollout; no exploration, no learning."""
    scale = feature_scale(env.config.floor_count, env.config.capacity_kg)
    if net.n_in != len(scale) or net.n_out != N_ACTIONS:
        raise ValueError(f"network {net.sizes} does not fit a "
                         f"{env.config.floor_count}-floor encoder")
    if step_cap is None:
        step_cap = step_cap_factor * max(env.num_events, 1)
    actions = []
    dummy = np.random.default_rng(0)
    while not env.terminal and len(actions) < step_cap:
        a = select_action(net, encode_state(env.state), env.legal_actions(), 0.0, dummy, scale)
        env.step(a)
        actions.append(a)
    metrics = compute_metrics(env.state.passengers, num_events=env.num_events)
    if not env.terminal:
        metrics.truncated = True
    return InferenceResult(metrics, actions, len(actions))


def save_agent(net: nnfa.NetworkParams, sink, floor_count: int, capacity_kg: float,
               meta: Optional[dict] = None) -> None:
    nnfa.save_checkpoint(net, sink, meta,
                         extra={"encoder": {"floor_count": floor_count,
                                            "capacity_kg": capacity_kg}})


def load_agent(source) -> tuple[nnfa.NetworkParams, dict]:
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise nnfa.CheckpointError(f"not valid JSON: {exc}") from None
    net = nnfa.from_checkpoint(doc)
    enc = doc.get("encoder")
    if not isinstance(enc, dict) or "floor_count" not in enc:
        raise nnfa.CheckpointError("checkpoint has no encoder stanza")
    if net.n_in != encoded_size(int(enc["floor_count"])):
        raise nnfa.CheckpointError(f"network takes {net.n_in} inputs but the encoder "
                                   f"produces {encoded_size(int(enc['floor_count']))}")
    return net, enc


def hyper_dict(hyper: DqnHyperparams) -> dict:
    return asdict(hyper)

"""Finite MDPs: value iteration, tabular Q-learning and Bellman diagnostics.

Q-tables are dense ``(n_states, n_actions)`` float arrays.  Illegal entries
stay at zero and never take part in a max.  A state with no legal action is
terminal and bootstraps to zero.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional, Union

import numpy as np


@dataclass
class FiniteMdp:
    states: list
    actions: list
    transition: np.ndarray  # (A, S, S)
    reward: np.ndarray  # (A, S, S)
    legal: np.ndarray  # (S, A) bool
    discount: float

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        self.legal = np.asarray(self.legal, dtype=bool)
        self.validate()

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def validate(self) -> None:
        A, S = self.n_actions, self.n_states
        if self.transition.shape != (A, S, S) or self.reward.shape != (A, S, S):
            raise ValueError("transition/reward must have shape (actions, states, states)")
        if self.legal.shape != (S, A):
            raise ValueError("legal mask must have shape (states, actions)")
        if not 0 <= self.discount < 1:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if (self.transition < 0).any() or (self.transition > 1).any():
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.isfinite(self.reward).all():
            raise ValueError("rewards must be finite")
        for s in range(S):
            for a in range(A):
                total = self.transition[a, s].sum()
                if self.legal[s, a] and abs(total - 1.0) > 1e-12:
                    raise ValueError(f"P[{self.actions[a]}]({self.states[s]}, .) sums to {total}")

    def terminal(self, s: int) -> bool:
        return not self.legal[s].any()

    def expected_reward(self) -> np.ndarray:
        """(S, A) table of sum_s' P_a(s, s') R_a(s, s')."""
        return np.einsum("ast,ast->sa", self.transition, self.reward)

    def scaled(self, c: float) -> "FiniteMdp":
        return FiniteMdp(self.states, self.actions, self.transition, self.reward * c,
                         self.legal, self.discount)


def parse_mdp(text: str) -> FiniteMdp:
    """Parse ``s a s' prob reward`` lines plus one ``discount <value>`` line."""
    rows = []
    discount = None
    states: list = []
    actions: list = []

    def index(seq, name):
        if name not in seq:
            seq.append(name)
        return seq.index(name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "discount":
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'discount <value>'")
            discount = float(parts[1])
            continue
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 's a s' prob reward'")
        s, a, s2 = index(states, parts[0]), index(actions, parts[1]), index(states, parts[2])
        rows.append((s, a, s2, float(parts[3]), float(parts[4])))
    if discount is None:
        raise ValueError("missing discount line")
    S, A = len(states), len(actions)
    P = np.zeros((A, S, S))
    R = np.zeros((A, S, S))
    legal = np.zeros((S, A), dtype=bool)
    for s, a, s2, p, r in rows:
        P[a, s, s2] += p
        R[a, s, s2] = r
        legal[s, a] = True
    return FiniteMdp(states, actions, P, R, legal, discount)


TOY_MDPS = ("two_state", "one_state", "corridor")


def load_toy(name: str) -> FiniteMdp:
    text = resources.files("liftsim.data").joinpath(f"{name}.mdp").read_text()
    return parse_mdp(text)


def greedy_max(q: np.ndarray, legal: np.ndarray) -> np.ndarray:
    """Per-state max over legal actions; 0 for terminal states."""
    masked = np.where(legal, q, -np.inf)
    best = masked.max(axis=1)
    return np.where(np.isfinite(best), best, 0.0)


def greedy_actions(q: np.ndarray, legal: np.ndarray) -> np.ndarray:
    # argmax picks the lowest index on ties
    return np.argmax(np.where(legal, q, -np.inf), axis=1)


def bellman_backup(mdp: FiniteMdp, q: np.ndarray) -> np.ndarray:
    v = greedy_max(q, mdp.legal)
    out = np.einsum("ast,ast->sa", mdp.transition, mdp.reward + mdp.discount * v[None, None, :])
    return np.where(mdp.legal, out, 0.0)


def bellman_residual(mdp: FiniteMdp, q: np.ndarray) -> float:
    return float(np.max(np.abs(bellman_backup(mdp, q) - q), initial=0.0))


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    if not tol > 0:
        raise ValueError("tol must be positive")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        nxt = bellman_backup(mdp, q)
        if np.max(np.abs(nxt - q), initial=0.0) <= tol:
            return nxt
        q = nxt
    raise RuntimeError("value iteration did not converge")


def _td_update(q, s, a, r, next_value, alpha, discount):
    q[s, a] += alpha * (r + discount * next_value - q[s, a])


def q_learning_step(q: np.ndarray, s: int, a: int, r: float, s_next: int,
                    alpha: float, discount: float,
                    legal: Optional[np.ndarray] = None) -> np.ndarray:
    """Return a copy of ``q`` with entry (s, a) moved toward the one-step target.

    ``legal`` is the (S, A) mask; without it every action counts, and a next
    state is terminal only if the caller passes ``s_next=None``.
    """
    out = np.array(q, dtype=float, copy=True)
    if s_next is None:
        nv = 0.0
    elif legal is None:
        nv = float(out[s_next].max())
    else:
        nv = float(greedy_max(out[s_next:s_next + 1], legal[s_next:s_next + 1])[0])
    _td_update(out, s, a, r, nv, alpha, discount)
    return out


AlphaSchedule = Union[str, float, Callable[[int], float]]


def _alpha_fn(alpha: AlphaSchedule, alpha0: float) -> Callable[[int], float]:
    if callable(alpha):
        return alpha
    if alpha == "constant":
        return lambda n: alpha0
    if alpha == "harmonic":
        return lambda n: 1.0 / n
    if isinstance(alpha, (int, float)):
        return lambda n: float(alpha)
    raise ValueError(f"unknown alpha schedule {alpha!r}")


@dataclass
class TabularResult:
    q: np.ndarray
    distances: list  # per-episode max-norm distance to the value-iteration oracle
    oracle: np.ndarray


def train_tabular(mdp: FiniteMdp, episodes: int, epsilon: float = 0.2,
                  alpha: AlphaSchedule = "constant", seed: int = 0,
                  alpha0: float = 0.1, horizon: int = 20,
                  oracle: Optional[np.ndarray] = None) -> TabularResult:
    """Epsilon-greedy Q-learning from uniformly drawn start states.

    Each episode runs ``horizon`` steps or until a terminal state.  With the
    "harmonic" schedule the step size for (s, a) is 1 / visits(s, a).
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must be in (0, 1]")
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    step_size = _alpha_fn(alpha, alpha0)
    if oracle is None:
        oracle = value_iteration(mdp, tol=1e-10)
    rng = random.Random(seed)
    S, A = mdp.n_states, mdp.n_actions
    q = np.zeros((S, A))
    visits = np.zeros((S, A), dtype=int)
    legal_lists = [[a for a in range(A) if mdp.legal[s, a]] for s in range(S)]
    cdfs = {(s, a): np.cumsum(mdp.transition[a, s]).tolist()
            for s in range(S) for a in legal_lists[s]}
    distances = []
    for _ in range(episodes):
        s = rng.randrange(S)
        for _ in range(horizon):
            acts = legal_lists[s]
            if not acts:
                break
            if rng.random() < epsilon:
                a = rng.choice(acts)
            else:
                row = q[s]
                a = max(acts, key=lambda k: (row[k], -k))
            cdf = cdfs[(s, a)]
            s2 = min(bisect.bisect_right(cdf, rng.random() * cdf[-1]), S - 1)
            r = mdp.reward[a, s, s2]
            nxt = legal_lists[s2]
            nv = max(q[s2, k] for k in nxt) if nxt else 0.0
            visits[s, a] += 1
            _td_update(q, s, a, r, nv, step_size(visits[s, a]), mdp.discount)
            s = s2
        distances.append(float(np.max(np.abs(np.where(mdp.legal, q - oracle, 0.0)),
                                      initial=0.0)))
    return TabularResult(q, distances, oracle)

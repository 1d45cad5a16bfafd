"""Hard-coded two-phase baseline controller.

Seeking: the car is empty and heads for the closest floor with a lit hall
button, then opens for one of the lit directions.  Committed: the car keeps
moving in that direction, stopping for riders and same-direction calls,
until it is empty again.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .simcore import Action, Elevator, Observation, StepOutcome, TraceStep

UP, DOWN = "up", "down"

_OPEN = {UP: Action.OPEN_CLOSE_UP, DOWN: Action.OPEN_CLOSE_DOWN}
_MOVE = {UP: Action.MOVE_UP, DOWN: Action.MOVE_DOWN}


@dataclass(frozen=True)
class NaivePhase:
    direction: Optional[str] = None  # None while seeking

    @property
    def seeking(self) -> bool:
        return self.direction is None


SEEKING = NaivePhase()


def _closest_call_floor(obs: Observation) -> Optional[int]:
    lit = [f for f in range(1, obs.floor_count + 1)
           if obs.up_buttons[f - 1] or obs.down_buttons[f - 1]]
    if not lit:
        return None
    # equal distance: the lower floor wins
    return min(lit, key=lambda f: (abs(f - obs.current_floor), f))


def naive_decide(obs: Observation, phase: NaivePhase, rng: random.Random,
                 legal: Optional[set] = None) -> tuple[Action, NaivePhase]:
    """Pick the next action.

    ``legal`` is the simulator's current legal set; it lets the controller
    skip a door cycle that could not board anyone (full car), which the
    button view alone cannot reveal.
    """

    def allowed(a: Action) -> bool:
        return legal is None or a in legal

    f = obs.current_floor
    if not phase.seeking:
        d = phase.direction
        here_lit = obs.up_buttons[f - 1] if d == UP else obs.down_buttons[f - 1]
        if (obs.car_buttons[f - 1] or here_lit) and allowed(_OPEN[d]):
            return _OPEN[d], phase
        if any(obs.car_buttons):
            return _MOVE[d], phase
        phase = SEEKING

    target = _closest_call_floor(obs)
    if target is None:
        return Action.IDLE, SEEKING
    if target > f:
        return Action.MOVE_UP, SEEKING
    if target < f:
        return Action.MOVE_DOWN, SEEKING
    dirs = [d for d, lit in ((UP, obs.up_buttons[f - 1]), (DOWN, obs.down_buttons[f - 1]))
            if lit and allowed(_OPEN[d])]
    if not dirs:
        return Action.IDLE, SEEKING
    d = dirs[0] if len(dirs) == 1 else rng.choice(dirs)
    return _OPEN[d], NaivePhase(d)


@dataclass
class NaiveRun:
    outcomes: list  # StepOutcome per step
    trace: list  # TraceStep per step
    truncated: bool
    clocks: list = field(default_factory=list)  # clock before each step
    waiting: list = field(default_factory=list)  # people in hall or car after each step


def run_naive(env: Elevator, seed: int = 0, step_cap: Optional[int] = None,
              on_decision=None) -> NaiveRun:
    """Drive ``env`` with the naive controller until terminal or ``step_cap``.

    ``on_decision(env, action)`` is called before each step; behaviour cloning
    uses it to record (state, action) pairs.
    """
    rng = random.Random(seed)
    phase = SEEKING
    outcomes: list[StepOutcome] = []
    trace: list[TraceStep] = []
    clocks: list = []
    waiting: list = []
    if step_cap is None:
        step_cap = 10 * max(env.num_events, 1) * env.config.floor_count
    while not env.terminal:
        if len(outcomes) >= step_cap:
            return NaiveRun(outcomes, trace, True, clocks, waiting)
        obs = env.observe()
        legal = env.legal_actions()
        action, phase = naive_decide(obs, phase, rng, legal)
        if on_decision is not None:
            on_decision(env, action)
        clocks.append(env.state.clock_s)
        out = env.step(action)
        outcomes.append(out)
        waiting.append(env.state.waiting_count())
        trace.append(TraceStep(obs, action, env.observe(), tuple(out.arrivals)))
    return NaiveRun(outcomes, trace, False, clocks, waiting)

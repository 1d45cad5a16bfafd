"""Event-driven single-elevator environment.

The building is advanced one controller action at a time.  Hall-call
arrivals live in a :class:`TimeList` and are drained into the
:class:`BuildingState` whenever the clock passes their timestamp.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .traffic import TrafficRecord


class IllegalAction(ValueError):
    pass


class Action(enum.IntEnum):
    IDLE = 0
    OPEN_CLOSE_UP = 1
    OPEN_CLOSE_DOWN = 2
    MOVE_UP = 3
    MOVE_DOWN = 4


UP, DOWN = 0, 1  # hall queue directions


class Location(enum.Enum):
    HALL = "hall"
    CAR = "car"
    DELIVERED = "delivered"


@dataclass(frozen=True)
class HallCallArrival:
    time_s: float
    start_floor: int
    dest_floor: int
    weight_kg: float
    passenger_id: int


Event = HallCallArrival


class TimeList:
    """Future events ordered by (time, insertion sequence)."""

    def __init__(self, events: Iterable[Event] = ()):
        self._heap: list = []
        self._seq = itertools.count()
        for ev in events:
            self.push(ev)

    def push(self, event: Event) -> None:
        if event.time_s < 0:
            raise ValueError(f"event time must be >= 0, got {event.time_s}")
        heapq.heappush(self._heap, (event.time_s, next(self._seq), event))

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[2]

    def pop_until(self, time_s: float) -> list[Event]:
        out = []
        while self._heap and self._heap[0][0] <= time_s:
            out.append(heapq.heappop(self._heap)[2])
        return out

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass
class Passenger:
    id: int
    call_time_s: float
    start_floor: int
    dest_floor: int
    weight_kg: float
    board_time_s: Optional[float] = None
    delivery_time_s: Optional[float] = None
    location: Location = Location.HALL

    @property
    def direction(self) -> int:
        return UP if self.dest_floor > self.start_floor else DOWN

    @property
    def total_time_s(self) -> Optional[float]:
        if self.delivery_time_s is None:
            return None
        return self.delivery_time_s - self.call_time_s


@dataclass(frozen=True)
class BuildingConfig:
    floor_count: int = 8
    capacity_kg: float = 1000.0
    door_cycle_s: float = 15.0
    floor_travel_s: float = 5.0
    start_clock_s: float = 27000.0
    # clock advance for Idle once no future events remain but people are still in the system
    idle_tick_s: float = 5.0
    # allow opening doors when nobody would board or leave
    allow_idle_doors: bool = False

    def validate(self) -> None:
        if self.floor_count < 2:
            raise ValueError("floor_count must be >= 2")
        if not self.capacity_kg > 0:
            raise ValueError("capacity_kg must be positive")
        if self.door_cycle_s < 0 or self.floor_travel_s < 0 or not self.idle_tick_s > 0:
            raise ValueError("timing constants must be nonnegative (idle_tick_s positive)")


@dataclass
class BuildingState:
    config: BuildingConfig
    clock_s: float
    current_floor: int = 1
    current_weight_kg: float = 0.0
    up_buttons: list = field(default_factory=list)
    down_buttons: list = field(default_factory=list)
    car_buttons: list = field(default_factory=list)
    # hall_queues[floor - 1][UP or DOWN] -> FIFO list of passengers
    hall_queues: list = field(default_factory=list)
    riders: list = field(default_factory=list)
    passengers: list = field(default_factory=list)  # every drained arrival, in drain order
    terminal: bool = False

    @property
    def floor_count(self) -> int:
        return self.config.floor_count

    @property
    def capacity_kg(self) -> float:
        return self.config.capacity_kg

    def waiting_in_hall(self) -> int:
        return sum(len(q[UP]) + len(q[DOWN]) for q in self.hall_queues)

    def waiting_count(self) -> int:
        """People still on their way: in the hall or riding."""
        return self.waiting_in_hall() + len(self.riders)

    def check_invariants(self) -> None:
        cfg = self.config
        assert 1 <= self.current_floor <= cfg.floor_count
        assert abs(self.current_weight_kg - sum(p.weight_kg for p in self.riders)) <= 1e-9
        assert self.current_weight_kg <= cfg.capacity_kg + 1e-9
        for f in range(cfg.floor_count):
            q = self.hall_queues[f]
            assert self.up_buttons[f] == bool(q[UP])
            assert self.down_buttons[f] == bool(q[DOWN])
        dests = {p.dest_floor for p in self.riders}
        for f in range(cfg.floor_count):
            assert self.car_buttons[f] == ((f + 1) in dests)
        assert not self.up_buttons[cfg.floor_count - 1]
        assert not self.down_buttons[0]


@dataclass(frozen=True)
class Observation:
    """What a controller sees.  ``capacity_kg``/``current_weight_kg`` are None in the basic view."""

    up_buttons: tuple
    down_buttons: tuple
    car_buttons: tuple
    current_floor: int
    capacity_kg: Optional[float] = None
    current_weight_kg: Optional[float] = None

    @property
    def floor_count(self) -> int:
        return len(self.up_buttons)

    def basic(self) -> "Observation":
        return Observation(self.up_buttons, self.down_buttons, self.car_buttons,
                           self.current_floor)

    def key(self) -> str:
        bits = lambda xs: "".join("1" if x else "0" for x in xs)
        return (f"f{self.current_floor}|u{bits(self.up_buttons)}"
                f"|d{bits(self.down_buttons)}|c{bits(self.car_buttons)}")

    @classmethod
    def from_key(cls, key: str) -> "Observation":
        try:
            f, u, d, c = key.split("|")
            assert f[0] == "f" and u[0] == "u" and d[0] == "d" and c[0] == "c"
            assert len(u) == len(d) == len(c)
            unbits = lambda s: tuple(ch == "1" for ch in s[1:])
            return cls(unbits(u), unbits(d), unbits(c), int(f[1:]))
        except (AssertionError, ValueError, IndexError):
            raise ValueError(f"malformed observation key {key!r}") from None


@dataclass
class StepOutcome:
    action: Action
    elapsed_s: float
    boarded: list
    delivered: list
    arrivals: list
    terminal: bool


def _pressed(flags) -> tuple:
    return tuple(bool(x) for x in flags)


def observe(state: BuildingState, extended: bool = False) -> Observation:
    obs = Observation(_pressed(state.up_buttons), _pressed(state.down_buttons),
                      _pressed(state.car_buttons), state.current_floor)
    if extended:
        return Observation(obs.up_buttons, obs.down_buttons, obs.car_buttons,
                           obs.current_floor, state.capacity_kg, state.current_weight_kg)
    return obs


def init_state(table: Sequence[TrafficRecord],
               config: BuildingConfig = BuildingConfig()) -> tuple[BuildingState, TimeList]:
    config.validate()
    n = config.floor_count
    timelist = TimeList()
    for pid, rec in enumerate(table):
        for f in (rec.start_floor, rec.dest_floor):
            if not 1 <= f <= n:
                raise ValueError(f"record {pid}: floor {f} outside [1, {n}]")
        if rec.start_floor == rec.dest_floor:
            raise ValueError(f"record {pid}: start and destination are equal")
        if rec.weight_kg > config.capacity_kg:
            raise ValueError(f"record {pid}: weight {rec.weight_kg} kg exceeds capacity "
                             f"{config.capacity_kg} kg and could never board")
        timelist.push(HallCallArrival(rec.time_s, rec.start_floor, rec.dest_floor,
                                      rec.weight_kg, pid))
    state = BuildingState(
        config=config,
        clock_s=config.start_clock_s,
        up_buttons=[False] * n,
        down_buttons=[False] * n,
        car_buttons=[False] * n,
        hall_queues=[([], []) for _ in range(n)],
    )
    return state, timelist


def is_terminal(state: BuildingState, timelist: TimeList) -> bool:
    return not timelist and not state.riders and state.waiting_in_hall() == 0


def _sync_buttons(state: BuildingState, floor: int) -> None:
    q = state.hall_queues[floor - 1]
    state.up_buttons[floor - 1] = bool(q[UP])
    state.down_buttons[floor - 1] = bool(q[DOWN])


def _drain(state: BuildingState, timelist: TimeList) -> list[Event]:
    arrivals = timelist.pop_until(state.clock_s)
    for ev in arrivals:
        p = Passenger(ev.passenger_id, max(ev.time_s, state.config.start_clock_s),
                      ev.start_floor, ev.dest_floor, ev.weight_kg)
        state.passengers.append(p)
        state.hall_queues[ev.start_floor - 1][p.direction].append(p)
        _sync_buttons(state, ev.start_floor)
    return arrivals


def _door_has_effect(state: BuildingState, direction: int) -> bool:
    f = state.current_floor
    if state.car_buttons[f - 1]:
        return True
    queue = state.hall_queues[f - 1][direction]
    if not queue:
        return False
    return state.current_weight_kg + queue[0].weight_kg <= state.capacity_kg


def legal_actions(state: BuildingState, timelist: TimeList) -> set[Action]:
    legal = {Action.IDLE}
    f = state.current_floor
    # an empty building offers nothing to move toward; Idle skips to the next call
    if state.riders or state.waiting_in_hall():
        if f < state.floor_count:
            legal.add(Action.MOVE_UP)
        if f > 1:
            legal.add(Action.MOVE_DOWN)
    for action, direction in ((Action.OPEN_CLOSE_UP, UP), (Action.OPEN_CLOSE_DOWN, DOWN)):
        if state.config.allow_idle_doors or _door_has_effect(state, direction):
            legal.add(action)
    return legal


def _open_close(state: BuildingState, direction: int) -> tuple[list, list]:
    f = state.current_floor
    t = state.clock_s
    delivered = [p for p in state.riders if p.dest_floor == f]
    if delivered:
        state.riders = [p for p in state.riders if p.dest_floor != f]
        for p in delivered:
            p.delivery_time_s = t
            p.location = Location.DELIVERED
    boarded = []
    queue = state.hall_queues[f - 1][direction]
    load = sum(p.weight_kg for p in state.riders)
    while queue and load + queue[0].weight_kg <= state.capacity_kg:
        p = queue.pop(0)
        p.board_time_s = t
        p.location = Location.CAR
        state.riders.append(p)
        load += p.weight_kg
        boarded.append(p)
    state.current_weight_kg = sum(p.weight_kg for p in state.riders)
    _sync_buttons(state, f)
    car = [False] * state.floor_count
    for p in state.riders:
        car[p.dest_floor - 1] = True
    state.car_buttons = car
    return boarded, delivered


def apply_action(state: BuildingState, timelist: TimeList, action) -> StepOutcome:
    """Advance the building by one controller action (mutates ``state`` and ``timelist``)."""
    action = Action(action)
    if action not in legal_actions(state, timelist):
        raise IllegalAction(f"{action.name} not legal at floor {state.current_floor}")
    cfg = state.config
    start = state.clock_s
    boarded: list = []
    delivered: list = []

    if action == Action.IDLE:
        nxt = timelist.peek_time()
        if nxt is None:
            if is_terminal(state, timelist):
                state.terminal = True
                return StepOutcome(action, 0.0, [], [], [], True)
            state.clock_s = start + cfg.idle_tick_s
        else:
            state.clock_s = max(start, nxt)
    elif action == Action.MOVE_UP:
        state.current_floor += 1
        state.clock_s = start + cfg.floor_travel_s
    elif action == Action.MOVE_DOWN:
        state.current_floor -= 1
        state.clock_s = start + cfg.floor_travel_s
    else:
        state.clock_s = start + cfg.door_cycle_s
        direction = UP if action == Action.OPEN_CLOSE_UP else DOWN
        boarded, delivered = _open_close(state, direction)

    arrivals = _drain(state, timelist)
    state.terminal = is_terminal(state, timelist)
    return StepOutcome(action, state.clock_s - start, boarded, delivered, arrivals,
                       state.terminal)


class Elevator:
    """Convenience wrapper owning one building state and its time list."""

    def __init__(self, table: Sequence[TrafficRecord],
                 config: BuildingConfig = BuildingConfig()):
        self.table = list(table)
        self.config = config
        self.state, self.timelist = init_state(self.table, config)

    @property
    def num_events(self) -> int:
        return len(self.table)

    def legal_actions(self) -> set[Action]:
        return legal_actions(self.state, self.timelist)

    def step(self, action) -> StepOutcome:
        return apply_action(self.state, self.timelist, action)

    def observe(self, extended: bool = False) -> Observation:
        return observe(self.state, extended)

    @property
    def terminal(self) -> bool:
        return is_terminal(self.state, self.timelist)


# --- Markov probe -------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    obs: Observation
    action: Action
    next_obs: Observation
    arrivals: tuple = ()  # HallCallArrival events drained during the step


@dataclass
class ViolationGroup:
    obs: Observation
    action: Action
    steps: list  # indices into the trace
    successors: list  # distinct next observations, first-seen order
    arrivals: list  # (step index, event) for every arrival inside the group's steps


def markov_probe(trace: Sequence[TraceStep]) -> list[ViolationGroup]:
    """Find (observation, action) pairs that led to more than one successor.

    In a Markov environment a deterministic simulator would map each pair to
    a single successor; hall calls arriving mid-step break that.
    """
    groups: dict = defaultdict(list)
    order = []
    for i, step in enumerate(trace):
        key = (step.obs, step.action)
        if key not in groups:
            order.append(key)
        groups[key].append(i)

    report = []
    for key in order:
        idx = groups[key]
        succ = []
        for i in idx:
            if trace[i].next_obs not in succ:
                succ.append(trace[i].next_obs)
        if len(succ) > 1:
            arrivals = [(i, ev) for i in idx for ev in trace[i].arrivals]
            report.append(ViolationGroup(key[0], key[1], idx, succ, arrivals))
    return report

"""Synthetic three-peak workday traffic and its CSV persistence.

Each worker produces four hall calls over the day.  They ride up from the
lobby in the morning, go down and back for lunch, then leave in the evening.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

import numpy as np

DAY_S = 86400.0
CSV_HEADER = ("time", "start_floor", "destination_floor", "weight")
MAX_REJECTIONS = 1_000_000


class TrafficFormatError(ValueError):
    """A traffic CSV could not be parsed."""

    def __init__(self, line: int, column: str, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class TrafficRecord:
    time_s: float
    start_floor: int
    dest_floor: int
    weight_kg: float

    @property
    def going_up(self) -> bool:
        return self.dest_floor > self.start_floor


TrafficTable = list  # list[TrafficRecord], sorted by time_s


@dataclass(frozen=True)
class PersonSpec:
    id: int
    weight_kg: float
    arrival_s: float
    departure_s: float
    work_floor: int
    lunch: Optional[tuple[float, float]] = None

    def trips(self) -> list[tuple[float, int, int]]:
        out = [(self.arrival_s, 1, self.work_floor)]
        if self.lunch is not None:
            down_s, return_s = self.lunch
            out.append((down_s, self.work_floor, 1))
            out.append((return_s, 1, self.work_floor))
        out.append((self.departure_s, self.work_floor, 1))
        return out


@dataclass(frozen=True)
class WeightModel:
    """Two-component truncated normal mixture, one component per sex."""

    mean_a: float = 70.0
    std_a: float = 10.0
    mean_b: float = 85.0
    std_b: float = 12.0
    mix_a: float = 0.5
    low: float = 40.0
    high: float = 150.0


@dataclass(frozen=True)
class TrafficProfile:
    floor_count: int = 8
    workers: int = 200
    arrival_mean_s: float = 32400.0
    departure_mean_s: float = 61200.0
    peak_std_s: float = 1800.0
    lunch_mean_s: float = 43200.0
    lunch_duration_s: float = 1800.0
    seed: int = 0
    distribution: str = "normal"  # or "poisson"
    poisson_tick_s: float = 60.0
    weights: WeightModel = field(default_factory=WeightModel)

    def validate(self) -> None:
        if self.floor_count < 2:
            raise ValueError(f"floor_count must be >= 2, got {self.floor_count}")
        if self.workers < 0:
            raise ValueError(f"workers must be >= 0, got {self.workers}")
        if not self.peak_std_s > 0:
            raise ValueError(f"peak_std_s must be > 0, got {self.peak_std_s}")
        if self.lunch_duration_s < 0:
            raise ValueError("lunch_duration_s must be >= 0")
        if self.distribution not in ("normal", "poisson"):
            raise ValueError(f"unknown distribution {self.distribution!r}")


def sample_truncated_normal(mean: float, std: float, low: float, high: float,
                            rng: np.random.Generator) -> float:
    """Draw from normal(mean, std) conditioned on [low, high] by rejection."""
    if not low < high:
        raise ValueError(f"empty interval [{low}, {high}]")
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    for _ in range(MAX_REJECTIONS):
        x = float(rng.normal(mean, std))
        if low <= x <= high:
            return x
    raise RuntimeError(
        f"rejection sampling exhausted: N({mean}, {std}) on [{low}, {high}]")


def sample_truncated_poisson(mean: float, std: float, low: float, high: float,
                             rng: np.random.Generator, tick_s: float = 60.0) -> float:
    """Centred Poisson count in ticks of ``tick_s``, matched to (mean, std), truncated.

    Selected with ``distribution = poisson`` as an alternative to the
    truncated normal.
    """
    if not low < high:
        raise ValueError(f"empty interval [{low}, {high}]")
    lam = (std / tick_s) ** 2
    for _ in range(MAX_REJECTIONS):
        x = mean + (float(rng.poisson(lam)) - lam) * tick_s
        if low <= x <= high:
            return x
    raise RuntimeError(
        f"rejection sampling exhausted: Poisson({lam}) around {mean} on [{low}, {high}]")


def _sample_weight(model: WeightModel, rng: np.random.Generator) -> float:
    if rng.random() < model.mix_a:
        return sample_truncated_normal(model.mean_a, model.std_a, model.low, model.high, rng)
    return sample_truncated_normal(model.mean_b, model.std_b, model.low, model.high, rng)


def generate_people(profile: TrafficProfile) -> list[PersonSpec]:
    profile.validate()
    rng = np.random.default_rng(profile.seed)
    if profile.distribution == "normal":
        def draw(mean, low, high):
            return sample_truncated_normal(mean, profile.peak_std_s, low, high, rng)
    else:
        def draw(mean, low, high):
            return sample_truncated_poisson(mean, profile.peak_std_s, low, high, rng,
                                            profile.poisson_tick_s)

    # leave room for lunch and the trip home after the latest arrival
    latest = DAY_S - 2 * profile.lunch_duration_s - 2.0
    people = []
    for pid in range(profile.workers):
        weight = _sample_weight(profile.weights, rng)
        floor = int(rng.integers(2, profile.floor_count + 1))
        arrival = draw(profile.arrival_mean_s, 0.0, latest)
        down = draw(profile.lunch_mean_s, math.nextafter(arrival, DAY_S),
                    DAY_S - profile.lunch_duration_s - 1.0)
        back = down + profile.lunch_duration_s
        if back <= down:
            back = math.nextafter(down, DAY_S)
        departure = draw(profile.departure_mean_s, math.nextafter(back, DAY_S),
                         math.nextafter(DAY_S, 0.0))
        people.append(PersonSpec(pid, weight, arrival, departure, floor, (down, back)))
    return people


def generate_day(profile: TrafficProfile) -> list[TrafficRecord]:
    """One day of hall calls, sorted by time with ties broken by record order."""
    keyed = []
    for person in generate_people(profile):
        for k, (t, start, dest) in enumerate(person.trips()):
            keyed.append(((t, 4 * person.id + k),
                          TrafficRecord(t, start, dest, person.weight_kg)))
    keyed.sort(key=lambda pair: pair[0])
    return [rec for _, rec in keyed]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(table: Iterable[TrafficRecord], sink: IO[str],
              comment: Optional[str] = None) -> None:
    """Write records; an optional ``comment`` becomes a leading ``#`` line."""
    if comment is not None:
        sink.write(f"# {comment}\n")
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in table:
        w.writerow((_fmt(rec.time_s), rec.start_floor, rec.dest_floor, _fmt(rec.weight_kg)))


def dumps_csv(table: Iterable[TrafficRecord], comment: Optional[str] = None) -> str:
    buf = io.StringIO()
    write_csv(table, buf, comment)
    return buf.getvalue()


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise TrafficFormatError(line, column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise TrafficFormatError(line, column, f"non-finite value: {text!r}")
    return value


def _parse_floor(text: str, line: int, column: str, floor_count: Optional[int]) -> int:
    try:
        value = int(text)
    except ValueError:
        raise TrafficFormatError(line, column, f"not an integer floor: {text!r}") from None
    if value < 1 or (floor_count is not None and value > floor_count):
        hi = floor_count if floor_count is not None else "inf"
        raise TrafficFormatError(line, column, f"floor {value} outside [1, {hi}]")
    return value


def read_csv(source: IO[str], floor_count: Optional[int] = None) -> list[TrafficRecord]:
    records = []
    header_seen = False
    for lineno, raw in enumerate(source, start=1):
        text = raw.rstrip("\r\n")
        if not text.strip() or text.startswith("#"):
            continue
        row = next(csv.reader([text]))
        if not header_seen:
            if tuple(c.strip() for c in row) != CSV_HEADER:
                raise TrafficFormatError(lineno, "header", f"expected {','.join(CSV_HEADER)}")
            header_seen = True
            continue
        if len(row) != 4:
            raise TrafficFormatError(lineno, "*", f"expected 4 fields, got {len(row)}")
        t = _parse_float(row[0], lineno, "time")
        if t < 0:
            raise TrafficFormatError(lineno, "time", f"negative time {t}")
        start = _parse_floor(row[1], lineno, "start_floor", floor_count)
        dest = _parse_floor(row[2], lineno, "destination_floor", floor_count)
        if start == dest:
            raise TrafficFormatError(lineno, "destination_floor",
                                     f"start and destination are both floor {start}")
        weight = _parse_float(row[3], lineno, "weight")
        if weight <= 0:
            raise TrafficFormatError(lineno, "weight", f"weight must be positive, got {weight}")
        records.append(TrafficRecord(t, start, dest, weight))
    if not header_seen:
        raise TrafficFormatError(0, "header", "missing header line")
    return records


def loads_csv(text: str, floor_count: Optional[int] = None) -> list[TrafficRecord]:
    return read_csv(io.StringIO(text), floor_count)

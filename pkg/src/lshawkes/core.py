"""Domain types shared across the package: event sequences, parameter
vectors with box bounds, and the seeded random-stream contract."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDimension, InconsistentBounds, NonMonotoneTimes, OutOfHorizon


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EventSequence:
    """A realisation of a K-variate point process observed on [0, horizon].

    Times are absolute; normalised time t / horizon is computed on demand.
    Construction does not validate, call :func:`validate_events` for that.
    """

    horizon: float
    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "components", tuple(_frozen(c) for c in self.components))

    @property
    def dimension(self) -> int:
        return len(self.components)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.components], dtype=np.int64)

    @property
    def n_events(self) -> int:
        return int(sum(len(c) for c in self.components))

    def merged(self) -> tuple[np.ndarray, np.ndarray]:
        """All events in time order as ``(times, component_labels)``.

        Ties across components are ordered by component index.
        """
        if self.n_events == 0:
            return np.empty(0), np.empty(0, dtype=np.int64)
        times = np.concatenate(self.components)
        comps = np.concatenate([np.full(len(c), k, dtype=np.int64)
                                for k, c in enumerate(self.components)])
        order = np.lexsort((comps, times))
        return times[order], comps[order]

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (self.horizon == other.horizon
                and self.dimension == other.dimension
                and all(np.array_equal(a, b) for a, b in zip(self.components, other.components)))

    __hash__ = None


def validate_events(events: EventSequence) -> None:
    """Raise the first violated invariant of ``events``; return None if valid."""
    if events.dimension == 0:
        raise EmptyDimension()
    T = events.horizon
    for k, times in enumerate(events.components):
        bad = np.flatnonzero((times < 0) | (times > T) | ~np.isfinite(times))
        mono = np.flatnonzero(np.diff(times) <= 0) + 1
        first_bad = bad[0] if bad.size else None
        first_mono = mono[0] if mono.size else None
        if first_bad is not None and (first_mono is None or first_bad <= first_mono):
            raise OutOfHorizon(k, int(first_bad))
        if first_mono is not None:
            raise NonMonotoneTimes(k, int(first_mono))


@dataclass(frozen=True, eq=False)
class ParamVector:
    """theta = (eta, varpi) together with coordinate-wise box bounds.

    ``lower`` and ``upper`` have length ``len(eta) + len(varpi)``.
    """

    eta: np.ndarray
    varpi: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        eta, varpi = _frozen(self.eta), _frozen(self.varpi)
        n = eta.size + varpi.size
        lower = np.full(n, -np.inf) if self.lower is None else _frozen(self.lower)
        upper = np.full(n, np.inf) if self.upper is None else _frozen(self.upper)
        if lower.size != n or upper.size != n:
            raise ValueError("bounds must have one entry per coordinate")
        for name, val in (("eta", eta), ("varpi", varpi), ("lower", _frozen(lower)), ("upper", _frozen(upper))):
            object.__setattr__(self, name, val)

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.eta, self.varpi])

    @property
    def n_eta(self) -> int:
        return self.eta.size

    @property
    def degree(self) -> int:
        return self.varpi.size - 1

    def with_values(self, values) -> "ParamVector":
        values = np.asarray(values, dtype=np.float64)
        p = self.n_eta
        return ParamVector(values[:p], values[p:], self.lower, self.upper)

    def with_bounds(self, lower, upper) -> "ParamVector":
        return ParamVector(self.eta, self.varpi, lower, upper)

    def is_feasible(self) -> bool:
        v = self.values
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def to_dict(self) -> dict:
        return {"eta": self.eta.tolist(), "varpi": self.varpi.tolist(),
                "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def clamp_to_bounds(theta: ParamVector) -> ParamVector:
    """Project every coordinate onto its [lower, upper] interval."""
    if np.any(theta.lower > theta.upper):
        i = int(np.flatnonzero(theta.lower > theta.upper)[0])
        raise InconsistentBounds(f"lower > upper at coordinate {i}")
    return theta.with_values(np.minimum(np.maximum(theta.values, theta.lower), theta.upper))


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream)``.

    Every call to :meth:`generator` restarts the stream from its origin, so
    replicates can run in any order and still draw identical numbers.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) % 2**64, spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


# --- serialisation ---------------------------------------------------------

def write_events_csv(events: EventSequence, path, seed: int | None = None) -> None:
    """Write ``component,time`` rows plus a ``.meta.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "time"])
        for k, times in enumerate(events.components):
            for t in times:
                w.writerow([k, repr(float(t))])
    meta = {"horizon": events.horizon, "dimension": events.dimension, "seed": seed}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2))


def read_events_csv(path) -> EventSequence:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text())
    K = int(meta["dimension"])
    buckets: list[list[float]] = [[] for _ in range(K)]
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            buckets[int(row["component"])].append(float(row["time"]))
    return EventSequence(float(meta["horizon"]), buckets)

"""Limit-order-book event files and the four-dimensional order-flow model.

Components, in order: limit ask, limit bid, market ask, market bid.
Cancellations are read and counted but not modelled.

The interaction matrix has the sided pattern

    [[a, b, c, 0],
     [b, a, 0, c],
     [d, 0, e, 0],
     [0, d, 0, e]]

with one decay shared by every pair, one Bernstein baseline shared by the
four components, and the first reproduction-rate weight pinned to 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import basis
from .core import EventSequence, ParamVector, RngStream
from .errors import DomainError, NegativeTimestamp, ParseError, UnknownCode
from .estimate import FitResult
from .intensity import ModelSpec
from .kernels import spectral_radius
from .simulate import SimConfig, thinning_simulate

COMPONENTS = ("limit_ask", "limit_bid", "market_ask", "market_bid")
SIDES = {"ask": 0, "a": 0, "bid": 1, "b": 1}
KINDS = {"limit": 0, "l": 0, "market": 1, "m": 1, "cancel": 2, "c": 2}
TIE_JITTER = 1e-9
LETTERS = "abcde"
PATTERN = (("a", "b", "c", None),
           ("b", "a", None, "c"),
           ("d", None, "e", None),
           (None, "d", None, "e"))
LOB_DEGREE = 4


@dataclass
class ParseReport:
    rows: int = 0
    cancels: int = 0
    jittered: int = 0
    truncated: int = 0
    counts: list = field(default_factory=lambda: [0, 0, 0, 0])


def parse_lob_session(stream, session_length: float | None = None,
                      virtual_close: float | None = None):
    """Parse ``timestamp,side,kind`` rows into (EventSequence, ParseReport).

    Events after ``virtual_close`` are dropped. The horizon is the virtual
    close when given, else the session length, else the last timestamp
    rounded up to a whole second. Equal timestamps within one component
    are separated by adding ``i * 1e-9`` to the i-th repeat.
    """
    if isinstance(stream, (str, Path)):
        with open(stream, newline="") as fh:
            return parse_lob_session(fh, session_length, virtual_close)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty file") from None
    if [h.strip().lower() for h in header] != ["timestamp", "side", "kind"]:
        raise ParseError(1, "header must be timestamp,side,kind")
    report = ParseReport()
    buckets = [[] for _ in COMPONENTS]
    last = -math.inf
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(line, f"expected 3 fields, got {len(row)}")
        try:
            ts = float(row[0])
        except ValueError:
            raise ParseError(line, f"bad timestamp {row[0]!r}") from None
        if not math.isfinite(ts):
            raise ParseError(line, "non-finite timestamp")
        if ts < 0:
            raise NegativeTimestamp(line)
        if ts < last:
            raise ParseError(line, "timestamps decrease")
        last = ts
        side = SIDES.get(row[1].strip().lower())
        if side is None:
            raise UnknownCode(line, row[1])
        kind = KINDS.get(row[2].strip().lower())
        if kind is None:
            raise UnknownCode(line, row[2])
        report.rows += 1
        if kind == 2:
            report.cancels += 1
            continue
        if virtual_close is not None and ts > virtual_close:
            report.truncated += 1
            continue
        buckets[2 * kind + side].append(ts)
    comps = []
    for k, times in enumerate(buckets):
        t = np.asarray(times, dtype=np.float64)
        if t.size > 1:
            # i-th repeat of a value gets i * jitter
            start = np.concatenate([[True], t[1:] != t[:-1]])
            run_id = np.cumsum(start) - 1
            first = np.flatnonzero(start)
            rank = np.arange(t.size) - first[run_id]
            report.jittered += int(np.count_nonzero(rank))
            t = t + rank * TIE_JITTER
        comps.append(t)
        report.counts[k] = int(t.size)
    top = max((float(c[-1]) for c in comps if c.size), default=0.0)
    if virtual_close is not None:
        horizon = float(virtual_close)
    elif session_length is not None:
        horizon = float(session_length)
    else:
        horizon = float(max(math.ceil(top), 1.0))
    if top > horizon:
        raise ParseError(report.rows + 1, f"event at {top} beyond session length {horizon}")
    return EventSequence(horizon, comps), report


def parse_lob_csv(stream, session_length: float | None = None,
                  virtual_close: float | None = None) -> EventSequence:
    return parse_lob_session(stream, session_length, virtual_close)[0]


@dataclass(frozen=True, eq=False)
class OrderFlowSpec:
    spec: ModelSpec
    session_length: float
    beta_init: float

    def theta(self, letters, beta, mu_coefs, varpi) -> ParamVector:
        """Parameter vector from the five matrix letters, the decay, the
        baseline coefficients and the reproduction-rate weights."""
        eta = np.concatenate([np.asarray(mu_coefs, float), np.asarray(letters, float), [beta]])
        w = np.asarray(varpi, dtype=np.float64)
        if w[0] != 1.0:
            raise DomainError("the first reproduction-rate weight is pinned to 1")
        return ParamVector(eta, w)

    def letters(self, theta: ParamVector) -> dict:
        m1 = self.spec.baseline_degree + 1
        return dict(zip(LETTERS, theta.eta[m1:m1 + 5]))


def build_orderflow_model(session_length: float, beta_init: float = 1.0) -> OrderFlowSpec:
    if not session_length > 0:
        raise DomainError("session length must be positive")
    m = LOB_DEGREE
    names = [f"mu{j}" for j in range(m + 1)] + [f"alpha_{c}" for c in LETTERS] + ["beta"]
    bmap = np.tile(np.arange(m + 1), (4, 1))
    kmap = np.full((4, 4, 2), -1)
    kfix = np.zeros((4, 4, 2))
    kfix[..., 1] = beta_init
    for k in range(4):
        for l in range(4):
            letter = PATTERN[k][l]
            if letter is not None:
                kmap[k, l, 0] = m + 1 + LETTERS.index(letter)
                kmap[k, l, 1] = len(names) - 1
    spec = ModelSpec(4, "exponential", LOB_DEGREE, tuple(names), bmap, np.zeros((4, m + 1)),
                     kmap, kfix, baseline_degree=m, pin_first_weight=True)
    return OrderFlowSpec(spec, float(session_length), float(beta_init))


def endogeneity_profile(fit: FitResult, spec, grid) -> list:
    """``[(x, g_hat(x) * rho(alpha_hat))]`` over the grid."""
    model = spec.spec if isinstance(spec, OrderFlowSpec) else spec
    theta = fit.theta_hat
    rho = spectral_radius(model.kernel_family(theta.eta).masses())
    x = np.asarray(grid, dtype=np.float64)
    g = np.atleast_1d(basis.g_eval(theta.varpi, x))
    return [(float(a), float(max(b, 0.0) * rho)) for a, b in zip(np.atleast_1d(x), g)]


# --- synthetic sessions -------------------------------------------------------

def synthetic_session(ofs: OrderFlowSpec, theta: ParamVector, rng: RngStream,
                      cancel_rate: float = 0.0) -> tuple[EventSequence, str]:
    """Simulate a session and render it as LOB CSV text.

    Cancellations arrive as an independent Poisson stream of the given rate
    per side and are interleaved into the file.
    """
    events = thinning_simulate(SimConfig(ofs.spec, theta, ofs.session_length, rng))
    gen = rng.child(rng.stream + 1_000_003).generator()
    rows = []
    for k, times in enumerate(events.components):
        side = "ask" if k % 2 == 0 else "bid"
        kind = "limit" if k < 2 else "market"
        rows += [(t, side, kind) for t in times]
    if cancel_rate > 0:
        for side in ("ask", "bid"):
            n = gen.poisson(cancel_rate * ofs.session_length)
            rows += [(t, side, "cancel") for t in np.sort(gen.uniform(0, ofs.session_length, n))]
    rows.sort(key=lambda r: r[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "side", "kind"])
    for t, side, kind in rows:
        w.writerow([repr(float(t)), side, kind])
    return events, buf.getvalue()


def read_manifest(path) -> list:
    """Rows ``(session_csv_path, virtual_close or None)``; relative paths resolve against the manifest."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return out
        if "path" not in reader.fieldnames:
            raise ParseError(1, "manifest needs a 'path' column")
        for row in reader:
            p = Path(row["path"])
            if not p.is_absolute():
                p = path.parent / p
            vc = (row.get("virtual_close") or "").strip()
            out.append((p, float(vc) if vc else None))
    return out


def write_manifest(path, entries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "virtual_close"])
        for p, vc in entries:
            w.writerow([str(p), "" if vc is None else repr(float(vc))])

"""Dynamic graph streams: the text format, strict-turnstile checks, generators.

Stream file grammar (see docs/stream-format.md)::

    # comment lines are ignored, as are blank lines
    n <count> [directed]
    + <u> <v>
    - <u> <v>

The header must be the first non-comment line so the edge-id domain is fixed
before the first event.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .graph import Edge, Graph

logger = logging.getLogger(__name__)


class StreamFormatError(ValueError):
    """A stream file could not be parsed.

    ``line_number`` is 1-based; 0 means the error is not tied to a line
    (e.g. an empty file with no header).
    """

    def __init__(self, message: str, *, line_number: int = 0, line: str = ""):
        prefix = f"line {line_number}: " if line_number else ""
        super().__init__(prefix + message)
        self.line_number = line_number
        self.line = line


class Op(str, Enum):
    INSERT = "+"
    DELETE = "-"


@dataclass(frozen=True)
class StreamEvent:
    """Insertion or deletion of one edge."""

    op: Op
    u: int
    v: int

    def __post_init__(self) -> None:
        if self.u == self.v:
            raise ValueError(f"self-loop on vertex {self.u} is not allowed")

    @property
    def delta(self) -> int:
        return 1 if self.op is Op.INSERT else -1

    @classmethod
    def insert(cls, u: int, v: int, directed: bool = False) -> "StreamEvent":
        if not directed and u > v:
            u, v = v, u
        return cls(Op.INSERT, u, v)

    @classmethod
    def delete(cls, u: int, v: int, directed: bool = False) -> "StreamEvent":
        if not directed and u > v:
            u, v = v, u
        return cls(Op.DELETE, u, v)

    def edge(self, directed: bool = False) -> Edge:
        return Edge.of(self.u, self.v, directed)


@dataclass(frozen=True)
class ParsedStream:
    """A parsed stream: the declared vertex universe and its events."""

    n: int
    directed: bool
    events: tuple[StreamEvent, ...]


def parse_stream(lines: Iterable[str]) -> ParsedStream:
    """Parse the text stream format, validating every event."""
    n: Optional[int] = None
    directed = False
    events: list[StreamEvent] = []
    for number, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if n is None:
            if parts[0] != "n" or len(parts) not in (2, 3):
                raise StreamFormatError(
                    "missing header: expected 'n <count> [directed]'",
                    line_number=number,
                    line=line,
                )
            if len(parts) == 3 and parts[2] != "directed":
                raise StreamFormatError(
                    f"unknown header flag '{parts[2]}'", line_number=number, line=line
                )
            try:
                n = int(parts[1])
            except ValueError:
                raise StreamFormatError(
                    f"vertex count '{parts[1]}' is not an integer",
                    line_number=number,
                    line=line,
                ) from None
            if n < 1:
                raise StreamFormatError(
                    f"vertex count must be positive, got {n}", line_number=number, line=line
                )
            directed = len(parts) == 3
            continue
        if len(parts) != 3 or parts[0] not in ("+", "-"):
            raise StreamFormatError(
                "expected '+ u v' or '- u v'", line_number=number, line=line
            )
        try:
            u, v = int(parts[1]), int(parts[2])
        except ValueError:
            raise StreamFormatError(
                "vertex ids must be decimal integers", line_number=number, line=line
            ) from None
        if u == v:
            raise StreamFormatError(f"self-loop on vertex {u}", line_number=number, line=line)
        if not (0 <= u < n and 0 <= v < n):
            raise StreamFormatError(
                f"vertex id out of range [0, {n})", line_number=number, line=line
            )
        if parts[0] == "+":
            events.append(StreamEvent.insert(u, v, directed))
        else:
            events.append(StreamEvent.delete(u, v, directed))
    if n is None:
        raise StreamFormatError("missing header: expected 'n <count> [directed]'")
    logger.debug("Parsed %d events over n=%d (directed=%s)", len(events), n, directed)
    return ParsedStream(n, directed, tuple(events))


def format_stream(n: int, directed: bool, events: Iterable[StreamEvent]) -> str:
    """Serialise events in the text format accepted by :func:`parse_stream`."""
    header = f"n {n} directed" if directed else f"n {n}"
    lines = [header]
    lines.extend(f"{ev.op.value} {ev.u} {ev.v}" for ev in events)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TurnstileViolation:
    """The first event that breaks the strict-turnstile discipline."""

    index: int
    event: StreamEvent
    reason: str


def validate_strict_turnstile(
    events: Iterable[StreamEvent], directed: bool = False
) -> Optional[TurnstileViolation]:
    """Replay the live edge set; return the first violation or None."""
    live: set[Edge] = set()
    for index, ev in enumerate(events):
        e = ev.edge(directed)
        if ev.op is Op.INSERT:
            if e in live:
                return TurnstileViolation(index, ev, "duplicate insert of a live edge")
            live.add(e)
        else:
            if e not in live:
                return TurnstileViolation(index, ev, "delete of an absent edge")
            live.remove(e)
    return None


class StrictTurnstileError(ValueError):
    """A stream deletes an absent edge or re-inserts a live one."""

    def __init__(self, violation: TurnstileViolation):
        ev = violation.event
        super().__init__(
            f"event {violation.index} ({ev.op.value} {ev.u} {ev.v}): {violation.reason}"
        )
        self.violation = violation


def require_strict_turnstile(events: Sequence[StreamEvent], directed: bool = False) -> None:
    violation = validate_strict_turnstile(events, directed)
    if violation is not None:
        raise StrictTurnstileError(violation)


def replay(n: int, directed: bool, events: Iterable[StreamEvent]) -> Graph:
    """The graph left after applying ``events`` to an empty graph."""
    live: set[Edge] = set()
    for ev in events:
        e = ev.edge(directed)
        if ev.op is Op.INSERT:
            live.add(e)
        else:
            live.discard(e)
    return Graph(n, frozenset(live), directed)


GENERATOR_KINDS = ("er", "planted_dense", "churn")


@dataclass(frozen=True)
class StreamSpec:
    """Parameters of a synthetic stream.

    ``prob`` is the Erdős–Rényi edge probability, ``clique`` the planted
    clique size, ``events`` the churn length, ``live`` the churn target live
    edge count. Below the target a churn step deletes with probability
    ``churn * live_now / live``, so the live count climbs towards the target
    without exceeding it.
    """

    kind: str
    n: int
    prob: float = 0.0
    clique: int = 0
    events: int = 0
    live: int = 0
    churn: float = 0.5
    directed: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator '{self.kind}' (expected {GENERATOR_KINDS})")
        if self.n < 2:
            raise ValueError(f"generator needs at least 2 vertices, got n={self.n}")
        if not 0 <= self.prob <= 1:
            raise ValueError(f"edge probability must be in [0, 1], got {self.prob}")
        if self.clique < 0 or self.clique > self.n:
            raise ValueError(f"clique of size {self.clique} does not fit in n={self.n}")
        if self.events < 0:
            raise ValueError(f"event count must be non-negative, got {self.events}")
        if not 0 <= self.churn <= 1:
            raise ValueError(f"churn rate must be in [0, 1], got {self.churn}")
        max_edges = self.n * (self.n - 1) // (1 if self.directed else 2)
        if self.live > max_edges:
            raise ValueError(f"target live count {self.live} exceeds {max_edges} possible edges")


@dataclass(frozen=True)
class GeneratedStream:
    n: int
    directed: bool
    events: tuple[StreamEvent, ...]
    graph: Graph = field(compare=False)
    planted: tuple[int, ...] = ()


_SPEC_KEYS = {"p": "prob", "prob": "prob", "n": "n", "clique": "clique",
              "events": "events", "live": "live", "churn": "churn",
              "directed": "directed", "seed": "seed"}

_KIND_ALIASES = {"er": "er", "planted": "planted_dense", "planted_dense": "planted_dense",
                 "churn": "churn"}


def parse_gen_spec(text: str, seed: int = 0) -> StreamSpec:
    """Parse ``kind:key=value,...`` (e.g. ``planted:n=500,p=0.05,clique=30``)."""
    kind, _, rest = text.partition(":")
    if kind not in _KIND_ALIASES:
        raise ValueError(f"unknown generator '{kind}' in '{text}'")
    values: dict = {"kind": _KIND_ALIASES[kind], "seed": seed}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep or key not in _SPEC_KEYS:
            raise ValueError(f"bad generator parameter '{item}' in '{text}'")
        name = _SPEC_KEYS[key]
        if name in ("prob", "churn"):
            values[name] = float(value)
        elif name == "directed":
            values[name] = value.lower() in ("1", "true", "yes")
        else:
            values[name] = int(value)
    if "n" not in values:
        raise ValueError(f"generator spec '{text}' needs n=")
    return StreamSpec(**values)


def _random_pairs(rng: np.random.Generator, n: int, prob: float, directed: bool) -> list[tuple[int, int]]:
    if prob <= 0:
        return []
    pairs: list[tuple[int, int]] = []
    for u in range(n):
        targets = np.arange(n) if directed else np.arange(u + 1, n)
        if directed:
            targets = targets[targets != u]
        if targets.size == 0:
            continue
        keep = rng.random(targets.size) < prob
        pairs.extend((u, int(v)) for v in targets[keep])
    return pairs


def _inserts(pairs: Sequence[tuple[int, int]], directed: bool) -> list[StreamEvent]:
    return [StreamEvent.insert(u, v, directed) for u, v in pairs]


def _generate_churn(spec: StreamSpec, rng: np.random.Generator) -> list[StreamEvent]:
    live: list[Edge] = []
    position: dict[Edge, int] = {}
    events: list[StreamEvent] = []

    def remove_at(i: int) -> Edge:
        e = live[i]
        last = live.pop()
        if i < len(live):
            live[i] = last
            position[last] = i
        del position[e]
        return e

    target = spec.live
    full = spec.n * (spec.n - 1) // (1 if spec.directed else 2)
    while len(events) < spec.events:
        if not live:
            deleting = False
        elif len(live) >= target or len(live) >= full:
            deleting = True
        else:
            deleting = rng.random() < spec.churn * len(live) / target
        if deleting:
            e = remove_at(int(rng.integers(len(live))))
            events.append(StreamEvent.delete(e.u, e.v, spec.directed))
            continue
        while True:
            u, v = (int(x) for x in rng.integers(spec.n, size=2))
            if u == v:
                continue
            e = Edge.of(u, v, spec.directed)
            if e not in position:
                break
        position[e] = len(live)
        live.append(e)
        events.append(StreamEvent.insert(e.u, e.v, spec.directed))
    return events


def generate_stream(spec: StreamSpec) -> GeneratedStream:
    """Generate a strict-turnstile stream; deterministic given ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed & 0xFFFFFFFFFFFFFFFF)
    members: list[int] = []
    if spec.kind == "churn":
        events = _generate_churn(spec, rng)
    else:
        pairs = _random_pairs(rng, spec.n, spec.prob, spec.directed)
        if spec.kind == "planted_dense" and spec.clique >= 2:
            members = sorted(int(x) for x in rng.choice(spec.n, size=spec.clique, replace=False))
            seen = {Edge.of(u, v, spec.directed) for u, v in pairs}
            for i, u in enumerate(members):
                others = members if spec.directed else members[i + 1:]
                for v in others:
                    if u != v and Edge.of(u, v, spec.directed) not in seen:
                        pairs.append((u, v))
            logger.debug("Planted a %d-clique on %s", spec.clique, members)
        order = rng.permutation(len(pairs))
        events = _inserts([pairs[i] for i in order], spec.directed)
    graph = replay(spec.n, spec.directed, events)
    logger.info(
        "Generated %s stream: n=%d, %d events, %d live edges",
        spec.kind,
        spec.n,
        len(events),
        graph.m,
    )
    return GeneratedStream(spec.n, spec.directed, tuple(events), graph, tuple(members))

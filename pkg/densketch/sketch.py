"""Linear sketches over dynamic edge streams.

``SparseRecovery`` is an invertible Bloom table: each row hashes an id to one
bucket holding (count, id sum, fingerprint sum). ``LeveledSampler`` keeps one
such table per hash level; level ``i`` holds the live edges whose hash is below
``R / 2**i``, so the deepest level with at least C live edges contains exactly
the C smallest-hash edges.
"""

import logging
import math
import struct
from collections.abc import Iterable
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import mmh3
import numpy as np

from .config import SketchConfig
from .graph import Edge, Graph, decode_edge, encode_edge
from .hashing import (
    MERSENNE_61,
    KWiseHash,
    derive_seed,
    eval_batch,
    eval_hash,
    hash_degree,
    make_hash,
)
from .stream import StreamEvent

logger = logging.getLogger(__name__)

_U64 = 1 << 64


class RecoveryFailure(RuntimeError):
    """A sparse-recovery table could not be decoded.

    ``reason`` is ``"overload"`` when the support exceeds capacity and
    ``"stalled"`` when peeling stopped before the table emptied.
    """

    def __init__(self, reason: str, support: int):
        super().__init__(f"sparse recovery failed ({reason}, support={support})")
        self.reason = reason
        self.support = support


class SamplerFailure(RuntimeError):
    """No eligible sampler level decoded.

    ``attempts`` lists ``(level, reason)`` for every level tried.
    """

    def __init__(self, attempts: list[tuple[int, str]], m: int):
        tried = ", ".join(f"{lvl}:{why}" for lvl, why in attempts) or "none eligible"
        super().__init__(f"sampler query failed with m={m} (levels tried: {tried})")
        self.attempts = attempts
        self.m = m


class SparseRecovery:
    """Exact s-sparse recovery over ids in ``[0, prime)``."""

    def __init__(self, capacity: int, rows: int, buckets: int, seed: int, prime: int = MERSENNE_61):
        if capacity < 1 or rows < 1 or buckets < 1:
            raise ValueError(
                f"capacity, rows and buckets must be positive (got {capacity}, {rows}, {buckets})"
            )
        self.capacity = capacity
        self.rows = rows
        self.buckets = buckets
        self.seed = seed
        self.prime = prime
        rng = np.random.default_rng(derive_seed(seed, "recovery/rows"))
        a = rng.integers(1, prime, size=rows, dtype=np.int64)
        b = rng.integers(0, prime, size=rows, dtype=np.int64)
        self._row_hashes = tuple((int(x), int(y)) for x, y in zip(a, b))
        self._fp_seed = derive_seed(seed, "recovery/fingerprint") & 0xFFFFFFFF
        # Allocated on first update; None is the all-zero state.
        self._counts: Optional[np.ndarray] = None
        self._ids: Optional[np.ndarray] = None
        self._fps: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.rows * self.buckets

    @property
    def allocated(self) -> bool:
        return self._counts is not None

    def _allocate(self) -> None:
        self._counts = np.zeros(self.size, dtype=np.int64)
        self._ids = np.zeros(self.size, dtype=np.uint64)
        self._fps = np.zeros(self.size, dtype=np.uint64)

    def positions(self, x: int) -> list[int]:
        """Flat cell index of ``x`` in every row."""
        p, b = self.prime, self.buckets
        return [r * b + (a * x + c) % p % b for r, (a, c) in enumerate(self._row_hashes)]

    def fingerprint(self, x: int) -> int:
        return mmh3.hash128(x.to_bytes(16, "little"), self._fp_seed) % self.prime

    def update(self, x: int, delta: int) -> None:
        """Add ``delta`` copies of ``x``: every row's bucket gains (δ, δ·x, δ·fp(x))."""
        if delta not in (1, -1):
            raise ValueError(f"delta must be +1 or -1, got {delta}")
        if not 0 <= x < self.prime:
            raise ValueError(f"id {x} outside [0, {self.prime})")
        if self._counts is None:
            self._allocate()
        pos = np.array(self.positions(x), dtype=np.intp)
        fp = self.fingerprint(x)
        self._counts[pos] += delta
        if delta > 0:
            self._ids[pos] += np.uint64(x)
            self._fps[pos] = (self._fps[pos] + np.uint64(fp)) % np.uint64(self.prime)
        else:
            self._ids[pos] -= np.uint64(x)
            self._fps[pos] = (self._fps[pos] + np.uint64(self.prime - fp)) % np.uint64(self.prime)

    @property
    def support(self) -> int:
        """Live id count; row 0 partitions the ids so its counts sum to the support."""
        if self._counts is None:
            return 0
        return int(self._counts[: self.buckets].sum())

    def is_zero(self) -> bool:
        if self._counts is None:
            return True
        return not (self._counts.any() or self._ids.any() or self._fps.any())

    def decode(self) -> set[int]:
        """Peel the table; raises RecoveryFailure on overload or a stalled peel."""
        support = self.support
        if support > self.capacity:
            raise RecoveryFailure("overload", support)
        if self._counts is None:
            return set()
        counts = self._counts.tolist()
        ids = [int(v) for v in self._ids.tolist()]
        fps = [int(v) for v in self._fps.tolist()]
        p = self.prime
        queue = [i for i, c in enumerate(counts) if c == 1]
        recovered: set[int] = set()
        while queue:
            i = queue.pop()
            if counts[i] != 1:
                continue
            x = ids[i]
            if x >= p or x in recovered:
                continue
            places = self.positions(x)
            if i not in places:
                continue
            fp = self.fingerprint(x)
            if fps[i] != fp:
                continue
            recovered.add(x)
            for j in places:
                counts[j] -= 1
                ids[j] = (ids[j] - x) % _U64
                fps[j] = (fps[j] - fp) % p
                if counts[j] == 1:
                    queue.append(j)
        if any(counts) or any(ids) or any(fps):
            logger.debug(
                "Peeling stalled after %d of %d ids", len(recovered), support
            )
            raise RecoveryFailure("stalled", support)
        return recovered

    def same_shape(self, other: "SparseRecovery") -> bool:
        return (
            self.capacity == other.capacity
            and self.rows == other.rows
            and self.buckets == other.buckets
            and self.seed == other.seed
            and self.prime == other.prime
        )

    def merged(self, other: "SparseRecovery") -> "SparseRecovery":
        """Componentwise sum of two tables built with identical parameters."""
        if not self.same_shape(other):
            raise ValueError("cannot merge sparse-recovery tables with different parameters")
        out = SparseRecovery(self.capacity, self.rows, self.buckets, self.seed, self.prime)
        if self._counts is None and other._counts is None:
            return out
        out._allocate()
        for src in (self, other):
            if src._counts is not None:
                out._counts += src._counts
                out._ids += src._ids
                out._fps = (out._fps + src._fps) % np.uint64(self.prime)
        return out

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The bucket arrays, zeros when never allocated."""
        if self._counts is None:
            return (
                np.zeros(self.size, dtype=np.int64),
                np.zeros(self.size, dtype=np.uint64),
                np.zeros(self.size, dtype=np.uint64),
            )
        return self._counts, self._ids, self._fps

    def load_arrays(self, counts: np.ndarray, ids: np.ndarray, fps: np.ndarray) -> None:
        for arr in (counts, ids, fps):
            if arr.shape != (self.size,):
                raise ValueError(f"bucket array of shape {arr.shape}, expected ({self.size},)")
        self._counts = counts.astype(np.int64, copy=True)
        self._ids = ids.astype(np.uint64, copy=True)
        self._fps = fps.astype(np.uint64, copy=True)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseRecovery):
            return NotImplemented
        if not self.same_shape(other):
            return False
        return all(np.array_equal(x, y) for x, y in zip(self.arrays(), other.arrays()))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class SamplerParams:
    """Everything that must agree for two samplers to be mergeable."""

    n: int
    directed: bool
    sample_size: int
    delta: float
    seed: int
    degree: int
    prime: int
    capacity: int
    rows: int
    buckets: int
    levels: int

    @classmethod
    def build(
        cls,
        n: int,
        directed: bool,
        sample_size: int,
        delta: float = 1.0,
        seed: int = 0,
        config: Optional[SketchConfig] = None,
    ) -> "SamplerParams":
        config = config or SketchConfig()
        if n < 2:
            raise ValueError(f"sampler needs at least 2 vertices, got n={n}")
        if sample_size < 1:
            raise ValueError(f"sample size must be positive, got {sample_size}")
        if delta < 1:
            raise ValueError(f"delta must be at least 1, got {delta}")
        eps_mw = config.effective_minwise_eps(delta)
        domain = n * n
        if config.prime <= domain * config.c_prime / eps_mw:
            raise ValueError(
                f"modulus {config.prime} does not exceed n²·c′/ε = {domain * config.c_prime / eps_mw:.3g}"
            )
        t = math.ceil(sample_size * delta)
        degree = hash_degree(
            t,
            eps_mw,
            c_double_prime=config.c_double_prime,
            cap=config.degree_cap,
            full_fidelity=config.full_fidelity,
        )
        max_edges = n * (n - 1) // (1 if directed else 2)
        # Support never exceeds the number of possible edges.
        capacity = min(math.ceil(9 * delta * sample_size), max_edges)
        # Level 0 then always decodes and holds every live edge.
        levels = 1 if capacity == max_edges else (config.prime - 1).bit_length()
        return cls(
            n=n,
            directed=directed,
            sample_size=sample_size,
            delta=float(delta),
            seed=seed & 0xFFFFFFFFFFFFFFFF,
            degree=degree,
            prime=config.prime,
            capacity=capacity,
            rows=math.ceil(math.log2(domain)) + 2,
            buckets=2 * capacity,
            levels=levels,
        )


@dataclass(frozen=True)
class SampledGraph:
    """A spanning sample: all ``base_n`` vertices, ``min(C, m)`` edges, rate ``p``."""

    base_n: int
    directed: bool
    sampled_edges: frozenset[Edge]
    p: Fraction
    m: int

    @property
    def size(self) -> int:
        return len(self.sampled_edges)

    def graph(self) -> Graph:
        return Graph(self.base_n, self.sampled_edges, self.directed)


_MAGIC = b"DSKT"
_VERSION = 1
# magic, version, n, directed, C, delta, seed, degree, prime, capacity, rows, buckets, levels, m
_HEADER = struct.Struct("<4sHIBQdQIQQIQIq")


class LeveledSampler:
    """Uniform without-replacement edge sampler for strict-turnstile streams.

    Single writer: updates must be serialised by the caller.
    """

    def __init__(self, params: SamplerParams, batch_size: int = 256, batch_degree_threshold: int = 32):
        self.params = params
        self.hash: KWiseHash = make_hash(
            derive_seed(params.seed, "sampler/hash"), params.degree, params.prime
        )
        self._levels: list[Optional[SparseRecovery]] = [None] * params.levels
        self._z = np.zeros(params.levels, dtype=np.int64)
        self._m = 0
        self._batch_size = max(1, batch_size)
        self._batching = params.degree > batch_degree_threshold
        self._pending: list[tuple[int, int]] = []

    @classmethod
    def create(
        cls,
        n: int,
        directed: bool,
        sample_size: int,
        delta: float = 1.0,
        seed: int = 0,
        config: Optional[SketchConfig] = None,
    ) -> "LeveledSampler":
        config = config or SketchConfig()
        params = SamplerParams.build(n, directed, sample_size, delta, seed, config)
        logger.debug(
            "Sampler n=%d C=%d capacity=%d rows=%d degree=%d",
            n,
            sample_size,
            params.capacity,
            params.rows,
            params.degree,
        )
        return cls(params, config.batch_size, config.batch_degree_threshold)

    def _level(self, i: int) -> SparseRecovery:
        lvl = self._levels[i]
        if lvl is None:
            p = self.params
            lvl = SparseRecovery(
                p.capacity, p.rows, p.buckets, derive_seed(p.seed, f"sampler/level/{i}"), p.prime
            )
            self._levels[i] = lvl
        return lvl

    def depth(self, value: int) -> int:
        """Deepest level holding an edge of hash ``value``: max i with value < R/2^i."""
        last = self.params.levels - 1
        if value == 0:
            return last
        return min((self.params.prime // value).bit_length() - 1, last)

    def _apply(self, edge_id: int, value: int, delta: int) -> None:
        d = self.depth(value)
        for i in range(d + 1):
            self._level(i).update(edge_id, delta)
        self._z[: d + 1] += delta

    def _flush(self) -> None:
        if not self._pending:
            return
        ids = [x for x, _ in self._pending]
        values = eval_batch(self.hash, ids)
        for (x, delta), value in zip(self._pending, values):
            self._apply(x, value, delta)
        self._pending.clear()

    def update(self, event: StreamEvent) -> None:
        """Apply one insert or delete."""
        p = self.params
        edge_id = encode_edge(event.u, event.v, p.n, p.directed)
        self._m += event.delta
        if self._batching:
            self._pending.append((edge_id, event.delta))
            if len(self._pending) >= self._batch_size:
                self._flush()
            return
        self._apply(edge_id, eval_hash(self.hash, edge_id), event.delta)

    def insert(self, u: int, v: int) -> None:
        self.update(StreamEvent.insert(u, v, self.params.directed))

    def delete(self, u: int, v: int) -> None:
        self.update(StreamEvent.delete(u, v, self.params.directed))

    def consume(self, events: Iterable[StreamEvent]) -> "LeveledSampler":
        for ev in events:
            self.update(ev)
        self._flush()
        return self

    @property
    def m(self) -> int:
        return self._m

    def level_counts(self) -> list[int]:
        """Z_i for every level; non-increasing in i."""
        self._flush()
        return [int(z) for z in self._z]

    def level(self, i: int) -> Optional[SparseRecovery]:
        self._flush()
        return self._levels[i]

    def query(self) -> SampledGraph:
        """The ``min(C, m)`` smallest-hash live edges.

        Tries eligible levels deepest first and falls back to shallower ones;
        raises SamplerFailure when none decodes.
        """
        self._flush()
        p = self.params
        m = self._m
        if m == 0:
            return SampledGraph(p.n, p.directed, frozenset(), Fraction(1), 0)
        target = min(p.sample_size, m)
        eligible = [i for i in range(p.levels) if target <= self._z[i] <= p.capacity]
        attempts: list[tuple[int, str]] = []
        for i in reversed(eligible):
            lvl = self._levels[i]
            try:
                ids = lvl.decode() if lvl is not None else set()
            except RecoveryFailure as e:
                logger.debug("Level %d failed to decode: %s", i, e.reason)
                attempts.append((i, e.reason))
                continue
            if len(ids) != int(self._z[i]):
                logger.debug("Level %d decoded %d ids, counter says %d", i, len(ids), self._z[i])
                attempts.append((i, "count-mismatch"))
                continue
            ranked = sorted((eval_hash(self.hash, x), x) for x in ids)[:target]
            edges = frozenset(Edge.of(*decode_edge(x, p.n, p.directed), p.directed) for _, x in ranked)
            rate = Fraction(1) if m <= p.sample_size else Fraction(p.sample_size, m)
            if attempts:
                logger.warning("Sampler fell back to level %d after %d failed levels", i, len(attempts))
            else:
                logger.info("Sampled %d of %d edges from level %d", len(edges), m, i)
            return SampledGraph(p.n, p.directed, edges, rate, m)
        logger.warning("Sampler query failed: m=%d, attempts=%s", m, attempts)
        raise SamplerFailure(attempts, m)

    def sampled_ids(self) -> list[int]:
        """Edge ids of the current sample in (hash, id) order."""
        sample = self.query()
        p = self.params
        ids = [encode_edge(e.u, e.v, p.n, p.directed) for e in sample.sampled_edges]
        return [x for _, x in sorted((eval_hash(self.hash, x), x) for x in ids)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LeveledSampler):
            return NotImplemented
        self._flush()
        other._flush()
        if self.params != other.params or self._m != other._m:
            return False
        if not np.array_equal(self._z, other._z):
            return False
        for a, b in zip(self._levels, other._levels):
            # An absent level equals an allocated all-zero one.
            if (a is None or a.is_zero()) and (b is None or b.is_zero()):
                continue
            if a is None or b is None or a != b:
                return False
        return True

    __hash__ = None  # type: ignore[assignment]

    def to_bytes(self) -> bytes:
        """Serialise to the versioned DSKT layout (see docs/sketch-format.md)."""
        self._flush()
        p = self.params
        parts = [
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                p.n,
                int(p.directed),
                p.sample_size,
                p.delta,
                p.seed,
                p.degree,
                p.prime,
                p.capacity,
                p.rows,
                p.buckets,
                p.levels,
                self._m,
            ),
            self._z.astype("<i8").tobytes(),
        ]
        for lvl in self._levels:
            if lvl is None or not lvl.allocated:
                parts.append(b"\x00")
                continue
            counts, ids, fps = lvl.arrays()
            parts.append(b"\x01")
            parts.append(counts.astype("<i8").tobytes())
            parts.append(ids.astype("<u8").tobytes())
            parts.append(fps.astype("<u8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes, config: Optional[SketchConfig] = None) -> "LeveledSampler":
        config = config or SketchConfig()
        if len(blob) < _HEADER.size:
            raise ValueError("sketch blob is truncated (no header)")
        (
            magic, version, n, directed, sample_size, delta, seed, degree,
            prime, capacity, rows, buckets, levels, m,
        ) = _HEADER.unpack_from(blob, 0)
        if magic != _MAGIC:
            raise ValueError(f"not a sketch file (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"unsupported sketch version {version}")
        params = SamplerParams(
            n=n, directed=bool(directed), sample_size=sample_size, delta=delta, seed=seed,
            degree=degree, prime=prime, capacity=capacity, rows=rows, buckets=buckets,
            levels=levels,
        )
        sampler = cls(params, config.batch_size, config.batch_degree_threshold)
        sampler._m = m
        offset = _HEADER.size
        z_bytes = 8 * levels
        sampler._z = np.frombuffer(blob, dtype="<i8", count=levels, offset=offset).astype(np.int64)
        offset += z_bytes
        size = rows * buckets
        for i in range(levels):
            if offset >= len(blob):
                raise ValueError(f"sketch blob is truncated at level {i}")
            present = blob[offset]
            offset += 1
            if not present:
                continue
            if offset + 24 * size > len(blob):
                raise ValueError(f"sketch blob is truncated inside level {i}")
            counts = np.frombuffer(blob, dtype="<i8", count=size, offset=offset)
            ids = np.frombuffer(blob, dtype="<u8", count=size, offset=offset + 8 * size)
            fps = np.frombuffer(blob, dtype="<u8", count=size, offset=offset + 16 * size)
            offset += 24 * size
            sampler._level(i).load_arrays(counts, ids, fps)
        if offset != len(blob):
            raise ValueError(f"{len(blob) - offset} trailing bytes after sketch data")
        return sampler


def merge(a: LeveledSampler, b: LeveledSampler) -> LeveledSampler:
    """Sketch of the concatenated streams; parameters must match exactly."""
    if a.params != b.params:
        raise ValueError("cannot merge samplers built with different parameters")
    a._flush()
    b._flush()
    out = LeveledSampler(a.params, a._batch_size)
    out._batching = a._batching
    out._m = a._m + b._m
    out._z = a._z + b._z
    for i, (x, y) in enumerate(zip(a._levels, b._levels)):
        if x is None and y is None:
            continue
        if x is None:
            x = out._level(i)
        if y is None:
            y = out._level(i)
        out._levels[i] = x.merged(y)
    return out


def save_sketch(sampler: LeveledSampler, path: Union[str, Path]) -> Path:
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(sampler.to_bytes())
    logger.info("Saved sketch (m=%d) to %s", sampler.m, path)
    return path


def load_sketch(path: Union[str, Path], config: Optional[SketchConfig] = None) -> LeveledSampler:
    path = Path(path).expanduser()
    return LeveledSampler.from_bytes(path.read_bytes(), config)


def sample_offline(g: Graph, sample_size: int, seed: int = 0) -> SampledGraph:
    """Uniform sample of ``min(C, m)`` edges without replacement (partial Fisher-Yates)."""
    if sample_size < 0:
        raise ValueError(f"sample size must be non-negative, got {sample_size}")
    m = g.m
    if m <= sample_size:
        return SampledGraph(g.n, g.directed, g.edges, Fraction(1), m)
    rng = np.random.default_rng(derive_seed(seed, "offline/sample"))
    edges = list(g.sorted_edges)
    for i in range(sample_size):
        j = int(rng.integers(i, m))
        edges[i], edges[j] = edges[j], edges[i]
    return SampledGraph(g.n, g.directed, frozenset(edges[:sample_size]), Fraction(sample_size, m), m)


def draw_sample(source: Union[Graph, LeveledSampler], sample_size: int, seed: int = 0) -> SampledGraph:
    """Sample from a materialised graph or query a sampler built for ``sample_size``."""
    if isinstance(source, Graph):
        return sample_offline(source, sample_size, seed)
    if source.params.sample_size != sample_size:
        raise ValueError(
            f"sampler was built for C={source.params.sample_size}, asked for C={sample_size}"
        )
    return source.query()


@dataclass
class SketchStats:
    """Summary of a sampler's state for reports."""

    m: int
    allocated_levels: int
    level_counts: list[int] = field(default_factory=list)

    @classmethod
    def of(cls, sampler: LeveledSampler) -> "SketchStats":
        counts = sampler.level_counts()
        allocated = sum(1 for i in range(sampler.params.levels) if sampler.level(i) is not None)
        return cls(sampler.m, allocated, [c for c in counts if c > 0])

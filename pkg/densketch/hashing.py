"""k-wise independent polynomial hashing over a prime field.

A random polynomial of degree ``d - 1`` over ``GF(p)`` is a d-wise
independent function. With a large enough degree it is also approximately
min-wise independent, which is what the leveled sampler relies on: the C
edges with the smallest hash values form a near-uniform sample without
replacement.
"""

import logging
import math
import zlib
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# 2^61 - 1: a Mersenne prime that exceeds n² for every desk-scale n.
MERSENNE_61 = (1 << 61) - 1

# Coefficients are drawn with numpy's int64 generator, so the modulus must fit.
MAX_PRIME = (1 << 63) - 1

# Witnesses that make Miller-Rabin deterministic below 3.3 * 10^24.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_prime(p: int) -> bool:
    """Deterministic Miller-Rabin for word-size integers."""
    if p < 2:
        return False
    for w in _MR_WITNESSES:
        if p % w == 0:
            return p == w
    d, s = p - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, p)
        if x in (1, p - 1):
            continue
        for _ in range(s - 1):
            x = x * x % p
            if x == p - 1:
                break
        else:
            return False
    return True


def derive_seed(seed: int, component: str) -> int:
    """Expand the run seed into an independent 64-bit seed for ``component``.

    Every random choice in a run flows from one seed; each consumer gets its
    own stream so adding a consumer never perturbs the others.
    """
    tag = zlib.crc32(component.encode("utf-8"))
    seq = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def hash_degree(
    t: int,
    eps_mw: float,
    c_double_prime: float = 2.0,
    cap: int = 512,
    full_fidelity: bool = False,
) -> int:
    """Independence degree prescribed for ε-approximate t-min-wise hashing.

    ``c'' * (t * ln ln(1/ε) + ln(1/ε))``, at least 2. ``ln ln(1/ε)`` is
    clamped at 0 when ``1/ε < e``. Capped at ``cap`` unless ``full_fidelity``.
    """
    if not 0 < eps_mw < 1:
        raise ValueError(f"min-wise epsilon must be in (0, 1), got {eps_mw}")
    if t < 1:
        raise ValueError(f"t must be positive, got {t}")
    inv = math.log(1.0 / eps_mw)
    loglog = max(math.log(inv), 0.0) if inv > 0 else 0.0
    degree = max(2, math.ceil(c_double_prime * (t * loglog + inv)))
    if not full_fidelity and degree > cap:
        logger.debug("Capping hash degree %d at %d", degree, cap)
        degree = cap
    return degree


@dataclass(frozen=True)
class KWiseHash:
    """``h(x) = sum(coefficients[i] * x^i) mod prime``.

    ``degree`` is the number of coefficients, i.e. the independence of the
    family the function is drawn from.
    """

    coefficients: tuple[int, ...]
    prime: int = MERSENNE_61
    seed: int = 0

    @property
    def degree(self) -> int:
        return len(self.coefficients)

    def __call__(self, x: int) -> int:
        return eval_hash(self, x)


def make_hash(seed: int, degree: int, prime: int = MERSENNE_61) -> KWiseHash:
    """Draw a polynomial hash deterministically from ``seed``."""
    if degree < 2:
        raise ValueError(f"hash degree must be at least 2 (pairwise), got {degree}")
    if prime > MAX_PRIME:
        raise ValueError(f"modulus {prime} exceeds the supported word size")
    if not is_prime(prime):
        raise ValueError(f"modulus {prime} is not prime")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    coeffs = rng.integers(0, prime, size=degree, dtype=np.int64)
    return KWiseHash(tuple(int(c) for c in coeffs), prime, seed)


def check_domain(h: KWiseHash, domain: int) -> None:
    """Refuse a modulus that does not exceed the id domain."""
    if h.prime <= domain:
        raise ValueError(
            f"modulus {h.prime} does not exceed the edge-id domain {domain}"
        )


def eval_hash(h: KWiseHash, x: int) -> int:
    """Horner evaluation of ``h`` at ``x``."""
    if not 0 <= x < h.prime:
        raise ValueError(f"input {x} outside the field [0, {h.prime})")
    p = h.prime
    acc = 0
    for c in reversed(h.coefficients):
        acc = (acc * x + c) % p
    return acc


def eval_batch(h: KWiseHash, ids: Sequence[int]) -> list[int]:
    """Evaluate ``h`` on a batch of ids, one Horner sweep per coefficient."""
    p = h.prime
    for x in ids:
        if not 0 <= x < p:
            raise ValueError(f"input {x} outside the field [0, {p})")
    acc = [0] * len(ids)
    for c in reversed(h.coefficients):
        acc = [(a * x + c) % p for a, x in zip(acc, ids)]
    if ids:
        logger.debug(
            "Evaluated %d ids at degree %d (%d multiplications per id)",
            len(ids),
            h.degree,
            h.degree,
        )
    return acc


def min_hash_select(
    ids: Iterable[int], h: KWiseHash, count: int
) -> list[tuple[int, int]]:
    """The ``count`` ids with the smallest hash values, as ``(id, hash)`` pairs.

    Sorted by hash ascending with ties broken by id. This is the offline
    reference the streaming sampler must reproduce exactly.
    """
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    unique = sorted(set(ids))
    values = eval_batch(h, unique)
    ranked = sorted(zip(values, unique))
    return [(x, v) for v, x in ranked[:count]]

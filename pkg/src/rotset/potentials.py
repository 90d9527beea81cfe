"""Vector-valued potentials: locally constant tables, continuity-certified
oracles, and locally constant approximation.

An LcPotential is constant on cylinders of length k and is stored as a table
from admissible k-words to vectors.  A PotentialOracle evaluates any finite
word to a value plus a certified error bound covering the whole cylinder,
and supplies a modulus of continuity mapping an accuracy index n to a
cylinder length k with k-variation below 2**-n.  Certificates are trusted
inputs; randomized audits live in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CapExceeded
from .sft import DEFAULT_WORD_CAP, PeriodicOrbit, Sft, Word, enumerate_words


@dataclass(frozen=True)
class LcPotential:
    """Potential constant on k-cylinders, given by a complete table."""

    sft: Sft
    k: int
    m: int
    table: dict[Word, np.ndarray] = field(hash=False)

    def value(self, word: Sequence[int]) -> np.ndarray:
        """Value on the cylinder of the k-prefix of ``word``."""
        w = tuple(word)
        if len(w) < self.k:
            raise ValueError(f"word {w} shorter than level {self.k}")
        return self.table[w[: self.k]]

    def sup_norm(self) -> float:
        return max(float(np.linalg.norm(v)) for v in self.table.values())


def lc_from_table(sft: Sft, k: int, m: int, table: Mapping[Word, Sequence[float]]) -> LcPotential:
    """Validate a table against the admissible k-words and freeze it."""
    words = enumerate_words(sft, k)
    admissible = set(words)
    frozen: dict[Word, np.ndarray] = {}
    for w in words:
        if w not in table:
            raise ValueError(f"missing word {w}")
    for w in table:
        key = tuple(w)
        if key not in admissible:
            raise ValueError(f"extra word {key}")
        v = np.array(table[w], dtype=float).ravel()
        if v.shape != (m,):
            raise ValueError(f"value for {key} has dimension {v.shape[0]}, expected {m}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite entry for word {key}")
        v.setflags(write=False)
        frozen[key] = v
    return LcPotential(sft=sft, k=k, m=m, table=frozen)


def lc_scalar(sft: Sft, values: Mapping[int, float]) -> LcPotential:
    """Convenience LC_1 scalar potential from letter -> value."""
    return lc_from_table(sft, 1, 1, {(a,): [v] for a, v in values.items()})


@dataclass
class PotentialOracle:
    """Continuous potential given by word evaluation plus a modulus.

    ``eval_word(w)`` returns ``(value, err)`` with ``|Phi(x) - value| <= err``
    for every x in the cylinder of w; refining a word must not increase the
    bound.  ``modulus(n)`` returns a cylinder length k with var_k < 2**-n.
    Evaluations are memoized per word (the contract requires determinism).
    """

    sft: Sft
    m: int
    eval_word: Callable[[Word], tuple[np.ndarray, float]]
    modulus: Callable[[int], int]
    name: str = "oracle"
    _cache: dict[Word, tuple[np.ndarray, float]] = field(default_factory=dict, repr=False)

    def __call__(self, word: Sequence[int]) -> tuple[np.ndarray, float]:
        key = tuple(word)
        hit = self._cache.get(key)
        if hit is None:
            value, err = self.eval_word(key)
            hit = (np.asarray(value, dtype=float).reshape(self.m), float(err))
            self._cache[key] = hit
        return hit


def oracle_from_lc(phi: LcPotential, name: str = "lc") -> PotentialOracle:
    """Wrap a locally constant potential as an exact oracle (var_k = 0)."""

    def ev(word: Word) -> tuple[np.ndarray, float]:
        if len(word) >= phi.k:
            return phi.value(word), 0.0
        # shorter than the level: spread over all admissible completions
        vals = [v for w, v in phi.table.items() if w[: len(word)] == word]
        mid = np.mean(vals, axis=0)
        err = max(float(np.linalg.norm(v - mid)) for v in vals)
        return mid, err

    return PotentialOracle(sft=phi.sft, m=phi.m, eval_word=ev, modulus=lambda n: phi.k, name=name)


def lc_approximate(oracle: PotentialOracle, eps: float, cap: int = DEFAULT_WORD_CAP) -> LcPotential:
    """Locally constant approximation with certified sup-distance < eps.

    The level is k = modulus(ceil(-log2(eps/2))) and each cylinder takes the
    oracle value at its own word.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = max(0, math.ceil(-math.log2(eps / 2)))
    k = oracle.modulus(n)
    words = enumerate_words(oracle.sft, k, cap=cap)
    table = {}
    worst = 0.0
    for w in words:
        value, err = oracle(w)
        worst = max(worst, err)
        table[w] = value
    if worst >= eps:
        raise ValueError(
            f"oracle certificate too weak: per-cylinder error {worst} >= eps {eps}"
        )
    return LcPotential(sft=oracle.sft, k=k, m=oracle.m, table=table)


def dot_potential(v: Sequence[float], phi: LcPotential) -> LcPotential:
    """Scalar potential (v . Phi), entrywise over the table."""
    vec = np.asarray(v, dtype=float).reshape(-1)
    if vec.shape != (phi.m,):
        raise ValueError(f"direction has dimension {vec.shape[0]}, potential has {phi.m}")
    table = {w: np.array([float(vec @ val)]) for w, val in phi.table.items()}
    return LcPotential(sft=phi.sft, k=phi.k, m=1, table=table)


def orbit_average(phi: LcPotential, orbit: PeriodicOrbit) -> np.ndarray:
    """Rotation vector of the orbit measure: average of the table values
    over the cyclic k-windows of the generating segment."""
    if not phi.sft.is_cycle_admissible(orbit.segment):
        raise ValueError(f"orbit {orbit.segment} inadmissible for this system")
    total = np.zeros(phi.m)
    for window in orbit.windows(phi.k):
        total += phi.table[window]
    return total / orbit.period


@dataclass(frozen=True)
class ApproxSequence:
    """A schedule of locally constant approximations of an oracle."""

    base: PotentialOracle
    eps: Callable[[int], float]

    def approx(self, n: int, cap: int = DEFAULT_WORD_CAP) -> LcPotential:
        return lc_approximate(self.base, self.eps(n), cap=cap)


def geometric_eps(eps1: float, ratio: float) -> Callable[[int], float]:
    if not (0 < ratio < 1) or eps1 <= 0:
        raise ValueError("need eps1 > 0 and 0 < ratio < 1")
    return lambda n: eps1 * ratio ** (n - 1)


# ---------------------------------------------------------------------------
# Built-in named oracles (used by the CLI and the approximation tests).


def first_hit_oracle(sft: Sft, symbols: Sequence[int], scale: float = 1.0) -> PotentialOracle:
    """Phi_j(xi) = scale * theta**(first index where symbol_j occurs).

    Lipschitz in the cylinder metric: var_k <= scale * theta**(k+1).
    """
    theta = float(sft.theta)
    m = len(symbols)

    def ev(word: Word) -> tuple[np.ndarray, float]:
        L = len(word)
        vals = np.empty(m)
        err = 0.0
        for j, sym in enumerate(symbols):
            hits = [i + 1 for i, a in enumerate(word) if a == sym]
            if hits:
                vals[j] = scale * theta ** hits[0]
            else:
                # unseen: true value lies in [0, scale*theta**(L+1)]
                half = scale * theta ** (L + 1) / 2
                vals[j] = half
                err = max(err, half)
        return vals, err * math.sqrt(m)

    def mod(n: int) -> int:
        # need scale*theta**(k+1) * sqrt(m) < 2**-n
        k = 1
        while scale * math.sqrt(m) * theta ** (k + 1) >= 2.0**-n:
            k += 1
        return k

    return PotentialOracle(sft=sft, m=m, eval_word=ev, modulus=mod, name=f"first_hit{tuple(symbols)}")


NAMED_ORACLES: dict[str, Callable[..., PotentialOracle]] = {
    "first_hit": first_hit_oracle,
}


def register_oracle(name: str, factory: Callable[..., PotentialOracle]):
    NAMED_ORACLES[name] = factory


def resolve_oracle(sft: Sft, name: str, **params) -> PotentialOracle:
    try:
        factory = NAMED_ORACLES[name]
    except KeyError:
        raise KeyError(f"unknown oracle {name!r}; known: {sorted(NAMED_ORACLES)}") from None
    return factory(sft, **params)

"""Subshifts of finite type: transition structure, cylinders, recoding, orbits.

Words are plain tuples of ints over the alphabet {0, ..., d-1}; a word is
admissible when every consecutive pair of symbols is allowed by the 0/1
transition matrix.  All objects are immutable after construction and every
operation is pure, so concurrent read-only use is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import CapExceeded

Word = tuple[int, ...]

#: default cap on enumerated words / simple cycles; exceeding it is an error,
#: never a silent truncation (hull results are only valid with complete sets).
DEFAULT_WORD_CAP = 10**6
DEFAULT_CYCLE_CAP = 10**6


@dataclass(frozen=True)
class Sft:
    """A one-sided subshift of finite type with metric base ``theta``.

    ``A[i][j] == 1`` allows symbol j to follow symbol i.  Every letter must
    occur (no all-zero row or column) and ``0 < theta < 1``.
    """

    d: int
    A: tuple[tuple[int, ...], ...]
    theta: Fraction

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("alphabet size must be positive")
        if len(self.A) != self.d or any(len(row) != self.d for row in self.A):
            raise ValueError(f"transition matrix must be {self.d}x{self.d}")
        if any(a not in (0, 1) for row in self.A for a in row):
            raise ValueError("transition matrix entries must be 0 or 1")
        for i in range(self.d):
            if not any(self.A[i]):
                raise ValueError(f"empty letter: row {i} of A is all zero")
            if not any(self.A[j][i] for j in range(self.d)):
                raise ValueError(f"empty letter: column {i} of A is all zero")
        if not (0 < self.theta < 1):
            raise ValueError(f"bad theta: {self.theta} not in (0,1)")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.A, dtype=float)

    def allows(self, i: int, j: int) -> bool:
        return self.A[i][j] == 1

    def successors(self, i: int) -> tuple[int, ...]:
        return tuple(j for j in range(self.d) if self.A[i][j])

    def is_admissible(self, word: Sequence[int]) -> bool:
        if any(not (0 <= s < self.d) for s in word):
            return False
        return all(self.A[a][b] == 1 for a, b in zip(word, word[1:]))

    def is_cycle_admissible(self, word: Sequence[int]) -> bool:
        """Admissible including the wrap-around transition (cyclic word)."""
        return bool(word) and self.is_admissible(word) and self.A[word[-1]][word[0]] == 1


def build_sft(d: int, A: Iterable[Iterable[int]], theta) -> Sft:
    """Validate and freeze an SFT; rejects empty letters and bad theta."""
    rows = tuple(tuple(int(a) for a in row) for row in A)
    return Sft(d=int(d), A=rows, theta=Fraction(theta))


def full_shift(d: int, theta=Fraction(1, 2)) -> Sft:
    return build_sft(d, [[1] * d for _ in range(d)], theta)


def golden_mean_shift(theta=Fraction(1, 2)) -> Sft:
    return build_sft(2, [[1, 1], [1, 0]], theta)


def _digraph(s: Sft) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(s.d))
    g.add_edges_from((i, j) for i in range(s.d) for j in range(s.d) if s.A[i][j])
    return g


def is_irreducible(s: Sft) -> bool:
    """True iff the transition graph is strongly connected."""
    return nx.is_strongly_connected(_digraph(s))


def is_aperiodic(s: Sft) -> bool:
    """True iff some power of A is entrywise positive.

    Computed as irreducibility plus gcd of cycle lengths equal to 1, via
    BFS level differences on the strongly connected transition graph.
    """
    if not is_irreducible(s):
        return False
    dist = {0: 0}
    queue = [0]
    while queue:
        u = queue.pop(0)
        for v_ in range(s.d):
            if s.A[u][v_] and v_ not in dist:
                dist[v_] = dist[u] + 1
                queue.append(v_)
    g = 0
    for i in range(s.d):
        for j in range(s.d):
            if s.A[i][j]:
                g = math.gcd(g, dist[i] + 1 - dist[j])
    return g == 1


def cylinder_diameter(s: Sft, k: int) -> float:
    """Diameter theta**(k+1) of any nonempty length-k cylinder.

    Two points agreeing on the first k symbols first differ at an index
    >= k+1; k = 0 means no agreement is guaranteed beyond index 0.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    return float(s.theta ** (k + 1))


def enumerate_words(s: Sft, k: int, cap: int = DEFAULT_WORD_CAP) -> list[Word]:
    """All admissible k-words in lexicographic order; length is m_c(k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    words: list[Word] = [(a,) for a in range(s.d)]
    for _ in range(k - 1):
        nxt: list[Word] = []
        for w in words:
            for b in s.successors(w[-1]):
                nxt.append(w + (b,))
                if len(nxt) > cap:
                    raise CapExceeded("enumerate_words", cap, required=s.d**k)
        words = nxt
    if len(words) > cap:
        raise CapExceeded("enumerate_words", cap, required=len(words))
    return words


def count_words(s: Sft, k: int) -> int:
    """m_c(k) via matrix powers, without enumerating."""
    if k < 1:
        raise ValueError("k must be >= 1")
    A = np.array(s.A, dtype=object)
    total = np.linalg.matrix_power(A, k - 1).sum() if k > 1 else s.d
    return int(total)


def word_transition(s: Sft, u: Word, v: Word) -> bool:
    """Transition rule of the recoded system: (k-1)-overlap plus admissibility."""
    k = len(u)
    if len(v) != k:
        raise ValueError("words must have equal length")
    if k > 1 and u[1:] != v[:-1]:
        return False
    return s.A[u[-1]][v[-1]] == 1


@dataclass(frozen=True)
class RecodedSystem:
    """Level-k recoding: target letters are the admissible k-words of source.

    The induced map h (read k-windows) conjugates the shifts; each row of
    the target matrix has at most d nonzero entries.
    """

    source: Sft
    k: int
    target: Sft
    word_of_state: tuple[Word, ...]
    state_of_word: dict[Word, int] = field(hash=False)

    def encode(self, word: Sequence[int]) -> Word:
        """Map a source word of length L to the target word of its k-windows
        (length L - k + 1)."""
        w = tuple(word)
        if len(w) < self.k:
            raise ValueError("word shorter than recoding level")
        return tuple(self.state_of_word[w[i : i + self.k]] for i in range(len(w) - self.k + 1))


def recode(s: Sft, k: int, cap: int = DEFAULT_WORD_CAP) -> RecodedSystem:
    """Recode to the higher-block system on admissible k-words.

    For k = 1 the target equals the source with identity letter maps.
    """
    words = enumerate_words(s, k, cap=cap)
    dprime = len(words)
    state_of_word = {w: i for i, w in enumerate(words)}
    A = [[0] * dprime for _ in range(dprime)]
    for i, u in enumerate(words):
        # successors share the (k-1)-overlap, so at most d candidates
        for b in s.successors(u[-1]):
            v = u[1:] + (b,)
            j = state_of_word.get(v)
            if j is not None:
                A[i][j] = 1
    target = Sft(d=dprime, A=tuple(tuple(row) for row in A), theta=s.theta)
    return RecodedSystem(source=s, k=k, target=target, word_of_state=tuple(words), state_of_word=state_of_word)


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit, stored as the lexicographically least rotation of
    its generating segment; the period is the prime period."""

    segment: Word

    def __post_init__(self):
        if not self.segment:
            raise ValueError("empty generating segment")
        if self.segment != min_rotation(self.segment):
            raise ValueError("segment must be the least rotation (use make_orbit)")
        n = len(self.segment)
        for p in range(1, n):
            if n % p == 0 and self.segment == self.segment[:p] * (n // p):
                raise ValueError("segment repeats a shorter segment; period is not prime")

    @property
    def period(self) -> int:
        return len(self.segment)

    def windows(self, k: int) -> list[Word]:
        """The period-many cyclic k-windows along the orbit."""
        n = len(self.segment)
        return [tuple(self.segment[(i + j) % n] for j in range(k)) for i in range(n)]


def min_rotation(word: Sequence[int]) -> Word:
    w = tuple(word)
    return min(w[i:] + w[:i] for i in range(len(w)))


def make_orbit(s: Sft, segment: Sequence[int]) -> PeriodicOrbit:
    """Canonicalize a cyclic segment into a PeriodicOrbit; checks
    admissibility (with wrap-around) and primitivity."""
    seg = tuple(segment)
    if not s.is_cycle_admissible(seg):
        raise ValueError(f"inadmissible orbit segment {seg}")
    return PeriodicOrbit(segment=min_rotation(seg))


def elementary_orbits(
    s: Sft,
    k: int,
    word_cap: int = DEFAULT_WORD_CAP,
    cycle_cap: int = DEFAULT_CYCLE_CAP,
) -> list[PeriodicOrbit]:
    """One representative per orbit of k-elementary periodic points.

    These are exactly the simple cycles of the level-k recoded graph,
    mapped back to source segments (first symbol of each k-window).
    Enumeration fails closed when the cycle cap is exceeded.
    """
    rs = recode(s, k, cap=word_cap)
    g = _digraph(rs.target)
    orbits: dict[Word, PeriodicOrbit] = {}
    count = 0
    for cycle in nx.simple_cycles(g):
        count += 1
        if count > cycle_cap:
            raise CapExceeded("elementary_orbits cycles", cycle_cap)
        seg = tuple(rs.word_of_state[state][0] for state in cycle)
        orbit = make_orbit(s, seg)
        orbits[orbit.segment] = orbit
    return sorted(orbits.values(), key=lambda o: (o.period, o.segment))


@dataclass(frozen=True)
class InvariantSubgraph:
    """Maximal subgraph with all in/out degrees >= 1 inside a letter subset."""

    letters: tuple[int, ...]
    sft: Sft


def max_invariant_subgraph(s: Sft, states: Iterable[int]) -> InvariantSubgraph | None:
    """Iteratively prune letters with in- or out-degree 0 within ``states``.

    Returns None when everything prunes away, i.e. no invariant measure
    lives in the union of these 1-cylinders.
    """
    alive = set(states)
    if not alive:
        raise ValueError("states must be nonempty")
    changed = True
    while changed and alive:
        changed = False
        for i in sorted(alive):
            out = any(s.A[i][j] for j in alive)
            inn = any(s.A[j][i] for j in alive)
            if not (out and inn):
                alive.discard(i)
                changed = True
    if not alive:
        return None
    letters = tuple(sorted(alive))
    A = [[s.A[a][b] for b in letters] for a in letters]
    sub = Sft(d=len(letters), A=tuple(tuple(row) for row in A), theta=s.theta)
    return InvariantSubgraph(letters=letters, sft=sub)


def all_periodic_orbits(s: Sft, max_period: int) -> list[PeriodicOrbit]:
    """Brute-force enumeration of all periodic orbits with prime period
    <= max_period (test oracle; exponential in max_period)."""
    seen: dict[Word, PeriodicOrbit] = {}
    for n in range(1, max_period + 1):
        stack: list[Word] = [(a,) for a in range(s.d)]
        while stack:
            w = stack.pop()
            if len(w) == n:
                if s.A[w[-1]][w[0]]:
                    canon = min_rotation(w)
                    if canon not in seen:
                        try:
                            seen[canon] = PeriodicOrbit(segment=canon)
                        except ValueError:
                            pass  # non-prime period; counted at its prime length
                continue
            for b in s.successors(w[-1]):
                stack.append(w + (b,))
    return sorted(seen.values(), key=lambda o: (o.period, o.segment))

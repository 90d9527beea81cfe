"""Transfer matrices, Markov equilibrium measures, entropy, pressure and
rotation vectors for locally constant potentials.

Every equilibrium computation recodes the potential to a level-1 potential
on the higher-block system and reads the transfer matrix with the
convention Phi(C(i,j)) = Phi(C(i)), giving a single code path.  Certified
eigenvalue enclosures propagate to pressure; entropy and rotation vectors
carry a first-order error bound derived from the enclosure width and the
eigenvector residual (heuristic constant, recorded per record).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EnclosureTooWide
from .perron import PerronData, perron
from .potentials import LcPotential
from .sft import DEFAULT_WORD_CAP, RecodedSystem, Sft, Word, is_irreducible, recode

#: exponent floor after shifting by the max: keeps transfer matrices
#: faithfully compatible in floating point; equilibria computed at the floor
#: are flagged as clipped.
EXP_CLIP = -700.0


@dataclass(frozen=True)
class MarkovMeasure:
    """Stationary 1-step Markov measure (p, P) on an SFT (possibly recoded)."""

    sft: Sft
    p: np.ndarray
    P: np.ndarray

    def validate(self):
        d = self.sft.d
        if self.p.shape != (d,) or self.P.shape != (d, d):
            raise ValueError("shape mismatch with alphabet")
        if np.any(self.p < 0):
            raise ValueError("negative stationary mass")
        if abs(float(self.p.sum()) - 1.0) > 1e-12:
            raise ValueError("stationary vector does not sum to 1")
        if np.any(np.abs(self.P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("P is not row stochastic")
        A = np.array(self.sft.A)
        if np.any((self.P > 0) & (A == 0)):
            raise ValueError("P has mass on a forbidden transition")
        if float(np.abs(self.p @ self.P - self.p).sum()) > 1e-10:
            raise ValueError("p is not stationary for P")

    def entropy(self) -> float:
        return markov_entropy(self)


def transfer_matrix(s: Sft, phi1: LcPotential) -> np.ndarray:
    """B_ij = exp(phi(C(i,j))) A_ij for a scalar potential with k <= 2.

    A level-1 potential is read as Phi(C(i,j)) = Phi(C(i)).  Callers recode
    higher levels first.
    """
    if phi1.m != 1:
        raise ValueError("transfer matrix needs a scalar potential")
    if phi1.k > 2:
        raise ValueError("k > 2: recode first")
    A = s.matrix
    if phi1.k == 1:
        weights = np.array([float(phi1.table[(i,)][0]) for i in range(s.d)])
        return np.exp(weights)[:, None] * A
    B = np.zeros_like(A)
    for (i, j), val in phi1.table.items():
        B[i, j] = math.exp(float(val[0]))
    return B * A


def stochasticize(B: np.ndarray, pd: PerronData, sft: Sft | None = None) -> MarkovMeasure:
    """Markov measure of the equilibrium state: P_ij = B_ij r_j / (lambda r_i),
    p = r * l with (l, r) rescaled to inner product 1.

    Rows of P are renormalized to kill the O(residual) stochasticity defect;
    a defect or stationarity error beyond tolerance raises EnclosureTooWide.
    """
    B = np.asarray(B, dtype=float)
    if sft is None:
        pattern = (B > 0).astype(int)
        sft = Sft(d=B.shape[0], A=tuple(tuple(int(x) for x in row) for row in pattern),
                  theta=Fraction(1, 2))
    lam = pd.lambda_mid
    r, l = pd.r, pd.l
    scale = float(l @ r)
    p = (r * l) / scale
    P = B * r[None, :] / (lam * r[:, None])
    defect = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
    if defect > 1e-6:
        raise EnclosureTooWide(f"row defect {defect:.3e}: enclosure too wide, retry with smaller tol")
    P = P / P.sum(axis=1, keepdims=True)
    p = p / p.sum()
    mm = MarkovMeasure(sft=sft, p=p, P=P)
    try:
        mm.validate()
    except ValueError as e:
        raise EnclosureTooWide(f"{e}: enclosure too wide, retry with smaller tol") from e
    return mm


def measure_of_cylinder(mm: MarkovMeasure, w: Word) -> float:
    """mu(C(w)) by the product formula; 0 when a forbidden factor occurs."""
    if not w:
        raise ValueError("empty word")
    if any(not (0 <= a < mm.sft.d) for a in w):
        raise ValueError(f"inadmissible word {w}: symbol out of range")
    value = float(mm.p[w[0]])
    for a, b in zip(w, w[1:]):
        value *= float(mm.P[a, b])
    return value


def markov_entropy(mm: MarkovMeasure) -> float:
    """-sum p_i P_ij log P_ij with 0 log 0 = 0."""
    P = mm.P
    mask = P > 0
    terms = np.zeros_like(P)
    terms[mask] = P[mask] * np.log(P[mask])
    return float(-(mm.p @ terms.sum(axis=1)))


@dataclass(frozen=True)
class EquilibriumRecord:
    """Equilibrium state of (v . Phi) with certified pressure enclosure.

    ``measure`` lives on the recoded system; ``rv`` and ``entropy`` are
    midpoint values with heuristic first-order error bound ``err``.
    ``clipped`` marks evaluations where the transfer-matrix exponent hit
    the floating-point floor (the record then describes the equilibrium of
    the clipped potential, still a genuine invariant measure).
    """

    v: np.ndarray
    lam: PerronData
    measure: MarkovMeasure | None
    rv: np.ndarray
    entropy: float
    pressure: float
    pressure_lo: float
    pressure_hi: float
    err: float
    clipped: bool


#: alphabet size beyond which the solver switches to the sparse path
SPARSE_THRESHOLD = 128


class EquilibriumSolver:
    """Reusable equilibrium pipeline for one locally constant potential.

    Recode once, then solve for many directions v.  Small recoded alphabets
    use the dense Perron path and produce a full MarkovMeasure; large ones
    (the recoded matrix has at most d nonzeros per row) use a matrix-free
    sparse path where ``measure`` is omitted from the records.
    """

    def __init__(self, s: Sft, phi: LcPotential, word_cap: int = DEFAULT_WORD_CAP):
        if not is_irreducible(s):
            raise ValueError("not irreducible")
        if phi.sft != s:
            raise ValueError("potential lives on a different system")
        from .sft import enumerate_words

        self.phi = phi
        self.m = phi.m
        words = enumerate_words(s, phi.k, cap=word_cap)
        self.words = words
        self.values = np.array([phi.table[w] for w in words])
        self.dprime = len(words)
        self.sparse = self.dprime > SPARSE_THRESHOLD
        if self.sparse:
            from scipy.sparse import csr_matrix

            index = {w: i for i, w in enumerate(words)}
            rows, cols = [], []
            for i, u in enumerate(words):
                for b in s.successors(u[-1]):
                    j = index.get(u[1:] + (b,)) if phi.k > 1 else index.get((b,))
                    if j is not None:
                        rows.append(i)
                        cols.append(j)
            data = np.ones(len(rows))
            self.A_sparse = csr_matrix((data, (rows, cols)), shape=(self.dprime, self.dprime))
            self.recoded = None
            self.target = None
            self._hint_r: np.ndarray | None = None
            self._hint_l: np.ndarray | None = None
        else:
            self.recoded: RecodedSystem | None = recode(s, phi.k, cap=word_cap)
            self.target = self.recoded.target
            self.A = self.target.matrix

    def solve(self, v: Sequence[float], tol: float = 1e-9) -> EquilibriumRecord:
        """Equilibrium record for v . Phi; retries with tol/10 (3 retries)
        when the enclosure is too wide for the invariants."""
        vv = np.asarray(v, dtype=float).reshape(self.m)
        ptol = tol
        last: EnclosureTooWide | None = None
        for _ in range(4):
            try:
                if self.sparse:
                    return self._solve_sparse(vv, ptol)
                return self._solve_dense(vv, ptol)
            except EnclosureTooWide as e:
                last = e
                ptol /= 10
        raise last  # pragma: no cover - requires pathological conditioning

    def _weights(self, vv: np.ndarray) -> tuple[np.ndarray, float, bool]:
        weights = self.values @ vv
        shift = float(weights.max())
        shifted = weights - shift
        clipped = bool(np.any(shifted < EXP_CLIP))
        if clipped:
            shifted = np.maximum(shifted, EXP_CLIP)
        return shifted, shift, clipped

    def _finish(self, vv, pd, mm, entropy, rv, shift, clipped) -> EquilibriumRecord:
        pressure_lo = math.log(pd.lambda_lo) + shift
        pressure_hi = math.log(pd.lambda_hi) + shift
        pressure = 0.5 * (pressure_lo + pressure_hi)
        width = pressure_hi - pressure_lo
        rel_residual = pd.residual / (max(pd.lambda_mid, 1e-300) * float(np.abs(pd.r).max()))
        err = 10.0 * (width + rel_residual)
        if abs(entropy - (pressure - float(vv @ rv))) > max(1e-8, 10 * err):
            raise EnclosureTooWide("entropy identity defect: retry with smaller tol")
        return EquilibriumRecord(
            v=vv, lam=pd, measure=mm, rv=rv, entropy=entropy, pressure=pressure,
            pressure_lo=pressure_lo, pressure_hi=pressure_hi, err=err, clipped=clipped,
        )

    def _solve_dense(self, vv: np.ndarray, ptol: float) -> EquilibriumRecord:
        shifted, shift, clipped = self._weights(vv)
        B = np.exp(shifted)[:, None] * self.A
        pd = perron(B, ptol)
        mm = stochasticize(B, pd, sft=self.target)
        entropy = markov_entropy(mm)
        # rv_k = sum_ij Phi_k(C(i,j)) p_i P_ij collapses to p . Phi for level 1
        rv = mm.p @ self.values
        return self._finish(vv, pd, mm, entropy, rv, shift, clipped)

    def _solve_sparse(self, vv: np.ndarray, ptol: float) -> EquilibriumRecord:
        from .perron import perron_sparse

        shifted, shift, clipped = self._weights(vv)
        A = self.A_sparse
        B = A.copy()
        row = np.repeat(np.arange(self.dprime), np.diff(A.indptr))
        B.data = np.exp(shifted[row])
        pd = perron_sparse(B, ptol, r0=self._hint_r, l0=self._hint_l)
        self._hint_r = pd.r / pd.r.max()
        self._hint_l = pd.l / pd.l.max()
        lam, r, l = pd.lambda_mid, pd.r, pd.l
        p = r * l
        p = p / p.sum()
        Pdata = B.data * r[B.indices] / (lam * r[row])
        P = B.copy()
        P.data = Pdata
        rowsum = np.asarray(P.sum(axis=1)).ravel()
        defect = float(np.max(np.abs(rowsum - 1.0)))
        if defect > 1e-6:
            raise EnclosureTooWide(f"row defect {defect:.3e}: retry with smaller tol")
        P.data = Pdata / rowsum[row]
        stat = float(np.abs(P.T @ p - p).sum())
        if stat > 1e-8:
            raise EnclosureTooWide(f"stationarity defect {stat:.3e}: retry with smaller tol")
        entropy = float(-np.sum(p[row] * P.data * np.log(P.data)))
        rv = p @ self.values
        return self._finish(vv, pd, None, entropy, rv, shift, clipped)


def equilibrium(s: Sft, phi: LcPotential, v: Sequence[float], tol: float = 1e-9) -> EquilibriumRecord:
    """One-shot equilibrium state of (v . Phi); see EquilibriumSolver."""
    return EquilibriumSolver(s, phi).solve(v, tol=tol)


def topological_entropy(s: Sft, tol: float = 1e-12) -> tuple[float, float]:
    """Enclosure [log lambda_lo, log lambda_hi] of log lambda(A)."""
    if not is_irreducible(s):
        raise ValueError("not irreducible")
    pd = perron(s.matrix, tol)
    return math.log(pd.lambda_lo), math.log(pd.lambda_hi)


def pressure(s: Sft, phi1: LcPotential, tol: float = 1e-12) -> tuple[float, float]:
    """Enclosure of the topological pressure of a scalar LC potential."""
    if phi1.m != 1:
        raise ValueError("pressure needs a scalar potential")
    rec = EquilibriumSolver(s, phi1).solve([1.0], tol=tol)
    return rec.pressure_lo, rec.pressure_hi

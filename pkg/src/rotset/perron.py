"""Certified Perron-Frobenius eigendata for nonnegative irreducible matrices.

The production path is power iteration on (I + B)-preconditioned positive
vectors.  For any positive x the Collatz-Wielandt quotients
min_i (Bx)_i/x_i and max_i (Bx)_i/x_i bracket the Perron eigenvalue, so
every iterate yields a valid two-sided enclosure; iterates are driven until
the width (after floating-point widening) drops below the requested
tolerance.  When plain iteration stalls the preconditioner is squared,
which preserves the eigenvectors and only accelerates convergence.

A maximin-over-sphere-grid evaluation is kept as a tiny-dimension test
oracle; it computes the same quantity at exponentially higher cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import networkx as nx
import numpy as np

#: relative widening applied to each Collatz-Wielandt quotient, accounting
#: for roundoff in the d-term dot products; adjustable.
FP_SLACK_FACTOR = 4.0

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class PerronData:
    """Two-sided eigenvalue enclosure plus positive eigenvectors.

    Eigenvectors are normalized to first entry 1; when that would overflow
    (the true first entry is pathologically tiny) they stay normalized by
    the max entry and ``first_entry_one`` is False.  All downstream
    formulas are scale-invariant.  ``residual`` bounds
    ||B r - lambda_mid r||_inf for the returned r.
    """

    lambda_lo: float
    lambda_hi: float
    r: np.ndarray
    l: np.ndarray
    residual: float
    iterations: int
    first_entry_one: bool = True

    @property
    def lambda_mid(self) -> float:
        return 0.5 * (self.lambda_lo + self.lambda_hi)

    @property
    def width(self) -> float:
        return self.lambda_hi - self.lambda_lo


def _pattern_irreducible(B: np.ndarray) -> bool:
    g = nx.DiGraph()
    d = B.shape[0]
    g.add_nodes_from(range(d))
    rows, cols = np.nonzero(B > 0)
    g.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return nx.is_strongly_connected(g)


def _cw_bounds(B: np.ndarray, x: np.ndarray, slack_rel: float) -> tuple[float, float]:
    y = B @ x
    q = y / x
    return float(q.min()) * (1 - slack_rel), float(q.max()) * (1 + slack_rel)


def perron(B, tol: float, maxiter: int = 600) -> PerronData:
    """Certified Perron eigendata of a nonnegative irreducible matrix.

    Raises ValueError("not irreducible") on reducible patterns and
    "tolerance unreachable" when the floating-point widening alone exceeds
    the requested tolerance.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(B < 0) or not np.all(np.isfinite(B)):
        raise ValueError("matrix must be nonnegative and finite")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not _pattern_irreducible(B):
        raise ValueError("not irreducible")
    d = B.shape[0]
    slack_rel = FP_SLACK_FACTOR * d * _EPS
    lam_upper = float(np.max(B.sum(axis=1)))  # row-sum bound on lambda
    if 2 * slack_rel * max(lam_upper, 1.0) >= tol:
        raise ValueError(
            f"tolerance unreachable: fp slack {2 * slack_rel * lam_upper:.3e} >= tol {tol:.3e}"
        )

    def enclose(mat: np.ndarray) -> tuple[float, float, np.ndarray, int]:
        # (I + mat)**(d-1) preconditioning makes the start vector positive
        x = np.ones(d)
        for _ in range(d - 1):
            x = x + mat @ x
            x /= x.max()
        M = np.eye(d) + mat
        M /= np.abs(M).max()
        lo, hi = _cw_bounds(mat, x, slack_rel)
        width_prev = hi - lo
        iters = 0
        stall = 0
        while hi - lo > tol and iters < maxiter:
            x = M @ x
            x /= x.max()
            cur_lo, cur_hi = _cw_bounds(mat, x, slack_rel)
            lo, hi = max(lo, cur_lo), min(hi, cur_hi)
            iters += 1
            if hi - lo > 0.5 * width_prev:
                stall += 1
                if stall >= 3:
                    M = M @ M
                    M /= np.abs(M).max()
                    stall = 0
            else:
                stall = 0
            width_prev = hi - lo
        if hi - lo > tol:
            raise RuntimeError(f"perron failed to reach width {tol} in {iters} iterations")
        return lo, hi, x, iters

    lo_r, hi_r, r_raw, it_r = enclose(B)
    lo_l, hi_l, l_raw, it_l = enclose(B.T)
    lo, hi = max(lo_r, lo_l), min(hi_r, hi_l)  # both enclose the same lambda
    r, l, first1 = _normalize_pair(r_raw, l_raw)
    lam = 0.5 * (lo + hi)
    residual = float(np.max(np.abs(B @ r - lam * r)))
    return PerronData(lambda_lo=lo, lambda_hi=hi, r=r, l=l, residual=residual,
                      iterations=it_r + it_l, first_entry_one=first1)


def _normalize_pair(r_raw: np.ndarray, l_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    # first-entry-1 normalization unless it would overflow (tiny first entry)
    r_raw = r_raw / r_raw.max()
    l_raw = l_raw / l_raw.max()
    if r_raw[0] > 1e-290 and l_raw[0] > 1e-290:
        return r_raw / r_raw[0], l_raw / l_raw[0], True
    return r_raw, l_raw, False


def perron_sparse(B, tol: float, max_factorizations: int = 30,
                  r0: np.ndarray | None = None, l0: np.ndarray | None = None) -> PerronData:
    """Certified Perron eigendata for a large sparse nonnegative matrix.

    The Collatz-Wielandt quotients are valid at every positive vector, so
    the iterate can come from any accelerator; here certified inverse
    iteration is used: with sigma slightly above lambda_hi the resolvent
    (sigma I - B)^-1 = sum_k B^k / sigma^(k+1) is entrywise nonnegative,
    and tightening sigma toward the enclosure makes convergence
    superlinear even when the power-iteration gap is tiny.  Pattern
    irreducibility is the caller's responsibility (checking it on huge
    graphs costs as much as the solve).
    """
    from scipy.sparse import csr_matrix, identity, issparse
    from scipy.sparse.linalg import splu

    if not issparse(B):
        B = csr_matrix(B)
    B = B.tocsr()
    d = B.shape[0]
    if tol <= 0:
        raise ValueError("tol must be positive")
    slack_rel = FP_SLACK_FACTOR * d * _EPS
    lam_upper = float(B.sum(axis=1).max())
    if 2 * slack_rel * max(lam_upper, 1.0) >= tol:
        raise ValueError(
            f"tolerance unreachable: fp slack {2 * slack_rel * lam_upper:.3e} >= tol {tol:.3e}")
    eye = identity(d, format="csc")

    def floor_pos(x: np.ndarray) -> np.ndarray:
        # any strictly positive vector yields valid quotients
        return np.maximum(x, 1e-300)

    def cw(mat, x) -> tuple[float, float]:
        q = (mat @ x) / x
        return float(q.min()) * (1 - slack_rel), float(q.max()) * (1 + slack_rel)

    def enclose(mat, seed: np.ndarray | None) -> tuple[float, float, np.ndarray, int]:
        from scipy.sparse.linalg import eigs

        if seed is not None and seed.shape == (d,) and np.all(np.isfinite(seed)) and seed.min() > 0:
            x = seed / seed.max()
        else:
            x = np.ones(d)
        for _ in range(30):
            x = floor_pos(x + mat @ x)
            x /= x.max()
        if d > 50 and seed is None:
            try:
                _, vec = eigs(mat + eye, k=1, which="LM", v0=x, tol=1e-8,
                              ncv=min(d, 32), maxiter=2000)
                cand = np.abs(np.real(vec[:, 0]))
                if np.all(np.isfinite(cand)) and cand.max() > 0:
                    x = floor_pos(cand / cand.max())
            except Exception:
                pass  # Krylov seed is an accelerator only
        lo, hi = cw(mat, x)
        factorizations = 0
        csc = mat.tocsc()
        # sigma ladder: hi >= lambda is rigorous, so any sigma > hi keeps
        # sigma*I - B an M-matrix; stepping sigma geometrically toward hi
        # breaks through clustered subdominant spectra
        for k in range(max_factorizations):
            if hi - lo <= tol:
                break
            sigma = hi + max(0.25 * tol, (hi - lo) * 4.0**-k, 4 * slack_rel * max(hi, 1.0))
            try:
                lu = splu(sigma * eye - csc)
            except RuntimeError:
                continue
            factorizations += 1
            stalls = 0
            while stalls < 2:
                prev = hi - lo
                y = lu.solve(x)
                if not np.all(np.isfinite(y)) or y.max() <= 0:
                    break
                x = floor_pos(np.abs(y))
                x /= x.max()
                cur_lo, cur_hi = cw(mat, x)
                lo, hi = max(lo, cur_lo), min(hi, cur_hi)
                if hi - lo <= tol:
                    break
                stalls = stalls + 1 if hi - lo > 0.99 * prev else 0
        if hi - lo > tol:
            raise RuntimeError(
                f"perron_sparse failed to reach width {tol} after {factorizations} factorizations")
        return lo, hi, x, factorizations

    lo_r, hi_r, r_raw, it_r = enclose(B, r0)
    lo_l, hi_l, l_raw, it_l = enclose(B.T.tocsr(), l0)
    lo, hi = max(lo_r, lo_l), min(hi_r, hi_l)
    r, l, first1 = _normalize_pair(r_raw, l_raw)
    lam = 0.5 * (lo + hi)
    residual = float(np.max(np.abs(B @ r - lam * r)))
    return PerronData(lambda_lo=lo, lambda_hi=hi, r=r, l=l, residual=residual,
                      iterations=it_r + it_l, first_entry_one=first1)


def perron_maximin_oracle(B, grid_density: int = 200) -> float:
    """Maximin evaluation over a first-orthant sphere grid (test oracle).

    Restricted to d <= 3 for cost control; returns a lower bound that
    converges to the Perron eigenvalue as the grid refines.
    """
    B = np.asarray(B, dtype=float)
    d = B.shape[0]
    if d > 3:
        raise ValueError("maximin oracle restricted to d <= 3")
    if not _pattern_irreducible(B):
        raise ValueError("not irreducible")
    C = np.linalg.matrix_power(np.eye(d) + B, d - 1)
    best = -np.inf
    n = grid_density
    # directions on the first-orthant simplex; the quotient is scale-free
    if d == 1:
        grid = [np.array([1.0])]
    else:
        grid = []
        for combo in product(range(n + 1), repeat=d - 1):
            rest = n - sum(combo)
            if rest < 0:
                continue
            grid.append(np.array(combo + (rest,), dtype=float) / n)
    for x in grid:
        if not x.any():
            continue
        y = C @ x
        best = max(best, float(np.min((B @ y) / y)))
    return best

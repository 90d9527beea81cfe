"""Localized entropy at interior points of the rotation set.

The sandwich driver brackets H(w) between the minimum and maximum local
entropies of locally constant approximations over shrinking balls.  With a
valid schedule the upper estimates decrease from the start and the lower
estimates increase once the inflated ball is certified interior, so running
intersections enclose H(w); iteration stops when the certified width drops
below twice the requested tolerance.

Grid moduli are estimated from divided differences on an adaptively
refined cell tree (the certified alternative would require global moduli
of continuity for v -> entropy and v -> rv); the estimation gap is carried
in named slack fields of the trace, never absorbed silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import CapExceeded, EnclosureTooWide, NotCertified
from .potentials import LcPotential, PotentialOracle, lc_approximate, oracle_from_lc
from .polytope import interior_radius_for_oracle, interior_radius_via_periodic
from .sft import Sft
from .thermo import EquilibriumSolver, topological_entropy

#: multiplier on divided-difference variation estimates (heuristic moduli)
VAR_SAFETY = 2.0

DEFAULT_GRID_CAP = 300_000


# ---------------------------------------------------------------------------
# Schedules.


@dataclass(frozen=True)
class Schedule:
    """Approximation accuracies eps_n with the ratio conditions that make
    the upper estimates decreasing and the lower estimates increasing."""

    alpha: float
    eps: tuple[float, ...]
    m: int
    r_min: float

    def __post_init__(self):
        a, m = self.alpha, self.m
        r = 2.0 * math.sqrt(m)
        if not a > 1:
            raise ValueError("alpha must exceed 1")
        if not a > r:
            raise ValueError(f"alpha must exceed 2*sqrt(m) = {r}")
        for e, e_next in zip(self.eps, self.eps[1:]):
            if not 0 < e_next < e:
                raise ValueError("eps must be strictly decreasing and positive")
            if not e_next < (a - 1) / (a + 1) * e:
                raise ValueError("ratio condition for decreasing upper estimates violated")
            if not e_next < (a - r) / (a * r) * e:
                raise ValueError("ratio condition for increasing lower estimates violated")
            if not e_next < (a - r) / (2 * a * math.sqrt(m)) * e:
                raise ValueError("subsequence ratio condition violated")
        for e in self.eps:
            if not e < self.r_min / a:
                raise ValueError("eps must stay below r_min / alpha")

    def interiority_level(self) -> int:
        """First level where the 2*sqrt(m)*alpha*eps_n ball is certified
        inside the rotation set; lower estimates are trusted from here on."""
        bound = 2.0 * math.sqrt(self.m) * self.alpha
        for n, e in enumerate(self.eps, start=1):
            if bound * e < self.r_min:
                return n
        return len(self.eps) + 1


def build_schedule(m: int, r_min: float, levels: int) -> Schedule:
    """Default schedule: alpha = ceil(2 sqrt m) + 1, eps_1 = r_min/(2 alpha),
    dyadic ratio at 80% of the binding ratio bound (margin left for the
    grid-modulus perturbation of the ball radius)."""
    if r_min <= 0:
        raise ValueError("r_min must be positive")
    alpha = float(math.ceil(2.0 * math.sqrt(m)) + 1)
    r = 2.0 * math.sqrt(m)
    bound = min((alpha - 1) / (alpha + 1), (alpha - r) / (alpha * r),
                (alpha - r) / (2 * alpha * math.sqrt(m)))
    ratio = 2.0 ** math.floor(math.log2(0.8 * bound))
    eps1 = r_min / (2.0 * alpha)
    eps = tuple(eps1 * ratio**i for i in range(levels))
    return Schedule(alpha=alpha, eps=eps, m=m, r_min=r_min)


# ---------------------------------------------------------------------------
# Elementary estimates.


def v_ball_radius(h_top_hi: float, r_min: float) -> float:
    """Norm bound 2 h_top / r for directions whose equilibrium state sits
    at distance >= r from the boundary of the rotation set."""
    if r_min <= 0:
        raise ValueError("r_min must be positive")
    return 2.0 * h_top_hi / r_min


def cover_ball(R: float, delta: float, m: int, cap: int = DEFAULT_GRID_CAP) -> np.ndarray:
    """Lattice covering of the closed ball B(0, R) at covering radius < delta.

    Axis-aligned lattice of spacing 2*delta/sqrt(m) (shrunk by a hair so
    the covering is strict), clipped to norm <= R + delta.
    """
    if R <= 0 or delta <= 0:
        raise ValueError("R and delta must be positive")
    spacing = (2.0 * delta / math.sqrt(m)) * (1.0 - 1e-9)
    kmax = int(math.floor((R + delta) / spacing))
    count = (2 * kmax + 1) ** m
    if count > cap:
        raise CapExceeded("cover_ball", cap, required=count)
    axes = [np.arange(-kmax, kmax + 1) * spacing] * m
    grid = np.array(list(product(*axes)))
    keep = np.linalg.norm(grid, axis=1) <= R + delta
    return grid[keep]


def surrounding_points(w0: Sequence[float], eps: float, m: int) -> np.ndarray:
    """The 2**m sign-pattern points w0 +- 2 eps per coordinate; any
    per-point perturbation below eps keeps B(w0, eps) inside their hull."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    w0 = np.asarray(w0, dtype=float).reshape(m)
    return np.array([w0 + 2.0 * eps * np.array(signs) for signs in product((-1.0, 1.0), repeat=m)])


# ---------------------------------------------------------------------------
# Local entropy bounds over a grid of directions.


@dataclass(frozen=True)
class LevelSlack:
    """Named additive slacks; the enclosure inflates by their sum."""

    rv_grid: float
    h_grid: float
    equilibrium: float

    @property
    def total_h(self) -> float:
        return self.h_grid + self.equilibrium


def local_entropy_bounds(
    s: Sft,
    phi_eps: LcPotential,
    w: Sequence[float],
    s_rad: float,
    grid: Sequence[Sequence[float]],
    solver: EquilibriumSolver | None = None,
) -> tuple[float, float, LevelSlack]:
    """Bracket the min/max local entropy of phi_eps over the closed ball
    B(w, s_rad) by equilibrium sweeps over an explicit direction grid.

    Grid moduli are estimated by nearest-neighbor divided differences.
    Raises ValueError when no grid equilibrium lands near the ball.
    """
    w = np.asarray(w, dtype=float).reshape(phi_eps.m)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if solver is None:
        solver = EquilibriumSolver(s, phi_eps)
    recs = [solver.solve(v) for v in grid]
    rvs = np.array([r.rv for r in recs])
    hs = np.array([r.entropy for r in recs])
    eq_err = max(r.err for r in recs)
    if len(recs) == 1:
        rv_slack = h_slack = 0.0
    else:
        from scipy.spatial import cKDTree

        tree = cKDTree(grid)
        dist, idx = tree.query(grid, k=2)
        nb_dist = dist[:, 1]
        nb_idx = idx[:, 1]
        spacing = float(nb_dist.max())
        cover_rad = spacing * math.sqrt(phi_eps.m) / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            l_rv = np.linalg.norm(rvs - rvs[nb_idx], axis=1) / nb_dist
            l_h = np.abs(hs - hs[nb_idx]) / nb_dist
        rv_slack = VAR_SAFETY * float(np.nanmax(l_rv)) * cover_rad
        h_slack = VAR_SAFETY * float(np.nanmax(l_h)) * cover_rad
    sel = np.linalg.norm(rvs - w, axis=1) < s_rad + rv_slack + eq_err
    if not np.any(sel):
        raise ValueError("ball does not meet interior image")
    if any(recs[i].clipped for i in np.nonzero(sel)[0]):
        raise EnclosureTooWide("selected direction hit the exponent clip")
    slack = LevelSlack(rv_grid=rv_slack + eq_err, h_grid=h_slack, equilibrium=eq_err)
    return float(hs[sel].min()), float(hs[sel].max()), slack


# ---------------------------------------------------------------------------
# Adaptive cell refinement (driver internals).


@dataclass
class _Cell:
    center: np.ndarray
    half: float


class _AdaptiveSweep:
    """Refines cells of the direction ball until the divided-difference
    variation of rv per cell is below budget, dropping cells whose image
    provably (up to the heuristic moduli) misses the target shell."""

    def __init__(self, solver: EquilibriumSolver, cap: int = DEFAULT_GRID_CAP,
                 eval_tol: float = 1e-9):
        self.solver = solver
        self.cap = cap
        self.eval_tol = eval_tol
        self.cache: dict[tuple, object] = {}

    def _eval(self, v: np.ndarray):
        key = tuple(v.tolist())
        rec = self.cache.get(key)
        if rec is None:
            try:
                rec = self.solver.solve(v, tol=self.eval_tol)
            except RuntimeError:
                # far corners of the direction ball can be numerically
                # unresolvable at full precision; a loose solve still gives
                # valid (wider) enclosures, enough for drop decisions
                rec = self.solver.solve(v, tol=1e-3)
            if len(self.cache) >= self.cap:
                raise CapExceeded("adaptive direction sweep", self.cap)
            self.cache[key] = rec
        return rec

    def bounds(self, w: np.ndarray, s_rad: float, R: float,
               rv_budget: float, h_budget: float) -> tuple[float, float, LevelSlack, int]:
        m = self.solver.m
        signs = np.array(list(product((-1.0, 1.0), repeat=m)))
        min_half = 1e-13 * max(R, 1.0)
        queue = [_Cell(center=np.zeros(m), half=float(R))]
        kept: list[tuple[object, float, float]] = []  # (record, rv_var, h_var)
        while queue:
            cell = queue.pop()
            rec = self._eval(cell.center)
            corners = [self._eval(cell.center + cell.half * sgn) for sgn in signs]
            rv_var = VAR_SAFETY * max(
                float(np.linalg.norm(c.rv - rec.rv)) for c in corners)
            h_var = VAR_SAFETY * max(abs(c.entropy - rec.entropy) for c in corners)
            dist = float(np.linalg.norm(rec.rv - w))
            if dist > s_rad + rv_var + rec.err:
                continue
            if (rv_var > rv_budget or h_var > h_budget) and cell.half > min_half:
                h2 = cell.half / 2.0
                for sgn in signs:
                    queue.append(_Cell(center=cell.center + h2 * sgn, half=h2))
                continue
            kept.append((rec, rv_var, h_var))
        if not kept:
            raise ValueError("ball does not meet interior image")
        sel = [(rec, rv_var, h_var) for rec, rv_var, h_var in kept
               if float(np.linalg.norm(rec.rv - w)) < s_rad + rv_var + rec.err]
        if not sel:
            raise ValueError("ball does not meet interior image")
        if any(rec.clipped for rec, _, _ in sel):
            raise EnclosureTooWide("selected direction hit the exponent clip")
        hs = [rec.entropy for rec, _, _ in sel]
        slack = LevelSlack(
            rv_grid=max(rv_var for _, rv_var, _ in sel),
            h_grid=max(h_var for _, _, h_var in sel),
            equilibrium=max(rec.err for rec, _, _ in sel),
        )
        return min(hs), max(hs), slack, len(self.cache)


# ---------------------------------------------------------------------------
# The sandwich driver.


@dataclass(frozen=True)
class LevelRecord:
    n: int
    eps: float
    ball_radius: float
    l_raw: float
    u_raw: float
    slack: LevelSlack
    grid_size: int
    lower_valid: bool
    l_run: float
    u_run: float


@dataclass(frozen=True)
class EntropyEnclosure:
    """Certified interval [l, u] around H(w) with the per-level trace."""

    w: np.ndarray
    l: float
    u: float
    tol: float
    trace: tuple[LevelRecord, ...]
    converged: bool

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.l + self.u)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.u - self.l)


def _as_oracle(potential: LcPotential | PotentialOracle) -> tuple[PotentialOracle, LcPotential | None]:
    if isinstance(potential, LcPotential):
        return oracle_from_lc(potential), potential
    return potential, None


def localized_entropy(
    s: Sft,
    potential: LcPotential | PotentialOracle,
    w: Sequence[float],
    tol: float,
    r_min: float | None = None,
    max_levels: int = 40,
    grid_cap: int = DEFAULT_GRID_CAP,
) -> EntropyEnclosure:
    """Certified enclosure of the localized entropy H(w) at an interior w.

    The point is certified interior through the periodic-orbit hull unless
    a radius r_min is supplied by the caller.  Raises NotCertified when
    interiority cannot be established.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    oracle, lc = _as_oracle(potential)
    m = oracle.m
    w = np.asarray(w, dtype=float).reshape(m)
    if r_min is None:
        try:
            if lc is not None:
                r_min = interior_radius_via_periodic(s, lc, w)
            else:
                r_min = interior_radius_for_oracle(oracle, w)
        except NotCertified as e:
            raise NotCertified(f"not certified interior: {e}") from e
    h_top_hi = topological_entropy(s, tol=1e-12)[1]
    # ball points keep distance >= r_min/3 from the boundary of every
    # approximation's rotation set under the default schedule
    R = v_ball_radius(h_top_hi, r_min / 3.0)
    sched = build_schedule(m, r_min, max_levels)
    n0 = sched.interiority_level()
    u_run, l_run = math.inf, 0.0  # entropies are nonnegative
    trace: list[LevelRecord] = []
    solver_cache: EquilibriumSolver | None = None
    for n, eps_n in enumerate(sched.eps, start=1):
        if lc is not None:
            phi_eps = lc
            if solver_cache is None:
                solver_cache = EquilibriumSolver(s, phi_eps)
            solver = solver_cache
        else:
            phi_eps = lc_approximate(oracle, eps_n)
            solver = EquilibriumSolver(s, phi_eps)
        rv_budget = eps_n / 8.0
        h_budget = tol / 4.0
        eval_tol = min(max(min(rv_budget, h_budget) / 100.0, 1e-13), 1e-7)
        sweep = _AdaptiveSweep(solver, cap=grid_cap, eval_tol=eval_tol)
        s_rad = sched.alpha * eps_n
        l_raw, u_raw, slack, nevals = sweep.bounds(
            w, s_rad, R, rv_budget=rv_budget, h_budget=h_budget)
        lower_valid = n >= n0
        u_run = min(u_run, u_raw + slack.total_h)
        if lower_valid:
            l_run = max(l_run, l_raw - slack.total_h)
        l_run = min(l_run, u_run)  # enclosures must intersect
        trace.append(LevelRecord(n=n, eps=eps_n, ball_radius=s_rad, l_raw=l_raw,
                                 u_raw=u_raw, slack=slack, grid_size=nevals,
                                 lower_valid=lower_valid, l_run=l_run, u_run=u_run))
        if u_run - l_run <= 2.0 * tol:
            return EntropyEnclosure(w=w, l=l_run, u=u_run, tol=tol,
                                    trace=tuple(trace), converged=True)
    return EntropyEnclosure(w=w, l=l_run, u=u_run, tol=tol, trace=tuple(trace),
                            converged=False)


# ---------------------------------------------------------------------------
# Fast paths: convex duality and rotation-vector solves.


def _pressure_objective(solver: EquilibriumSolver, w: np.ndarray, tol: float):
    def fun(v: np.ndarray):
        rec = solver.solve(v, tol=tol)
        return rec.pressure - float(v @ w), rec.rv - w

    return fun


def legendre_entropy(
    s: Sft,
    phi: LcPotential,
    w: Sequence[float],
    tol: float = 1e-6,
    r_min: float | None = None,
) -> float:
    """inf_v [pressure(v . phi) - v . w], the convex dual of H at interior w.

    Convexity certifies the value: the gap to the infimum over the
    direction ball is at most the gradient norm times the ball diameter.
    """
    w = np.asarray(w, dtype=float).reshape(phi.m)
    if r_min is None:
        r_min = interior_radius_via_periodic(s, phi, w)
    h_top_hi = topological_entropy(s, tol=1e-12)[1]
    R = v_ball_radius(h_top_hi, r_min)
    solver = EquilibriumSolver(s, phi)
    fun = _pressure_objective(solver, w, tol=1e-12)
    gtol = tol / (4.0 * R * math.sqrt(phi.m))
    res = minimize(fun, np.zeros(phi.m), jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 0.0, "maxiter": 500})
    value, grad = fun(res.x)
    if float(np.linalg.norm(grad)) * 2.0 * R > tol:
        raise NotCertified("duality gap certificate above tolerance")
    return float(value)


def solve_rotation_vector(
    s: Sft,
    phi: LcPotential,
    w: Sequence[float],
    tol: float = 1e-9,
    r_min: float | None = None,
) -> np.ndarray:
    """Direction v with rv(mu_{v . phi}) within tol of w (fast path).

    Solved as the gradient zero of the convex dual objective; divergence
    (e.g. boundary w) raises NotCertified so callers can fall back to the
    certified grid method.
    """
    w = np.asarray(w, dtype=float).reshape(phi.m)
    solver = EquilibriumSolver(s, phi)
    fun = _pressure_objective(solver, w, tol=1e-12)
    res = minimize(fun, np.zeros(phi.m), jac=True, method="L-BFGS-B",
                   options={"gtol": 1e-14, "ftol": 0.0, "maxiter": 1000})
    rec = solver.solve(res.x)
    if float(np.linalg.norm(rec.rv - w)) > tol:
        raise NotCertified(
            f"rotation vector solve diverged: residual {np.linalg.norm(rec.rv - w):.3e}")
    return np.asarray(res.x, dtype=float).reshape(phi.m)

"""Bayesian-Nash equilibria of the two-player game in choice-probability
space.

All equilibria are enumerated through the one-dimensional composed best
response r(p1) = p1 - BR1(BR2(p1)), which is exhaustive for 2x2 games. A
vectorized solver for panels of markets lives here as well; the simulation
and estimation modules share it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from ._kernels import solve_g_kernel
from .errors import DataValidationError, NumericalError
from .model import ChoiceProbPair, GameInstance, PriorSpec
from .ricore import (
    DEFAULT_NODES,
    QuadratureRule,
    _check_v,
    _node_exponentials,
    psi_many,
    rule_for_prior,
    solve_G_many,
)

RESIDUAL_TOL = 1e-10
DEDUP_TOL = 1e-7
_FD_STEP = 1e-6


def game_rules(game: GameInstance, n: int = DEFAULT_NODES) -> tuple[QuadratureRule, QuadratureRule]:
    return rule_for_prior(game.priors[0], n), rule_for_prior(game.priors[1], n)


# ---------------------------------------------------------------------------
# pointwise operations


def psi_pair(p, game: GameInstance) -> ChoiceProbPair:
    """One application of the self-referential fixed-point map to a pair of
    choice probabilities."""
    p = ChoiceProbPair(*p).validate()
    r1, r2 = game_rules(game)
    v1 = game.pi(0) + game.delta(0) * p.p2
    v2 = game.pi(1) + game.delta(1) * p.p1
    a = psi_many([p.p1], [v1], game.lam[0], r1)[0]
    b = psi_many([p.p2], [v2], game.lam[1], r2)[0]
    return ChoiceProbPair(float(a), float(b))


def best_response(p_rival: float, player: int, game: GameInstance) -> float:
    """Optimal own choice probability against a rival entry probability."""
    if not 0.0 <= p_rival <= 1.0:
        raise DataValidationError(f"p_rival must be in [0,1], got {p_rival}")
    rule = rule_for_prior(game.priors[player])
    v = game.pi(player) + game.delta(player) * p_rival
    p, _, _, _ = solve_G_many([v], game.lam[player], rule)
    return float(p[0])


def best_response_many(p_rival, player: int, game: GameInstance) -> np.ndarray:
    rule = rule_for_prior(game.priors[player])
    v = game.pi(player) + game.delta(player) * np.asarray(p_rival, dtype=float)
    p, _, _, _ = solve_G_many(v, game.lam[player], rule)
    return p


# ---------------------------------------------------------------------------
# equilibrium enumeration


@dataclass(frozen=True)
class EquilibriumPoint:
    p: ChoiceProbPair
    residual: float
    jacobian: tuple[tuple[float, float], tuple[float, float]]
    minors: dict
    unique_flags: dict
    one_sided_fd: bool


@dataclass(frozen=True)
class EquilibriumSet:
    points: tuple[EquilibriumPoint, ...]

    @property
    def probabilities(self) -> list[ChoiceProbPair]:
        return [pt.p for pt in self.points]

    @property
    def is_unique(self) -> bool:
        return len(self.points) == 1


def _composed_residual(p1_grid: np.ndarray, game: GameInstance) -> np.ndarray:
    br2 = best_response_many(p1_grid, 1, game)
    br1 = best_response_many(br2, 0, game)
    return p1_grid - br1


def _refine_root(lo: float, hi: float, game: GameInstance) -> float:
    rlo = _composed_residual(np.array([lo]), game)[0]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        rm = _composed_residual(np.array([mid]), game)[0]
        if rm == 0.0:
            return mid
        if (rm < 0.0) == (rlo < 0.0):
            lo, rlo = mid, rm
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def uniqueness_diagnostics(p, game: GameInstance, step: float = _FD_STEP) -> dict:
    """Principal minors of I - grad(Psi) at an equilibrium, by central
    finite differences clipped to [0,1] (one-sided at corners, flagged)."""
    p = ChoiceProbPair(*p).validate()
    base = np.array(p, dtype=float)
    check = psi_pair(p, game)
    if max(abs(check.p1 - p.p1), abs(check.p2 - p.p2)) > 1e-8:
        raise DataValidationError("diagnostics need a point that is an equilibrium")
    jac = np.zeros((2, 2))
    one_sided = False
    for k in range(2):
        up = min(base[k] + step, 1.0)
        dn = max(base[k] - step, 0.0)
        if up - dn < step:
            one_sided = True
        pu = base.copy()
        pd = base.copy()
        pu[k], pd[k] = up, dn
        fu = np.array(psi_pair(tuple(pu), game))
        fd = np.array(psi_pair(tuple(pd), game))
        jac[:, k] = (fu - fd) / (up - dn)
    m11 = 1.0 - jac[0, 0]
    m22 = 1.0 - jac[1, 1]
    det = m11 * m22 - jac[0, 1] * jac[1, 0]
    return {
        "jacobian": jac,
        "minors": {"m11": m11, "m22": m22, "det": det},
        "unique_flags": {"m11_pos": m11 > 0.0, "m22_pos": m22 > 0.0, "det_pos": det > 0.0},
        "one_sided_fd": one_sided,
    }


def find_equilibria(game: GameInstance, grid_n: int = 401) -> EquilibriumSet:
    """All fixed points of the best-response composition.

    Sign-change scan of r(p1) = p1 - BR1(BR2(p1)) on a uniform grid plus
    bisection refinement; every root is validated through the fixed-point
    map. At least one equilibrium always exists.
    """
    if grid_n < 3:
        raise DataValidationError("grid_n must be at least 3")
    grid = np.linspace(0.0, 1.0, grid_n)
    r = _composed_residual(grid, game)
    roots: list[float] = []
    for k in range(grid_n):
        if r[k] == 0.0:
            roots.append(grid[k])
        if k + 1 < grid_n and r[k] * r[k + 1] < 0.0:
            roots.append(_refine_root(grid[k], grid[k + 1], game))
    deduped: list[float] = []
    for root in sorted(roots):
        if not deduped or root - deduped[-1] > DEDUP_TOL:
            deduped.append(root)
    if not deduped:
        raise NumericalError(
            "no equilibrium found; existence is guaranteed, so this "
            "indicates a numerical fault in the scan"
        )
    points = []
    for p1 in deduped:
        p2 = best_response(p1, 1, game)
        pair = ChoiceProbPair(p1, p2)
        mapped = psi_pair(pair, game)
        residual = max(abs(mapped.p1 - p1), abs(mapped.p2 - p2))
        if residual > RESIDUAL_TOL:
            raise NumericalError(f"equilibrium candidate failed validation: residual {residual:.2e}")
        diag = uniqueness_diagnostics(pair, game)
        points.append(
            EquilibriumPoint(
                p=pair,
                residual=residual,
                jacobian=tuple(map(tuple, diag["jacobian"])),
                minors=diag["minors"],
                unique_flags=diag["unique_flags"],
                one_sided_fd=diag["one_sided_fd"],
            )
        )
    return EquilibriumSet(tuple(points))


def best_response_curves(game: GameInstance, grid_n: int = 401) -> dict:
    """Both best responses tabulated against the rival probability."""
    if grid_n < 2:
        raise DataValidationError("grid_n must be at least 2")
    grid = np.linspace(0.0, 1.0, grid_n)
    return {
        "p_rival": grid,
        "br1": best_response_many(grid, 0, game),
        "br2": best_response_many(grid, 1, game),
    }


# ---------------------------------------------------------------------------
# batched solver over markets


@lru_cache(maxsize=128)
def _gprime_max_cached(family: str, p1: float, p2: float, n: int, lam: float) -> float:
    """Upper bound on dG/dv for one prior and unit cost, with padding."""
    rule = rule_for_prior(PriorSpec(family, p1, p2), n)
    logw = np.log(rule.weights)
    v0 = -lam * logsumexp(logw + rule.nodes / lam)
    v1 = lam * logsumexp(logw - rule.nodes / lam)
    if not (math.isfinite(v0) and math.isfinite(v1)) or v1 <= v0:
        return math.inf
    grid = np.linspace(v0, v1, 401)[1:-1]
    _, _, gp, _ = solve_G_many(grid, lam, rule)
    return float(gp.max()) * 1.05


def gprime_max(rule: QuadratureRule, lam: float) -> float:
    return _gprime_max_cached(rule.prior.family, rule.prior.param1, rule.prior.param2, rule.n, lam)


class PanelSolver:
    """Equilibrium choice probabilities for a panel of markets.

    Holds the per-player quadrature rules and the warm state reused across
    repeated solves at nearby payoffs (the hot path inside estimation).
    """

    def __init__(self, rules: tuple[QuadratureRule, QuadratureRule], lam=(1.0, 1.0)):
        self.rules = rules
        self.lam = (float(lam[0]), float(lam[1]))
        self.warm: tuple[np.ndarray, np.ndarray] | None = None

    def reset(self, warm=None):
        self.warm = None if warm is None else (np.array(warm[0], dtype=float), np.array(warm[1], dtype=float))

    def _solve_g(self, v, player, warm):
        rule = self.rules[player]
        lam = self.lam[player]
        v = np.ascontiguousarray(v, dtype=float)
        _check_v(v)
        ek = _node_exponentials(rule.prior.family, rule.prior.param1, rule.prior.param2, rule.n, lam)
        fast_ok = ek is not None
        if ek is None:
            ek = np.empty(0)
        m = v.shape[0]
        p = np.empty(m)
        corner = np.empty(m, dtype=np.int8)
        gp = np.empty(m)
        res = np.empty(m)
        solve_g_kernel(v, lam, rule.nodes, rule.weights, ek, fast_ok, warm,
                       1e-13, 200, p, corner, gp, res)
        return p, corner, gp

    def _bisect_cold(self, pi1, de1, pi2, de2, start_lo=True, iters=55):
        m = len(pi1)
        lo = np.zeros(m)
        hi = np.ones(m)
        half = np.full(m, 0.5)
        p2 = half.copy()
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            p2, _, _ = self._solve_g(pi2 + de2 * mid, 1, p2)
            br1, _, _ = self._solve_g(pi1 + de1 * p2, 0, half)
            r = mid - br1
            lo = np.where(r <= 0.0, mid, lo)
            hi = np.where(r > 0.0, mid, hi)
        p1 = 0.5 * (lo + hi)
        return p1, p2

    def solve(self, pi1, de1, pi2, de2, tol=1e-13, max_outer=60):
        """Solve the panel fixed point; Newton on the composed response from
        the stored warm state, bisection from cold. Returns
        (p1, p2, corner1, corner2)."""
        pi1 = np.ascontiguousarray(pi1, dtype=float)
        pi2 = np.ascontiguousarray(pi2, dtype=float)
        de1 = np.broadcast_to(np.asarray(de1, dtype=float), pi1.shape)
        de2 = np.broadcast_to(np.asarray(de2, dtype=float), pi2.shape)
        m = len(pi1)
        if self.warm is None or len(self.warm[0]) != m:
            p1, p2 = self._bisect_cold(pi1, de1, pi2, de2)
        else:
            p1, p2 = self.warm[0].copy(), self.warm[1].copy()
        c1 = c2 = None
        for _ in range(max_outer):
            p2, c2, g2 = self._solve_g(pi2 + de2 * p1, 1, p2)
            br1, c1, g1 = self._solve_g(pi1 + de1 * p2, 0, p1)
            r = p1 - br1
            worst = np.abs(r).max() if m else 0.0
            if worst < tol:
                p1 = br1
                break
            mprime = g1 * de1 * g2 * de2
            denom = 1.0 - mprime
            step = np.where(np.abs(denom) > 1e-8, r / denom, r)
            p1 = np.clip(p1 - step, 0.0, 1.0)
        else:
            # Newton did not settle everywhere; fall back to bisection for
            # the stragglers and re-polish once.
            p1b, p2b = self._bisect_cold(pi1, de1, pi2, de2)
            bad = np.abs(p1 - br1) >= tol
            p1 = np.where(bad, p1b, p1)
            p2, c2, _ = self._solve_g(pi2 + de2 * p1, 1, p2)
            p1, c1, _ = self._solve_g(pi1 + de1 * p2, 0, p1)
        self.warm = (p1.copy(), p2.copy())
        return p1, p2, c1, c2

    def certify_unique(self, pi1, de1, pi2, de2):
        """Per-market uniqueness certificate.

        Opposite-sign strategic effects are unique outright; same-sign
        markets are certified by the contraction bound on the composed
        slope, and any remainder by monotone iteration from both ends of
        [0,1], which brackets the extreme equilibria.
        """
        pi1 = np.ascontiguousarray(pi1, dtype=float)
        pi2 = np.ascontiguousarray(pi2, dtype=float)
        de1 = np.broadcast_to(np.asarray(de1, dtype=float), pi1.shape).copy()
        de2 = np.broadcast_to(np.asarray(de2, dtype=float), pi2.shape).copy()
        m = len(pi1)
        unique = np.zeros(m, dtype=bool)
        unique |= de1 * de2 <= 0.0
        bound = np.abs(de1 * de2) * gprime_max(self.rules[0], self.lam[0]) * gprime_max(self.rules[1], self.lam[1])
        unique |= bound < 0.95
        todo = ~unique
        gap = np.zeros(m)
        if todo.any():
            idx = np.where(todo)[0]
            lo = self._monotone_end(pi1[idx], de1[idx], pi2[idx], de2[idx], from_one=False)
            hi = self._monotone_end(pi1[idx], de1[idx], pi2[idx], de2[idx], from_one=True)
            gap[idx] = np.abs(hi - lo)
            unique[idx] = gap[idx] <= 1e-6
        return unique, gap

    def _monotone_end(self, pi1, de1, pi2, de2, from_one, iters=400, tol=1e-13):
        p1 = np.ones(len(pi1)) if from_one else np.zeros(len(pi1))
        p2 = np.full(len(pi1), 0.5)
        for _ in range(iters):
            p2, _, _ = self._solve_g(pi2 + de2 * p1, 1, p2)
            p1n, _, _ = self._solve_g(pi1 + de1 * p2, 0, p1)
            if np.abs(p1n - p1).max() < tol:
                return p1n
            p1 = p1n
        return p1


def solve_game(game: GameInstance, n_nodes: int = DEFAULT_NODES):
    """Single-market convenience wrapper around the panel solver."""
    solver = PanelSolver(game_rules(game, n_nodes), game.lam)
    p1, p2, c1, c2 = solver.solve(
        np.array([game.pi(0)]), np.array([game.delta(0)]),
        np.array([game.pi(1)]), np.array([game.delta(1)]),
    )
    return ChoiceProbPair(float(p1[0]), float(p2[0]))

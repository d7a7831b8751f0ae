"""Single-agent costly-information machinery.

Covers quadrature over the shock prior, the optimal conditional choice
rule, the map G from deterministic payoff to unconditional choice
probability together with its inverse, and entropy / mutual-information
metrics.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite, roots_legendre

from ._kernels import psi_kernel, solve_g_kernel
from .errors import DataValidationError, NumericalError
from .model import NORMAL, UNIFORM, PriorSpec

DEFAULT_NODES = 64
_SOLVE_TOL = 1e-13
_SOLVE_MAXIT = 200


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and probability weights realizing expectations under a prior.

    Gauss-Hermite for normal priors, Gauss-Legendre for uniform priors;
    weights sum to one.
    """

    nodes: np.ndarray
    weights: np.ndarray
    prior: PriorSpec

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise DataValidationError("nodes and weights must be matching 1-d arrays")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DataValidationError("weights must be nonnegative and sum to 1")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def expect(self, values) -> float:
        """Expectation of a function tabulated on the nodes."""
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=64)
def _rule_cached(family: str, p1: float, p2: float, n: int):
    if family == NORMAL:
        x, w = roots_hermite(n)
        nodes = p1 + math.sqrt(2.0 * p2) * x
        weights = w / math.sqrt(math.pi)
    else:
        x, w = roots_legendre(n)
        nodes = 0.5 * (p1 + p2) + 0.5 * (p2 - p1) * x
        weights = 0.5 * w
    weights = weights / weights.sum()
    return nodes, weights


def rule_for_prior(prior: PriorSpec, n: int = DEFAULT_NODES) -> QuadratureRule:
    if n < 2:
        raise DataValidationError("need at least 2 quadrature nodes")
    nodes, weights = _rule_cached(prior.family, prior.param1, prior.param2, n)
    return QuadratureRule(nodes, weights, prior)


@lru_cache(maxsize=256)
def _node_exponentials(family: str, p1: float, p2: float, n: int, lam: float):
    """exp(nodes/lam) when that fits double range, else None (slow path)."""
    nodes, _ = _rule_cached(family, p1, p2, n)
    if np.abs(nodes / lam).max() < 280.0:
        return np.ascontiguousarray(np.exp(nodes / lam))
    return None


class Corner(enum.Enum):
    INTERIOR = "interior"
    AT_ZERO = "at_zero"
    AT_ONE = "at_one"


_CORNER_BY_CODE = {0: Corner.INTERIOR, 1: Corner.AT_ZERO, 2: Corner.AT_ONE}


@dataclass(frozen=True)
class RiSolution:
    """Solved single-agent problem: unconditional probability p of action 1
    at deterministic payoff v and unit information cost lam."""

    p: float
    v: float
    lam: float
    corner: Corner

    def __post_init__(self):
        if (self.corner is Corner.AT_ZERO) != (self.p == 0.0):
            raise DataValidationError("corner AT_ZERO iff p == 0")
        if (self.corner is Corner.AT_ONE) != (self.p == 1.0):
            raise DataValidationError("corner AT_ONE iff p == 1")


def conditional_choice_prob(p: float, v: float, lam: float, eps):
    """Probability of action 1 given the realized shock under the optimal
    signal structure with unconditional probability p.

    Equals p*A / (p*A + 1 - p) with A = exp((v + eps)/lam), evaluated with
    the dominant exponential factored out so any exponent magnitude is safe.
    """
    if not 0.0 <= p <= 1.0:
        raise DataValidationError(f"p must be in [0,1], got {p}")
    if lam <= 0.0:
        raise DataValidationError("lam must be positive")
    eps = np.asarray(eps, dtype=float)
    t = (v + eps) / lam
    e = np.exp(-np.abs(t))
    with np.errstate(invalid="ignore"):
        out = np.where(t >= 0.0, p / (p + (1.0 - p) * e), p * e / (p * e + (1.0 - p)))
    if out.ndim == 0:
        return float(out)
    return out


def _check_v(v):
    if not np.all(np.isfinite(v)):
        raise NumericalError(
            "non-finite deterministic payoff; rescale the payoffs (see the "
            "joint payoff/cost/prior scale invariance) before solving"
        )


def solve_G_many(v, lam: float, rule: QuadratureRule):
    """Vectorized G: unconditional choice probabilities for an array of
    deterministic payoffs.

    Returns (p, corner_codes, dG_dv, residuals) with corner codes 0/1/2 for
    interior / at zero / at one.
    """
    if lam <= 0.0:
        raise DataValidationError("lam must be positive")
    v = np.ascontiguousarray(np.atleast_1d(v), dtype=float)
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
    warm = np.full(m, 0.5)
    solve_g_kernel(v, lam, rule.nodes, rule.weights, ek, fast_ok, warm, _SOLVE_TOL,
                   _SOLVE_MAXIT, p, corner, gp, res)
    if np.any(res > 1e-8):
        raise NumericalError("choice-probability solve failed to reach tolerance")
    return p, corner, gp, res


def solve_G(v: float, lam: float, rule: QuadratureRule) -> RiSolution:
    """Unconditional choice probability at deterministic payoff v.

    Interior solutions satisfy the normalization E[A/(pA + 1 - p)] = 1; the
    corners p = 0 and p = 1 apply when E[A] <= 1 or E[1/A] <= 1
    respectively.
    """
    p, corner, _, _ = solve_G_many([v], lam, rule)
    return RiSolution(float(p[0]), float(v), float(lam), _CORNER_BY_CODE[int(corner[0])])


def invert_G(p: float, lam: float, rule: QuadratureRule) -> float:
    """Deterministic payoff v with solve_G(v).p == p, for interior p.

    Monotone bracketing from [-1, 1] with geometric expansion, then
    bisection on the normalization function, which is strictly increasing
    in v at fixed p.
    """
    if not 0.0 < p < 1.0:
        raise DataValidationError(f"invert_G needs p strictly inside (0,1), got {p}")
    if lam <= 0.0:
        raise DataValidationError("lam must be positive")

    def k_of_v(v):
        t = (v + rule.nodes) / lam
        e = np.exp(-np.abs(t))
        num = 1.0 - e
        den = np.where(t >= 0.0, p + (1.0 - p) * e, p * e + (1.0 - p))
        g = np.where(t >= 0.0, num, -num) / den
        return float(np.dot(rule.weights, g))

    lo, hi = -1.0, 1.0
    for _ in range(80):
        if k_of_v(lo) < 0.0:
            break
        lo *= 2.0
    else:
        raise NumericalError("invert_G failed to bracket from below")
    for _ in range(80):
        if k_of_v(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise NumericalError("invert_G failed to bracket from above")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if k_of_v(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def psi_many(p_self, v, lam: float, rule: QuadratureRule) -> np.ndarray:
    """E over the prior of the conditional choice rule, vectorized."""
    p_self = np.ascontiguousarray(np.atleast_1d(p_self), dtype=float)
    v = np.ascontiguousarray(np.atleast_1d(v), dtype=float)
    _check_v(v)
    ek = _node_exponentials(rule.prior.family, rule.prior.param1, rule.prior.param2, rule.n, lam)
    fast_ok = ek is not None
    if ek is None:
        ek = np.empty(0)
    out = np.empty(v.shape[0])
    psi_kernel(p_self, v, lam, rule.nodes, rule.weights, ek, fast_ok, out)
    return out


# ---------------------------------------------------------------------------
# information metrics


def binary_entropy(p) -> float:
    """Entropy in nats of a Bernoulli(p) distribution, with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0.0) | (p > 1.0)):
        raise DataValidationError("probabilities must lie in [0,1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0.0, p * np.log(p), 0.0) - np.where(p < 1.0, (1.0 - p) * np.log1p(-p), 0.0)
    if h.ndim == 0:
        return float(h)
    return h


def _entropy_pmf(q: np.ndarray) -> float:
    q = q[q > 0.0]
    return float(-np.sum(q * np.log(q)))


def discrete_mutual_information(prior, channel) -> float:
    """Mutual information in nats between a discrete state and a signal.

    prior: pmf over states, shape (S,). channel: row-stochastic matrix of
    signal probabilities given the state, shape (S, T). Computed as the
    entropy of the signal marginal minus the expected entropy of the
    signal distribution given the state.
    """
    prior = np.asarray(prior, dtype=float)
    channel = np.asarray(channel, dtype=float)
    if prior.ndim != 1 or np.any(prior < 0.0) or abs(prior.sum() - 1.0) > 1e-9:
        raise DataValidationError("prior must be a pmf summing to 1")
    if channel.ndim != 2 or channel.shape[0] != len(prior):
        raise DataValidationError("channel must have one row per state")
    if np.any(channel < 0.0) or np.any(np.abs(channel.sum(axis=1) - 1.0) > 1e-9):
        raise DataValidationError("each channel row must be a pmf summing to 1")
    marginal = prior @ channel
    cond = sum(prior[s] * _entropy_pmf(channel[s]) for s in range(len(prior)))
    return max(_entropy_pmf(marginal) - cond, 0.0)


def acquired_information(sol: RiSolution, rule: QuadratureRule, clip: bool = True) -> float:
    """Mutual information in nats between the payoff shock and the action.

    Uses the binary-side decomposition H(p) - E[H(ccp(p, v, lam, eps))],
    which equals the shock-side form exactly. Corners carry no
    information.
    """
    if sol.corner is not Corner.INTERIOR:
        return 0.0
    q = conditional_choice_prob(sol.p, sol.v, sol.lam, rule.nodes)
    info = float(binary_entropy(sol.p) - rule.expect(binary_entropy(q)))
    if clip and -1e-12 < info < 0.0:
        info = 0.0
    return info


def information_cost(sol: RiSolution, rule: QuadratureRule, lam: float) -> float:
    """Cost paid for the acquired information: lam times the mutual
    information; zero exactly when no information is acquired."""
    if lam <= 0.0:
        raise DataValidationError("lam must be positive")
    return lam * acquired_information(sol, rule)

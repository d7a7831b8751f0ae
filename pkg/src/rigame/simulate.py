"""Synthetic panel generation.

Each market gets its own random substream keyed by (seed, market_id), so
panels are reproducible bit for bit regardless of how the work is split.
Within a market the draw order is fixed: z1, z2, x columns, shock1,
shock2, action1 uniform, action2 uniform, selection uniform.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .equilibrium import PanelSolver, find_equilibria
from .errors import DataValidationError, MultiplicityError
from .model import (
    ChoiceProbPair,
    CoefVector,
    GameInstance,
    MarketDataset,
    PayoffModel,
    PriorSpec,
    write_dataset,
)
from .ricore import conditional_choice_prob, rule_for_prior

REQUIRE_UNIQUE = "require_unique"
SELECTION_RULES = (REQUIRE_UNIQUE, "first", "lowest", "highest", "random")

PARAMETRIC_MC_THETA = (1.8, 0.5, 1.6, 0.8, -1.3, -1.3)


def semiparametric_truth_pi(z):
    """Base-payoff curve of the semiparametric data generating process."""
    return 3.0 - np.log1p(2.0 * np.asarray(z, dtype=float))


def semiparametric_truth_delta(z):
    """Strategic-effect curve of the semiparametric data generating process."""
    z = np.asarray(z, dtype=float)
    return -4.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class DgpConfig:
    """Specification of a data generating process.

    name selects built-in payoff truths: "parametric" (linear in z) and
    "semiparametric" (the nonlinear curves above) or "custom" (payoffs
    taken from game_payoffs). Covariates are uniform on the given bounds.
    """

    name: str
    markets: int
    seed: int
    z_bounds: tuple[tuple[float, float], tuple[float, float]]
    x_bounds: tuple[tuple[float, float], ...] = ()
    priors: tuple[PriorSpec, PriorSpec] = (PriorSpec("normal", 0.0, 1.0),) * 2
    lam: tuple[float, float] = (1.0, 1.0)
    game_payoffs: Optional[tuple[PayoffModel, PayoffModel]] = None
    selection: str = REQUIRE_UNIQUE

    def __post_init__(self):
        if self.markets < 1:
            raise DataValidationError("need at least one market")
        if self.selection not in SELECTION_RULES:
            raise DataValidationError(f"unknown selection rule {self.selection!r}")
        for lo, hi in (*self.z_bounds, *self.x_bounds):
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise DataValidationError("covariate bounds must be finite with hi > lo")
        if self.name == "custom" and self.game_payoffs is None:
            raise DataValidationError("custom DGP needs game_payoffs")
        if self.name not in ("parametric", "semiparametric", "custom"):
            raise DataValidationError(f"unknown DGP name {self.name!r}")

    def payoff_arrays(self, x: np.ndarray, z: np.ndarray):
        """Per-market (pi1, delta1, pi2, delta2)."""
        if self.name == "semiparametric":
            return (
                semiparametric_truth_pi(z[:, 0]),
                semiparametric_truth_delta(z[:, 0]),
                semiparametric_truth_pi(z[:, 1]),
                semiparametric_truth_delta(z[:, 1]),
            )
        pay = self.game_payoffs
        return (
            pay[0].base.value_batch(x, z[:, 0]),
            pay[0].strategic.value_batch(x, z[:, 0]),
            pay[1].base.value_batch(x, z[:, 1]),
            pay[1].strategic.value_batch(x, z[:, 1]),
        )

    def game_at(self, x, z1: float, z2: float) -> GameInstance:
        """Single-market view of this DGP as a GameInstance."""
        if self.name == "semiparametric":
            # exact nonlinear truth collapsed to market-specific constants
            pay = tuple(
                PayoffModel(
                    base=CoefVector((float(semiparametric_truth_pi(zi)),)),
                    strategic=CoefVector((float(semiparametric_truth_delta(zi)),)),
                )
                for zi in (z1, z2)
            )
        else:
            pay = self.game_payoffs
        return GameInstance(pay, self.priors, self.lam, tuple(x), (z1, z2))

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "markets": self.markets,
            "seed": self.seed,
            "z_bounds": [list(b) for b in self.z_bounds],
            "x_bounds": [list(b) for b in self.x_bounds],
            "priors": [[p.family, p.param1, p.param2] for p in self.priors],
            "lambda": list(self.lam),
            "selection": self.selection,
        }
        if self.game_payoffs is not None:
            d["payoffs"] = [
                {
                    "base": list(m.base.coefs),
                    "n_x": m.base.n_x,
                    "strategic": list(m.strategic.coefs),
                    "strategic_n_x": m.strategic.n_x,
                }
                for m in self.game_payoffs
            ]
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def parametric_mc_config(markets: int, seed: int, theta=PARAMETRIC_MC_THETA) -> DgpConfig:
    """Linear two-player design: payoffs b + g*z with constant strategic
    effects, z uniform on [0,1], normal(0,4) priors."""
    b1, g1, b2, g2, d1, d2 = theta
    payoffs = (
        PayoffModel(base=CoefVector((b1, g1)), strategic=CoefVector((d1,))),
        PayoffModel(base=CoefVector((b2, g2)), strategic=CoefVector((d2,))),
    )
    return DgpConfig(
        name="parametric",
        markets=markets,
        seed=seed,
        z_bounds=((0.0, 1.0), (0.0, 1.0)),
        priors=(PriorSpec("normal", 0.0, 4.0), PriorSpec("normal", 0.0, 4.0)),
        game_payoffs=payoffs,
    )


def semiparametric_mc_config(markets: int, seed: int) -> DgpConfig:
    """Nonlinear symmetric design: z uniform on [0,3], uniform(-5,5) priors."""
    return DgpConfig(
        name="semiparametric",
        markets=markets,
        seed=seed,
        z_bounds=((0.0, 3.0), (0.0, 3.0)),
        priors=(PriorSpec("uniform", -5.0, 5.0), PriorSpec("uniform", -5.0, 5.0)),
    )


def airline_like_config(markets: int, seed: int) -> DgpConfig:
    """Synthetic entry panel with asymmetric presence distributions.

    Shapes loosely mimic an airline entry setting (a low-cost player with
    small market presence against a large incumbent group, plus a market
    size column); all values are synthetic.
    """
    payoffs = (
        PayoffModel(base=CoefVector((-0.55, 0.08, 4.5), n_x=1), strategic=CoefVector((-0.12,))),
        PayoffModel(base=CoefVector((-0.25, 0.10, 1.4), n_x=1), strategic=CoefVector((-0.30,))),
    )
    return DgpConfig(
        name="custom",
        markets=markets,
        seed=seed,
        z_bounds=((0.0, 0.115), (0.03, 0.50)),
        x_bounds=((0.17, 4.2),),
        priors=(PriorSpec("normal", 0.0, 1.0), PriorSpec("normal", 0.0, 1.0)),
        game_payoffs=payoffs,
    )


# ---------------------------------------------------------------------------
# draws


def _market_rng(seed: int, market_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(market_id)]))


def _market_uniforms(cfg: DgpConfig, market_id: int) -> np.ndarray:
    """The fixed block of uniforms backing one market's draws."""
    n_u = 2 + len(cfg.x_bounds) + 2 + 2 + 1
    return _market_rng(cfg.seed, market_id).uniform(size=n_u)


def gen_covariates(cfg: DgpConfig) -> dict:
    """Covariate table implied by (cfg, seed); deterministic."""
    m = cfg.markets
    z = np.empty((m, 2))
    x = np.empty((m, len(cfg.x_bounds)))
    for i in range(m):
        u = _market_uniforms(cfg, i)
        for j, (lo, hi) in enumerate(cfg.z_bounds):
            z[i, j] = lo + (hi - lo) * u[j]
        for j, (lo, hi) in enumerate(cfg.x_bounds):
            x[i, j] = lo + (hi - lo) * u[2 + j]
    return {"market_id": np.arange(m, dtype=np.int64), "x": x, "z": z}


@dataclass(frozen=True)
class MarketDraw:
    y1: int
    y2: int
    eps1: float
    eps2: float
    p: ChoiceProbPair
    n_equilibria: int


def _select_equilibrium(points, rule: str, u_sel: float) -> ChoiceProbPair:
    probs = [pt.p for pt in points]
    if rule in (REQUIRE_UNIQUE, "first"):
        return probs[0]
    if rule == "lowest":
        return min(probs)
    if rule == "highest":
        return max(probs)
    return probs[min(int(u_sel * len(probs)), len(probs) - 1)]


def simulate_market(game: GameInstance, rng: np.random.Generator,
                    selection: str = REQUIRE_UNIQUE,
                    equilibrium: ChoiceProbPair | None = None) -> MarketDraw:
    """Draw one market outcome from the model.

    Shocks come from the priors by inverse CDF; conditional on the shocks
    the two actions are independent Bernoulli draws from the optimal
    conditional choice rule. Pass a precomputed equilibrium to skip the
    solve.
    """
    if selection not in SELECTION_RULES:
        raise DataValidationError(f"unknown selection rule {selection!r}")
    n_eq = 1
    if equilibrium is None:
        eqs = find_equilibria(game)
        n_eq = len(eqs.points)
        if selection == REQUIRE_UNIQUE and n_eq != 1:
            raise MultiplicityError(
                f"market has {n_eq} equilibria under require_unique selection"
            )
        u_sel = rng.uniform()
        p = _select_equilibrium(eqs.points, selection, u_sel)
    else:
        p = ChoiceProbPair(*equilibrium).validate()
    u = rng.uniform(size=4)
    eps1 = float(game.priors[0].ppf(u[0]))
    eps2 = float(game.priors[1].ppf(u[1]))
    v1 = game.pi(0) + game.delta(0) * p.p2
    v2 = game.pi(1) + game.delta(1) * p.p1
    y1 = int(u[2] < conditional_choice_prob(p.p1, v1, game.lam[0], eps1))
    y2 = int(u[3] < conditional_choice_prob(p.p2, v2, game.lam[1], eps2))
    return MarketDraw(y1, y2, eps1, eps2, p, n_eq)


def replicate_market(game: GameInstance, n: int, seed: int,
                     equilibrium: ChoiceProbPair | None = None) -> dict:
    """n outcome draws at fixed covariates; vectorized for Monte Carlo
    frequency checks."""
    if equilibrium is None:
        eqs = find_equilibria(game)
        if not eqs.is_unique:
            raise MultiplicityError("replicate_market needs a unique equilibrium")
        equilibrium = eqs.points[0].p
    p = ChoiceProbPair(*equilibrium).validate()
    rng = np.random.default_rng(seed)
    eps1 = game.priors[0].ppf(rng.uniform(size=n))
    eps2 = game.priors[1].ppf(rng.uniform(size=n))
    v1 = game.pi(0) + game.delta(0) * p.p2
    v2 = game.pi(1) + game.delta(1) * p.p1
    q1 = conditional_choice_prob(p.p1, v1, game.lam[0], eps1)
    q2 = conditional_choice_prob(p.p2, v2, game.lam[1], eps2)
    y1 = (rng.uniform(size=n) < q1).astype(np.int8)
    y2 = (rng.uniform(size=n) < q2).astype(np.int8)
    return {"y1": y1, "y2": y2, "eps1": eps1, "eps2": eps2, "p": p}


def make_panel(cfg: DgpConfig, out_path=None) -> MarketDataset:
    """Simulate a full panel of independent markets.

    Equilibria are solved for all markets at once; under require_unique
    every market is certified unique and any violation aborts with the
    offending market named. Writing to out_path also writes a JSON sidecar
    with the config hash.
    """
    cov = gen_covariates(cfg)
    x, z = cov["x"], cov["z"]
    pi1, de1, pi2, de2 = cfg.payoff_arrays(x, z)
    solver = PanelSolver(
        (rule_for_prior(cfg.priors[0]), rule_for_prior(cfg.priors[1])), cfg.lam
    )
    p1, p2, _, _ = solver.solve(pi1, de1, pi2, de2)
    unique, gap = solver.certify_unique(pi1, de1, pi2, de2)
    multi_ids = np.where(~unique)[0]
    if len(multi_ids):
        per_market = {}
        for i in multi_ids:
            eqs = find_equilibria(cfg.game_at(x[i], z[i, 0], z[i, 1]))
            per_market[i] = eqs
            if cfg.selection == REQUIRE_UNIQUE:
                raise MultiplicityError(
                    f"market {i} has {len(eqs.points)} equilibria under require_unique"
                )
        for i, eqs in per_market.items():
            u_sel = _market_uniforms(cfg, i)[-1]
            sel = _select_equilibrium(eqs.points, cfg.selection, u_sel)
            p1[i], p2[i] = sel.p1, sel.p2
    m = cfg.markets
    y = np.empty((m, 2), dtype=np.int8)
    nx = len(cfg.x_bounds)
    for i in range(m):
        u = _market_uniforms(cfg, i)
        e1 = float(cfg.priors[0].ppf(u[2 + nx]))
        e2 = float(cfg.priors[1].ppf(u[3 + nx]))
        v1 = pi1[i] + de1[i] * p2[i]
        v2 = pi2[i] + de2[i] * p1[i]
        y[i, 0] = u[4 + nx] < conditional_choice_prob(p1[i], v1, cfg.lam[0], e1)
        y[i, 1] = u[5 + nx] < conditional_choice_prob(p2[i], v2, cfg.lam[1], e2)
    meta = {
        "dgp": cfg.to_dict(),
        "dgp_sha256": cfg.digest(),
        "equilibrium_p": np.column_stack([p1, p2]),
    }
    dataset = MarketDataset(cov["market_id"], y, x, z, meta=meta)
    if out_path is not None:
        write_dataset(dataset, out_path)
        sidecar = {
            "dgp": cfg.to_dict(),
            "dgp_sha256": cfg.digest(),
            "markets": m,
            "seed": cfg.seed,
        }
        with open(str(out_path) + ".meta.json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
    return dataset


def with_seed(cfg: DgpConfig, seed: int) -> DgpConfig:
    return replace(cfg, seed=seed)


def with_markets(cfg: DgpConfig, markets: int) -> DgpConfig:
    return replace(cfg, markets=markets)

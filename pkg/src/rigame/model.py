"""Domain types for two-player binary-action games and market panels.

Players are indexed 0 and 1 throughout the code; file formats and reports
use the 1-based labels y1/z1 and y2/z2.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DataValidationError

NORMAL = "normal"
UNIFORM = "uniform"


@dataclass(frozen=True)
class PriorSpec:
    """Prior belief over a player's scalar payoff shock.

    family is "normal" (param1 = mean, param2 = variance) or "uniform"
    (param1 = lower bound, param2 = upper bound).
    """

    family: str
    param1: float
    param2: float

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in (NORMAL, UNIFORM):
            raise DataValidationError(f"unknown prior family {self.family!r}")
        if not (math.isfinite(self.param1) and math.isfinite(self.param2)):
            raise DataValidationError("prior parameters must be finite")
        if fam == NORMAL and self.param2 <= 0.0:
            raise DataValidationError("normal prior variance must be positive")
        if fam == UNIFORM and self.param2 <= self.param1:
            raise DataValidationError("uniform prior needs upper > lower")

    @property
    def mean(self) -> float:
        if self.family == NORMAL:
            return self.param1
        return 0.5 * (self.param1 + self.param2)

    @property
    def variance(self) -> float:
        if self.family == NORMAL:
            return self.param2
        return (self.param2 - self.param1) ** 2 / 12.0

    def cdf(self, e):
        if self.family == NORMAL:
            return ndtr((np.asarray(e) - self.param1) / math.sqrt(self.param2))
        lo, hi = self.param1, self.param2
        return np.clip((np.asarray(e) - lo) / (hi - lo), 0.0, 1.0)

    def ppf(self, u):
        """Inverse CDF; used for reproducible shock draws."""
        u = np.asarray(u)
        if self.family == NORMAL:
            return self.param1 + math.sqrt(self.param2) * ndtri(u)
        return self.param1 + (self.param2 - self.param1) * u


@dataclass(frozen=True)
class CoefVector:
    """Coefficients over the basis (1, x_1..x_nx, z, z^2, .., z^dz)."""

    coefs: tuple[float, ...]
    n_x: int = 0

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefs)
        object.__setattr__(self, "coefs", coefs)
        if len(coefs) < 1 + self.n_x:
            raise DataValidationError(
                f"coefficient vector of length {len(coefs)} too short for {self.n_x} x-terms"
            )
        if not all(math.isfinite(c) for c in coefs):
            raise DataValidationError("coefficients must be finite")

    @property
    def z_degree(self) -> int:
        return len(self.coefs) - 1 - self.n_x

    def value(self, x, z: float) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.n_x and len(x) < self.n_x:
            raise DataValidationError(f"expected {self.n_x} x covariates, got {len(x)}")
        c = self.coefs
        out = c[0]
        for k in range(self.n_x):
            out += c[1 + k] * x[k]
        zp = 1.0
        for l in range(self.z_degree):
            zp *= z
            out += c[1 + self.n_x + l] * zp
        return out

    def value_batch(self, x_mat: np.ndarray, z_vec: np.ndarray) -> np.ndarray:
        """Vectorized evaluation over markets."""
        z_vec = np.asarray(z_vec, dtype=float)
        out = np.full(z_vec.shape, self.coefs[0])
        for k in range(self.n_x):
            out = out + self.coefs[1 + k] * x_mat[:, k]
        zp = np.ones_like(z_vec)
        for l in range(self.z_degree):
            zp = zp * z_vec
            out = out + self.coefs[1 + self.n_x + l] * zp
        return out


@dataclass(frozen=True)
class PayoffModel:
    """Base payoff and strategic effect of one player.

    Both pieces are linear in their coefficients: the base payoff over
    (1, x, z-powers) and the strategic effect (the payoff shift when the
    rival plays 1) over its own basis, constant-only in the plain linear
    case.
    """

    base: CoefVector
    strategic: CoefVector

    def pi(self, x, z: float) -> float:
        return self.base.value(x, z)

    def delta(self, x, z: float) -> float:
        return self.strategic.value(x, z)


def expected_deterministic_payoff(model: PayoffModel, x, z: float, p_rival: float) -> float:
    """Deterministic part of the expected payoff from action 1.

    Equals pi(x, z) + delta(x, z) * p_rival for a rival entry probability
    p_rival in [0, 1].
    """
    if not 0.0 <= p_rival <= 1.0:
        raise DataValidationError(f"p_rival must be in [0,1], got {p_rival}")
    return model.pi(x, z) + model.delta(x, z) * p_rival


class ChoiceProbPair(NamedTuple):
    """Pair of unconditional choice probabilities, one per player."""

    p1: float
    p2: float

    def validate(self) -> "ChoiceProbPair":
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise DataValidationError(f"choice probabilities outside [0,1]: {self}")
        return self


@dataclass(frozen=True)
class GameInstance:
    """Two payoff models, two priors, unit information costs, and one
    market's covariates."""

    payoffs: tuple[PayoffModel, PayoffModel]
    priors: tuple[PriorSpec, PriorSpec]
    lam: tuple[float, float] = (1.0, 1.0)
    x: tuple[float, ...] = ()
    z: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if len(self.payoffs) != 2 or len(self.priors) != 2 or len(self.lam) != 2:
            raise DataValidationError("a game needs exactly two players")
        if self.lam[0] <= 0.0 or self.lam[1] <= 0.0:
            raise DataValidationError("unit information costs must be positive")
        if not all(math.isfinite(v) for v in (*self.x, *self.z)):
            raise DataValidationError("covariates must be finite")
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))
        object.__setattr__(self, "lam", (float(self.lam[0]), float(self.lam[1])))

    def pi(self, i: int) -> float:
        return self.payoffs[i].pi(self.x, self.z[i])

    def delta(self, i: int) -> float:
        return self.payoffs[i].delta(self.x, self.z[i])

    def with_covariates(self, x, z1: float, z2: float) -> "GameInstance":
        return GameInstance(self.payoffs, self.priors, self.lam, tuple(x), (z1, z2))


# ---------------------------------------------------------------------------
# market panels


@dataclass(frozen=True)
class MarketDataset:
    """Cross-section of market outcomes and covariates.

    market_id (M,), y (M, 2) binary actions, x (M, K) market covariates,
    z (M, 2) player-specific covariates.
    """

    market_id: np.ndarray
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mid = np.asarray(self.market_id, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int8)
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(mid), -1) if x.size else np.zeros((len(mid), 0))
        m = len(mid)
        if y.shape != (m, 2) or z.shape != (m, 2) or x.shape[0] != m:
            raise DataValidationError(
                f"inconsistent shapes: ids {m}, y {y.shape}, x {x.shape}, z {z.shape}"
            )
        if m and not np.isin(y, (0, 1)).all():
            raise DataValidationError("actions must be 0 or 1")
        if len(np.unique(mid)) != m:
            raise DataValidationError("duplicate market_id")
        if m and not (np.isfinite(x).all() and np.isfinite(z).all()):
            raise DataValidationError("covariates must be finite")
        for name, arr in (("market_id", mid), ("y", y), ("x", x), ("z", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_markets(self) -> int:
        return len(self.market_id)

    @property
    def n_x(self) -> int:
        return self.x.shape[1]


def _csv_header(n_x: int) -> list[str]:
    return ["market_id", "y1", "y2"] + [f"x{k + 1}" for k in range(n_x)] + ["z1", "z2"]


def write_dataset(dataset: MarketDataset, path) -> None:
    """Write a panel as CSV with full round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_csv_header(dataset.n_x))
        for i in range(dataset.n_markets):
            row = [int(dataset.market_id[i]), int(dataset.y[i, 0]), int(dataset.y[i, 1])]
            row += [repr(float(v)) for v in dataset.x[i]]
            row += [repr(float(dataset.z[i, 0])), repr(float(dataset.z[i, 1]))]
            w.writerow(row)


def read_dataset(path, column_scales: dict | None = None) -> MarketDataset:
    """Read a panel CSV.

    column_scales optionally maps covariate column names (e.g. "x1") to a
    multiplicative factor applied at load; the factors used are recorded in
    the dataset metadata so unit choices stay auditable.
    """
    scales = dict(column_scales or {})
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["market_id", "y1", "y2"] or header[-2:] != ["z1", "z2"]:
            raise DataValidationError(
                f"{path}: header must be market_id,y1,y2,x1..xK,z1,z2, got {header}"
            )
        x_cols = header[3:-2]
        unknown = set(scales) - set(x_cols) - {"z1", "z2"}
        if unknown:
            raise DataValidationError(f"{path}: scale factors for unknown columns {sorted(unknown)}")
        ids, ys, xs, zs = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                ids.append(int(row[0]))
                y1, y2 = int(row[1]), int(row[2])
                xv = [float(v) * scales.get(x_cols[k], 1.0) for k, v in enumerate(row[3:-2])]
                zv = [float(row[-2]) * scales.get("z1", 1.0), float(row[-1]) * scales.get("z2", 1.0)]
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
            if y1 not in (0, 1) or y2 not in (0, 1):
                raise DataValidationError(f"{path}:{lineno}: actions must be 0 or 1")
            ys.append((y1, y2))
            xs.append(xv)
            zs.append(zv)
    meta = {"source": str(path), "column_scales": {c: scales.get(c, 1.0) for c in x_cols + ["z1", "z2"]}}
    return MarketDataset(
        np.asarray(ids, dtype=np.int64),
        np.asarray(ys, dtype=np.int8).reshape(-1, 2),
        np.asarray(xs, dtype=float).reshape(len(ids), len(x_cols)),
        np.asarray(zs, dtype=float).reshape(-1, 2),
        meta=meta,
    )


OUTCOME_CELLS = ((0, 0), (1, 0), (0, 1), (1, 1))


def summarize_outcomes(dataset: MarketDataset) -> dict[tuple[int, int], float]:
    """Sample frequency of each joint outcome cell; frequencies sum to 1."""
    if dataset.n_markets == 0:
        raise DataValidationError("cannot summarize an empty dataset")
    n = dataset.n_markets
    freqs = {}
    for cell in OUTCOME_CELLS:
        count = int(np.sum((dataset.y[:, 0] == cell[0]) & (dataset.y[:, 1] == cell[1])))
        freqs[cell] = count / n
    drift = 1.0 - sum(freqs.values())
    if drift != 0.0:
        # keep the four cells summing to exactly one despite rounding
        top = max(freqs, key=freqs.get)
        freqs[top] += drift
    return freqs


# ---------------------------------------------------------------------------
# JSON game configuration


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(path, msg)


def _coef_from_dict(d, path) -> CoefVector:
    _require(isinstance(d, dict), path, "must be an object")
    _require("base" not in d, path, "unexpected nesting")
    return d


def game_from_dict(cfg: dict) -> GameInstance:
    """Build a GameInstance from the JSON config schema.

    Schema: {payoffs: [{base: [...], strategic: [...], n_x?, strategic_n_x?} x2],
    priors: [{family, param1, param2} x2], lambda: [l1, l2],
    covariates?: {x: [...], z1, z2}}.
    """
    _require(isinstance(cfg, dict), "$", "config must be a JSON object")
    payoffs = cfg.get("payoffs")
    _require(isinstance(payoffs, list) and len(payoffs) == 2, "$.payoffs", "need a list of two payoff specs")
    models = []
    for i, p in enumerate(payoffs):
        path = f"$.payoffs[{i}]"
        _require(isinstance(p, dict), path, "must be an object")
        for key in ("base", "strategic"):
            _require(
                isinstance(p.get(key), list) and len(p[key]) >= 1 and
                all(isinstance(v, (int, float)) for v in p[key]),
                f"{path}.{key}", "must be a non-empty array of numbers",
            )
        try:
            models.append(
                PayoffModel(
                    base=CoefVector(tuple(p["base"]), n_x=int(p.get("n_x", 0))),
                    strategic=CoefVector(tuple(p["strategic"]), n_x=int(p.get("strategic_n_x", 0))),
                )
            )
        except DataValidationError as exc:
            raise ConfigError(path, str(exc)) from None
    priors_cfg = cfg.get("priors")
    _require(isinstance(priors_cfg, list) and len(priors_cfg) == 2, "$.priors", "need a list of two prior specs")
    priors = []
    for i, pr in enumerate(priors_cfg):
        path = f"$.priors[{i}]"
        _require(isinstance(pr, dict), path, "must be an object")
        for key in ("family", "param1", "param2"):
            _require(key in pr, f"{path}.{key}", "missing")
        try:
            priors.append(PriorSpec(str(pr["family"]), float(pr["param1"]), float(pr["param2"])))
        except (DataValidationError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None
    lam = cfg.get("lambda", [1.0, 1.0])
    _require(
        isinstance(lam, list) and len(lam) == 2 and all(isinstance(v, (int, float)) and v > 0 for v in lam),
        "$.lambda", "must be two positive numbers",
    )
    cov = cfg.get("covariates", {})
    _require(isinstance(cov, dict), "$.covariates", "must be an object")
    x = cov.get("x", [])
    _require(isinstance(x, list) and all(isinstance(v, (int, float)) for v in x), "$.covariates.x", "must be an array of numbers")
    z1 = cov.get("z1", 0.0)
    z2 = cov.get("z2", 0.0)
    for name, v in (("z1", z1), ("z2", z2)):
        _require(isinstance(v, (int, float)), f"$.covariates.{name}", "must be a number")
    return GameInstance(
        payoffs=(models[0], models[1]),
        priors=(priors[0], priors[1]),
        lam=(float(lam[0]), float(lam[1])),
        x=tuple(float(v) for v in x),
        z=(float(z1), float(z2)),
    )


def game_to_dict(game: GameInstance) -> dict:
    return {
        "payoffs": [
            {
                "base": list(m.base.coefs),
                "strategic": list(m.strategic.coefs),
                "n_x": m.base.n_x,
                "strategic_n_x": m.strategic.n_x,
            }
            for m in game.payoffs
        ],
        "priors": [
            {"family": p.family, "param1": p.param1, "param2": p.param2}
            for p in game.priors
        ],
        "lambda": list(game.lam),
        "covariates": {"x": list(game.x), "z1": game.z[0], "z2": game.z[1]},
    }

"""Mutual information and entropy estimates via MINE, and the beta bounds.

The statistic network ``T(x, z)`` is a two-layer ReLU MLP trained to
maximise the Donsker-Varadhan lower bound

    E_joint[T] - log E_marginal[exp(T)]

where marginal pairs come from shuffling ``z`` inside each batch. Entropy
is taken as the self-information ``I(X; X)`` of a finite-capacity
estimator, so it is only meaningful relative to a frozen configuration;
:func:`MineConfig.digest` identifies that configuration in outputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import tensor as T
from .nn import Mlp, MlpConfig
from .optim import Adam


@dataclass(frozen=True)
class MineConfig:
    hidden: int = 128
    epochs: int = 200
    batch_size: int = 2048
    lr: float = 1e-3
    seed: int = 0
    estimate_batches: int = 16

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "seed" and v <= 0:
                raise ValueError(f"MineConfig.{k} must be positive, got {v}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MineModel:
    net: Mlp
    config: MineConfig
    history: list[float] = field(default_factory=list)


def _dv_objective(net: Mlp, x: np.ndarray, z: np.ndarray, z_marg: np.ndarray) -> T.Tensor:
    joint = net(np.concatenate([x, z], axis=1))
    marg = net(np.concatenate([x, z_marg], axis=1))
    n = marg.shape[0]
    return joint.mean() - (T.logsumexp(marg) - math.log(n))


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def mine_train(X, Z, cfg: MineConfig = MineConfig()) -> MineModel:
    X, Z = _as_2d(X), _as_2d(Z)
    if X.shape[0] != Z.shape[0]:
        raise ValueError(f"mine_train: X has {X.shape[0]} rows, Z has {Z.shape[0]}")
    n = X.shape[0]
    if n < 2:
        raise ValueError("mine_train: need at least 2 samples")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x317E]))
    net = Mlp(MlpConfig((X.shape[1] + Z.shape[1], cfg.hidden, 1), activation="relu"), rng)
    opt = Adam(net.params(), lr=cfg.lr)
    bs = min(cfg.batch_size, n)
    model = MineModel(net, cfg)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n - bs + 1, bs):
            idx = order[start : start + bs]
            x, z = X[idx], Z[idx]
            z_marg = z[rng.permutation(bs)]
            opt.zero_grad()
            with T.Graph() as g:
                mi = _dv_objective(net, x, z, z_marg)
                loss = -mi
            T.backward(g, loss)
            opt.step()
            total += float(mi.data)
            count += 1
        model.history.append(total / max(count, 1))
    return model


def mine_estimate(model: MineModel, X, Z, seed: int | None = None) -> float:
    """Average the bound over ``estimate_batches`` random batches of (X, Z)."""
    X, Z = _as_2d(X), _as_2d(Z)
    cfg = model.config
    n = X.shape[0]
    bs = min(cfg.batch_size, n)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed if seed is None else seed, 0xE57]))
    vals = []
    for _ in range(cfg.estimate_batches):
        idx = rng.choice(n, size=bs, replace=False)
        x, z = X[idx], Z[idx]
        vals.append(float(_dv_objective(model.net, x, z, z[rng.permutation(bs)]).data))
    return float(np.mean(vals))


def estimate_mi(X, Z, cfg: MineConfig = MineConfig()) -> float:
    return mine_estimate(mine_train(X, Z, cfg), X, Z)


def estimate_entropy(X, cfg: MineConfig = MineConfig()) -> float:
    return estimate_mi(X, X, cfg)


def analytic_gaussian_mi(rho: float, d: int = 1) -> float:
    """MI of ``d`` independent pairs of unit Gaussians with correlation ``rho``."""
    if abs(rho) >= 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    return -0.5 * d * math.log1p(-rho * rho)


@dataclass
class BetaBounds:
    H: list[float]
    I: dict[tuple[int, int], float]
    I_clamped: dict[tuple[int, int], float]
    m_l: float | None = None
    m_u: float | None = None
    m_l2: float | None = None
    m_u2: float | None = None
    mine_digest: str | None = None

    @property
    def midpoint(self) -> float:
        lo, hi = (self.m_l, self.m_u) if self.m_l is not None else (self.m_l2, self.m_u2)
        return 0.5 * (lo + hi)

    @property
    def lower(self) -> float:
        return self.m_l if self.m_l is not None else self.m_l2

    @property
    def upper(self) -> float:
        return self.m_u if self.m_u is not None else self.m_u2

    def to_json(self) -> dict:
        return {
            "H": self.H,
            "I": {f"{i},{j}": v for (i, j), v in self.I.items()},
            "I_clamped": {f"{i},{j}": v for (i, j), v in self.I_clamped.items()},
            "m_l": self.m_l,
            "m_u": self.m_u,
            "m_l2": self.m_l2,
            "m_u2": self.m_u2,
            "mine_digest": self.mine_digest,
        }

    @classmethod
    def from_json(cls, d: dict) -> "BetaBounds":
        def pairs(m):
            return {tuple(int(t) for t in k.split(",")): v for k, v in m.items()}

        return cls(
            H=list(d["H"]),
            I=pairs(d["I"]),
            I_clamped=pairs(d["I_clamped"]),
            m_l=d.get("m_l"),
            m_u=d.get("m_u"),
            m_l2=d.get("m_l2"),
            m_u2=d.get("m_u2"),
            mine_digest=d.get("mine_digest"),
        )


def bounds_from_estimates(H: Sequence[float], I: dict[tuple[int, int], float], eps: float = 1e-9) -> BetaBounds:
    """Bound formulas on already-estimated entropies and pairwise MIs.

    Two views: ``m_l = 1/(3(H1+H2))``, ``m_u = 1/(3(H1+H2-I12))``.
    Three views: ``m_l2 = 1/(5 sum H)``, ``m_u2 = 1/(5(sum H - 2/3 sum I))``.
    Each MI is clamped into ``[0, H_i + H_j - eps]`` first.
    """
    H = [float(h) for h in H]
    m = len(H)
    if m not in (2, 3):
        raise ValueError(f"bounds need 2 or 3 views, got {m}")
    clamped = {}
    for (i, j), v in I.items():
        hi = H[i] + H[j] - eps
        clamped[(i, j)] = float(min(max(v, 0.0), max(hi, 0.0)))
    total_h = sum(H)
    out = BetaBounds(H=H, I=dict(I), I_clamped=clamped)
    if m == 2:
        den_l = 3.0 * total_h
        den_u = 3.0 * (total_h - clamped[(0, 1)])
        _require_positive(den_l, den_u, H, I)
        out.m_l, out.m_u = 1.0 / den_l, 1.0 / den_u
    else:
        den_l = 5.0 * total_h
        den_u = 5.0 * (total_h - (2.0 / 3.0) * sum(clamped.values()))
        _require_positive(den_l, den_u, H, I)
        out.m_l2, out.m_u2 = 1.0 / den_l, 1.0 / den_u
    return out


def _require_positive(den_l, den_u, H, I):
    if den_l <= 0 or den_u <= 0:
        raise ValueError(f"nonpositive bound denominator; raw estimates H={H}, I={I}")


def compute_beta_bounds(views: Sequence[np.ndarray], cfg: MineConfig = MineConfig()) -> BetaBounds:
    """Estimate every entropy and pairwise MI with MINE, then apply the bound formulas.

    Each estimator gets its own seed derived from ``cfg.seed``.
    """
    m = len(views)
    if m not in (2, 3):
        raise ValueError(f"bounds need 2 or 3 views, got {m}")
    H = []
    for i, v in enumerate(views):
        sub = MineConfig(**{**asdict(cfg), "seed": _derive(cfg.seed, "H", i)})
        H.append(estimate_entropy(v, sub))
    I = {}
    for i, j in combinations(range(m), 2):
        sub = MineConfig(**{**asdict(cfg), "seed": _derive(cfg.seed, "I", i, j)})
        I[(i, j)] = estimate_mi(views[i], views[j], sub)
    out = bounds_from_estimates(H, I)
    out.mine_digest = cfg.digest()
    return out


def _derive(seed: int, *tags) -> int:
    key = [seed] + [t if isinstance(t, int) else sum(map(ord, t)) for t in tags]
    return int(np.random.SeedSequence(key).generate_state(1)[0])

"""Two-phase OMIB training: task-relevance branches, then the fusion block.

Warm-up trains each modality's encoder and prediction head with Gaussian
noise in place of the fused embedding. Main training adds per-modality VAE
heads, cross-attention fusion and a fused head, optimised jointly under

    L = L_OMF + sum_i L_TRB_i
    L_OMF = head_loss(xi) + beta * (KL_1 + r * KL_2)      (two modalities)

where ``r = 1 - tanh(ln mean_n(KL_2n / KL_1n))`` is recomputed every batch
from predictive KLs between each branch head and the fused head.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .metrics import accuracy
from .mine import BetaBounds
from .nn import (
    CrossAttention,
    Mlp,
    MlpConfig,
    VaeHead,
    VaeHeadOutput,
    kl_categorical,
    kl_diag_gauss_std,
    reparameterize,
    softmax_cross_entropy,
)
from .optim import Adam

TASKS = ("classification", "svdd", "regression")
RATIO_CLAMP = 1e-8
RATIO_CLIP = (1e-6, 1e6)
R_ESTIMATORS = ("ratio-of-means", "mean-of-ratios")


class NonFiniteLoss(FloatingPointError):
    """A training loss or loss term became NaN/Inf."""


class BoundsRequired(ValueError):
    """The beta policy needs beta bounds that were not supplied."""


@dataclass(frozen=True)
class TrainConfig:
    warm_epochs: int = 20
    main_epochs: int = 100
    # At or above the training row count this is full-batch training.
    batch_size: int = 10_000
    lr: float = 1e-4
    seed: int = 0
    # "midpoint" | "sample" | "fixed:<value>"
    beta_policy: str = "midpoint"
    # "dynamic" | "fixed:<value>"
    r_mode: str = "dynamic"
    # How the batch KL ratio behind r is averaged; see compute_r.
    r_estimator: str = "ratio-of-means"
    mc_samples: int = 1
    task: str = "classification"
    n_classes: int = 2
    k: int = 256
    encoder_hidden: int = 256
    head_hidden: int = 512
    svdd_hidden: int = 256
    svdd_lambda: float = 1e-4
    # Stop L_OMF gradients at z_i, so encoders only see their TRB losses.
    detach_z: bool = False
    # Stop L_TRB gradients at xi, so the fusion block only sees L_OMF.
    detach_xi: bool = False

    def __post_init__(self):
        for name in ("batch_size", "mc_samples", "k", "encoder_hidden", "head_hidden", "n_classes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive")
        if self.warm_epochs < 0 or self.main_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        parse_policy(self.beta_policy, ("midpoint", "sample", "fixed"))
        parse_policy(self.r_mode, ("dynamic", "fixed"))
        if self.r_estimator not in R_ESTIMATORS:
            raise ValueError(f"unknown r estimator {self.r_estimator!r}; expected one of {R_ESTIMATORS}")


def parse_policy(spec: str, allowed) -> tuple[str, float | None]:
    kind, _, value = spec.partition(":")
    if kind not in allowed or (kind == "fixed") != bool(value):
        raise ValueError(f"bad policy {spec!r}; expected one of {allowed} (fixed needs ':<value>')")
    return kind, float(value) if value else None


# -- model pieces ----------------------------------------------------------


class TrbBranch:
    """Encoder plus prediction head for one modality."""

    def __init__(self, d_in: int, cfg: TrainConfig, rng: np.random.Generator):
        self.task = cfg.task
        self.encoder = Mlp(MlpConfig((d_in, cfg.encoder_hidden, cfg.k), "gelu"), rng)
        self.head = make_head(2 * cfg.k, cfg, rng)
        self.center: np.ndarray | None = None

    def params(self) -> list[T.Tensor]:
        return self.encoder.params() + self.head.params()

    def predict(self, z: T.Tensor, side) -> T.Tensor:
        return self.head(T.concat([z, T.as_tensor(side)], axis=1))


def make_head(d_in: int, cfg: TrainConfig, rng) -> Mlp:
    if cfg.task == "classification":
        return Mlp(MlpConfig((d_in, cfg.head_hidden, cfg.n_classes), "gelu"), rng)
    if cfg.task == "svdd":
        return Mlp(MlpConfig((d_in, cfg.svdd_hidden, cfg.svdd_hidden), "leaky-relu"), rng)
    return Mlp(MlpConfig((d_in, 50, 1), "gelu"), rng)


@dataclass
class SvddState:
    center: np.ndarray
    lam: float = 1e-4


def svdd_center(embeddings) -> np.ndarray:
    e = np.asarray(embeddings.data if isinstance(embeddings, T.Tensor) else embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError("svdd_center: need a non-empty [N x k] matrix")
    return e.mean(axis=0)


def trb_loss(task: str, preds: T.Tensor, targets, svdd: SvddState | None = None, params=()) -> T.Tensor:
    """Task-specific negative log-likelihood surrogate for one head."""
    if task == "classification":
        return softmax_cross_entropy(preds, targets)
    if task == "svdd":
        if svdd is None:
            raise ValueError("trb_loss: svdd task needs an SvddState (center and lambda)")
        dist = T.square(preds - svdd.center).sum(axis=1).mean()
        if svdd.lam and params:
            reg = sum((T.square(p).sum() for p in params), T.Tensor(0.0))
            dist = dist + reg * svdd.lam
        return dist
    if task == "regression":
        t = np.asarray(targets, dtype=np.float64).reshape(preds.shape)
        return T.square(preds - t).mean()
    raise ValueError(f"unknown task {task!r}")


class OmibModel:
    """Branches plus the fusion block (VAE heads, cross-attention, fused head)."""

    def __init__(self, dims: Sequence[int], cfg: TrainConfig, branches: list[TrbBranch] | None = None):
        if len(dims) not in (2, 3):
            raise ValueError(f"OMIB supports 2 or 3 modalities, got {len(dims)}")
        self.cfg = cfg
        self.dims = list(dims)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB0]))
        self.branches = branches or [TrbBranch(d, cfg, rng) for d in dims]
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x0F]))
        self.vaes = [VaeHead(cfg.k, cfg.k, rng) for _ in dims]
        self.can = CrossAttention(cfg.k, len(dims), rng)
        self.head = make_head(cfg.k, cfg, rng)
        self.head_center: np.ndarray | None = None
        self.beta: float | None = None
        self.r: list[float] = [1.0] * (len(dims) - 1)

    @property
    def n_modalities(self) -> int:
        return len(self.dims)

    def fusion_params(self) -> list[T.Tensor]:
        ps = [p for v in self.vaes for p in v.params()]
        return ps + self.can.params() + self.head.params()

    def params(self) -> list[T.Tensor]:
        return [p for b in self.branches for p in b.params()] + self.fusion_params()

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {f"p{i}": p.data.copy() for i, p in enumerate(self.params())}
        for i, b in enumerate(self.branches):
            if b.center is not None:
                out[f"center{i}"] = b.center
        if self.head_center is not None:
            out["head_center"] = self.head_center
        return out

    def load_state_dict(self, state) -> None:
        for i, p in enumerate(self.params()):
            p.data[...] = state[f"p{i}"]
        for i, b in enumerate(self.branches):
            if f"center{i}" in state:
                b.center = np.asarray(state[f"center{i}"])
        if "head_center" in state:
            self.head_center = np.asarray(state["head_center"])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        meta = {"config": asdict(self.cfg), "dims": self.dims, "beta": self.beta, "r": self.r}
        np.savez(path.with_suffix(".npz"), **self.state_dict())
        path.with_suffix(".model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OmibModel":
        path = Path(path)
        meta = json.loads(path.with_suffix(".model.json").read_text())
        model = cls(meta["dims"], TrainConfig(**meta["config"]))
        with np.load(path.with_suffix(".npz")) as z:
            model.load_state_dict(dict(z))
        model.beta, model.r = meta["beta"], meta["r"]
        return model


# -- r ---------------------------------------------------------------------


def compute_r(kl_num, kl_den, estimator: str = "ratio-of-means") -> float:
    """``1 - tanh(ln rho)``, evaluated as ``2 / (rho^2 + 1)``.

    ``rho`` is ``mean(kl_num) / mean(kl_den)`` for the ratio-of-means
    estimator, or ``mean(kl_num / kl_den)`` over samples for mean-of-ratios.
    KLs are clamped at 1e-8 and ratios clipped to [1e-6, 1e6], so r stays
    strictly inside (0, 2).
    """
    num = np.asarray(kl_num, dtype=np.float64).reshape(-1)
    den = np.asarray(kl_den, dtype=np.float64).reshape(-1)
    if num.size == 0 or num.shape != den.shape:
        raise ValueError(f"compute_r: need equal non-empty KL vectors, got {num.shape} and {den.shape}")
    if estimator == "ratio-of-means":
        ratio = max(num.mean(), RATIO_CLAMP) / max(den.mean(), RATIO_CLAMP)
        rho = float(np.clip(ratio, *RATIO_CLIP))
    elif estimator == "mean-of-ratios":
        ratio = np.maximum(num, RATIO_CLAMP) / np.maximum(den, RATIO_CLAMP)
        rho = float(np.clip(ratio, *RATIO_CLIP).mean())
    else:
        raise ValueError(f"unknown r estimator {estimator!r}; expected one of {R_ESTIMATORS}")
    return 2.0 / (rho * rho + 1.0)


def r_from_rho_tanh(rho: float) -> float:
    """The literal ``1 - tanh(ln rho)`` form, kept for cross-checking :func:`compute_r`."""
    return 1.0 - float(np.tanh(np.log(rho)))


def compute_r_multi(kls: Sequence, estimator: str = "ratio-of-means") -> list[float]:
    """Weights for modalities 2..M, each relative to modality 1's KLs."""
    if len(kls) < 2:
        raise ValueError("compute_r_multi: need KLs for at least 2 modalities")
    return [compute_r(k, kls[0], estimator) for k in kls[1:]]


def predictive_kl(task: str, branch_pred: T.Tensor, fused_pred: T.Tensor) -> np.ndarray:
    """Per-sample KL between a branch head's and the fused head's predictive distributions.

    Non-classification heads are read as unit-variance Gaussians, giving
    half the squared distance.
    """
    if task == "classification":
        p = T.softmax(T.stop_gradient(branch_pred), axis=1)
        q = T.softmax(T.stop_gradient(fused_pred), axis=1)
        return kl_categorical(p, q).data
    d = branch_pred.data - fused_pred.data
    return 0.5 * np.sum(d * d, axis=1)


# -- losses ----------------------------------------------------------------


@dataclass
class OmfTerms:
    loss: T.Tensor
    head: float
    kl: list[float]
    weighted_kl: list[float]


def omf_loss(head_loss: T.Tensor, kls: Sequence[T.Tensor], beta: float, r_values: Sequence[float]) -> OmfTerms:
    """``head_loss + beta * (KL_1 + sum_j r_j KL_{j+1})`` with batch-mean KLs.

    ``kls`` are per-sample KL vectors for each modality's VAE head.
    """
    if len(r_values) != len(kls) - 1:
        raise ValueError(f"omf_loss: {len(kls)} modalities need {len(kls) - 1} r values")
    means = [k.mean() for k in kls]
    weights = [1.0] + [float(r) for r in r_values]
    total = head_loss
    weighted = []
    for w, m in zip(weights, means):
        term = m * (beta * w)
        weighted.append(float(term.data))
        total = total + term
    for name, val in [("head", float(head_loss.data))] + [(f"kl{i + 1}", float(m.data)) for i, m in enumerate(means)]:
        if not np.isfinite(val):
            raise NonFiniteLoss(f"omf_loss: term {name} is not finite")
    return OmfTerms(total, float(head_loss.data), [float(m.data) for m in means], weighted)


# -- run record --------------------------------------------------------------


@dataclass
class RunRecord:
    config: dict
    beta: float | None = None
    bounds: dict | None = None
    warm_history: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    r_trajectory: list[list[float]] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    schema_version: int = 1

    def to_json(self, include_wall_time: bool = True) -> str:
        d = asdict(self)
        if not include_wall_time:
            d.pop("wall_seconds")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


# -- training loops ------------------------------------------------------------


def _rngs(seed: int, phase: int):
    ss = np.random.SeedSequence([seed, phase])
    order_ss, noise_ss = ss.spawn(2)
    return np.random.default_rng(order_ss), np.random.default_rng(noise_ss)


def _batches(n: int, bs: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, bs):
        yield order[start : start + bs]


def _check(loss: T.Tensor, where: str) -> None:
    if not np.isfinite(loss.data):
        raise NonFiniteLoss(f"non-finite loss at {where}")


def init_branches(dims: Sequence[int], cfg: TrainConfig) -> list[TrbBranch]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB0]))
    return [TrbBranch(d, cfg, rng) for d in dims]


def _init_centers(branches, views, cfg, noise_rng):
    for b, v in zip(branches, views):
        z = b.encoder(v)
        e = noise_rng.standard_normal((v.shape[0], cfg.k))
        b.center = svdd_center(b.predict(z, e))


def warmup_train(
    cfg: TrainConfig,
    views: Sequence[np.ndarray],
    y,
    branches: list[TrbBranch] | None = None,
    history: list | None = None,
) -> list[TrbBranch]:
    """Noise-conditioned training of each branch on its own TRB loss."""
    views = [np.asarray(v, dtype=np.float64) for v in views]
    n = views[0].shape[0]
    if n == 0:
        raise ValueError("warmup_train: empty data")
    if branches is None:
        branches = init_branches([v.shape[1] for v in views], cfg)
    order_rng, noise_rng = _rngs(cfg.seed, 1)
    if cfg.task == "svdd" and branches[0].center is None:
        _init_centers(branches, views, cfg, noise_rng)
    if cfg.warm_epochs == 0:
        return branches
    opt = Adam([p for b in branches for p in b.params()], lr=cfg.lr)
    step = 0
    for epoch in range(cfg.warm_epochs):
        sums = np.zeros(len(branches))
        count = 0
        for idx in _batches(n, cfg.batch_size, order_rng):
            opt.zero_grad()
            with T.Graph() as g:
                losses = []
                for b, v in zip(branches, views):
                    z = b.encoder(v[idx])
                    e = noise_rng.standard_normal((len(idx), cfg.k))
                    pred = b.predict(z, e)
                    svdd = SvddState(b.center, cfg.svdd_lambda) if cfg.task == "svdd" else None
                    losses.append(trb_loss(cfg.task, pred, _targets(y, idx), svdd, b.params()))
                total = losses[0]
                for l in losses[1:]:
                    total = total + l
            _check(total, f"warm-up epoch {epoch} step {step}")
            T.backward(g, total)
            opt.step()
            sums += [float(l.data) for l in losses]
            count += 1
            step += 1
        if history is not None:
            history.append({"epoch": epoch, "L_TRB": (sums / count).tolist()})
    return branches


def _targets(y, idx):
    return None if y is None else np.asarray(y)[idx]


def resolve_beta(cfg: TrainConfig, bounds: BetaBounds | None) -> float:
    kind, value = parse_policy(cfg.beta_policy, ("midpoint", "sample", "fixed"))
    if kind == "fixed":
        if value <= 0:
            raise ValueError(f"beta must be > 0, got {value}")
        return value
    if bounds is None:
        raise BoundsRequired(
            f"beta policy {cfg.beta_policy!r} needs beta bounds; run the `bounds` command first"
        )
    if kind == "midpoint":
        return bounds.midpoint
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xBE7A]))
    return float(rng.uniform(bounds.lower, bounds.upper))


def _forward_main(model: OmibModel, xs, eps_list, detach_z: bool):
    zs = [b.encoder(x) for b, x in zip(model.branches, xs)]
    vae_in = [T.stop_gradient(z) if detach_z else z for z in zs]
    outs = [vae(z) for vae, z in zip(model.vaes, vae_in)]
    zetas = [reparameterize(o, e) for o, e in zip(outs, eps_list)]
    xi = model.can(zetas)
    return zs, outs, xi


def _head_loss(model: OmibModel, pred, targets):
    cfg = model.cfg
    svdd = SvddState(model.head_center, cfg.svdd_lambda) if cfg.task == "svdd" else None
    return trb_loss(cfg.task, pred, targets, svdd, model.head.params())


def batch_loss(model: OmibModel, xs, targets, eps, beta: float, r_values: Sequence[float] | None = None):
    """Total loss ``L_OMF + sum_i L_TRB_i`` on one batch.

    ``eps`` holds one list of per-modality noise arrays per Monte Carlo
    sample. With ``r_values`` None the r weights are computed from the
    batch's predictive KLs. Returns ``(total, omf_terms, trb_losses, r_values)``.
    """
    cfg = model.cfg
    m = model.n_modalities
    nb = xs[0].shape[0]
    head_losses, trb_losses, pred_kls = [], [[] for _ in range(m)], [np.zeros(nb) for _ in range(m)]
    kls = None
    for eps_s in eps:
        zs, outs, xi = _forward_main(model, xs, eps_s, cfg.detach_z)
        if kls is None:
            kls = [kl_diag_gauss_std(o) for o in outs]
        fused = model.head(xi)
        head_losses.append(_head_loss(model, fused, targets))
        side = T.stop_gradient(xi) if cfg.detach_xi else xi
        for i, b in enumerate(model.branches):
            pred_i = b.predict(zs[i], side)
            svdd = SvddState(b.center, cfg.svdd_lambda) if cfg.task == "svdd" else None
            trb_losses[i].append(trb_loss(cfg.task, pred_i, targets, svdd, b.params()))
            pred_kls[i] += predictive_kl(cfg.task, pred_i, fused) / len(eps)
    head = _mean(head_losses)
    trbs = [_mean(t) for t in trb_losses]
    r_vals = compute_r_multi(pred_kls, cfg.r_estimator) if r_values is None else list(r_values)
    terms = omf_loss(head, kls, beta, r_vals)
    total = terms.loss
    for t in trbs:
        total = total + t
    return total, terms, trbs, r_vals


def main_train(
    cfg: TrainConfig,
    views: Sequence[np.ndarray],
    y,
    branches: list[TrbBranch],
    bounds: BetaBounds | None = None,
    test: tuple[Sequence[np.ndarray], np.ndarray] | None = None,
    record: RunRecord | None = None,
) -> tuple[OmibModel, RunRecord]:
    """Joint training of branches and the fusion block; returns the model and its record."""
    t0 = time.perf_counter()
    views = [np.asarray(v, dtype=np.float64) for v in views]
    n = views[0].shape[0]
    m = len(views)
    beta = resolve_beta(cfg, bounds)
    r_kind, r_fixed = parse_policy(cfg.r_mode, ("dynamic", "fixed"))
    if r_kind == "fixed" and not 0.0 < r_fixed < 2.0:
        raise ValueError(f"fixed r must lie in (0, 2), got {r_fixed}")
    fixed_r = None if r_kind == "dynamic" else [r_fixed] * (m - 1)

    model = OmibModel([v.shape[1] for v in views], cfg, branches=branches)
    model.beta = beta
    record = record or RunRecord(config=asdict(cfg))
    record.beta = beta
    if bounds is not None:
        record.bounds = bounds.to_json()
    order_rng, noise_rng = _rngs(cfg.seed, 2)

    if cfg.task == "svdd":
        mus = [model.vaes[i](model.branches[i].encoder(v)).mu for i, v in enumerate(views)]
        model.head_center = svdd_center(model.head(model.can(mus)))

    opt = Adam(model.params(), lr=cfg.lr)
    step = 0
    for epoch in range(cfg.main_epochs):
        acc = {"L": 0.0, "L_OMF": 0.0, "head": 0.0, "L_TRB": np.zeros(m), "KL": np.zeros(m)}
        rs = []
        count = 0
        for idx in _batches(n, cfg.batch_size, order_rng):
            xs = [v[idx] for v in views]
            tgt = _targets(y, idx)
            nb = len(idx)
            eps = [[noise_rng.standard_normal((nb, cfg.k)) for _ in range(m)] for _ in range(cfg.mc_samples)]
            opt.zero_grad()
            with T.Graph() as g:
                total, terms, trbs, r_vals = batch_loss(model, xs, tgt, eps, beta, fixed_r)
            _check(total, f"main epoch {epoch} step {step}")
            T.backward(g, total)
            opt.step()
            model.r = r_vals
            rs.append(r_vals)
            acc["L"] += float(total.data)
            acc["L_OMF"] += float(terms.loss.data)
            acc["head"] += terms.head
            acc["L_TRB"] += [float(t.data) for t in trbs]
            acc["KL"] += terms.kl
            count += 1
            step += 1
        r_arr = np.asarray(rs)
        entry = {
            "epoch": epoch,
            "beta": beta,
            "L": acc["L"] / count,
            "L_OMF": acc["L_OMF"] / count,
            "head_loss": acc["head"] / count,
            "L_TRB": (acc["L_TRB"] / count).tolist(),
            "KL": (acc["KL"] / count).tolist(),
            "r_mean": r_arr.mean(axis=0).tolist(),
            "r_min": r_arr.min(axis=0).tolist(),
            "r_max": r_arr.max(axis=0).tolist(),
        }
        if test is not None and cfg.task == "classification":
            entry["test_accuracy"] = evaluate(model, *test)
        record.epochs.append(entry)
        record.r_trajectory.extend(r_arr.tolist())

    if test is not None:
        if cfg.task == "classification":
            record.final["accuracy"] = evaluate(model, *test)
        elif cfg.task == "regression":
            _, pred = infer(model, test[0])
            record.final["mse"] = float(np.mean((pred.reshape(-1) - np.asarray(test[1])) ** 2))
    if record.r_trajectory:
        record.final["mean_r"] = np.asarray(record.r_trajectory).mean(axis=0).tolist()
    record.wall_seconds += time.perf_counter() - t0
    return model, record


def _mean(ts: list[T.Tensor]) -> T.Tensor:
    out = ts[0]
    for t in ts[1:]:
        out = out + t
    return out * (1.0 / len(ts)) if len(ts) > 1 else out


# -- inference -------------------------------------------------------------


def infer(model: OmibModel, views: Sequence[np.ndarray]):
    """Deterministic fused embedding (VAE means, no sampling) and fused-head output."""
    if len(views) != model.n_modalities:
        raise ValueError(f"infer: model has {model.n_modalities} modalities, got {len(views)}")
    for v, d in zip(views, model.dims):
        if np.asarray(v).shape[1] != d:
            raise T.ShapeError(f"infer: view width {np.asarray(v).shape[1]} != {d}")
    mus = [vae(b.encoder(np.asarray(v, dtype=np.float64))).mu for b, vae, v in zip(model.branches, model.vaes, views)]
    xi = model.can(mus)
    return xi.data, model.head(xi).data


def anomaly_scores(model: OmibModel, views) -> np.ndarray:
    _, out = infer(model, views)
    return np.sum((out - model.head_center) ** 2, axis=1)


def evaluate(model: OmibModel, views, y) -> float:
    _, logits = infer(model, views)
    return accuracy(np.argmax(logits, axis=1), np.asarray(y))


def fit_omib(
    cfg: TrainConfig,
    train_views,
    y_train,
    bounds: BetaBounds | None = None,
    test=None,
    branches: list[TrbBranch] | None = None,
) -> tuple[OmibModel, RunRecord]:
    """Warm-up followed by main training. Pre-warmed ``branches`` are deep-copied, not mutated."""
    t0 = time.perf_counter()
    record = RunRecord(config=asdict(cfg))
    if branches is None:
        branches = warmup_train(cfg, train_views, y_train, history=record.warm_history)
    else:
        branches = copy.deepcopy(branches)
    record.wall_seconds = time.perf_counter() - t0
    return main_train(cfg, train_views, y_train, branches, bounds=bounds, test=test, record=record)


# -- plain classifier used for oracle feature views ----------------------------


class ViewClassifier:
    def __init__(self, d_in: int, cfg: TrainConfig, rng):
        self.encoder = Mlp(MlpConfig((d_in, cfg.encoder_hidden, cfg.k), "gelu"), rng)
        self.head = Mlp(MlpConfig((cfg.k, cfg.head_hidden, cfg.n_classes), "gelu"), rng)

    def params(self):
        return self.encoder.params() + self.head.params()

    def __call__(self, x):
        return self.head(self.encoder(x))


def train_view_classifier(
    cfg: TrainConfig, X, y, X_test, y_test, epochs: int | None = None, batch_size: int | None = None
) -> float:
    """Encoder-plus-head classifier from the same MLP family; returns test accuracy."""
    X = np.asarray(X, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC1]))
    clf = ViewClassifier(X.shape[1], cfg, rng)
    opt = Adam(clf.params(), lr=cfg.lr)
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC2]))
    epochs = cfg.main_epochs if epochs is None else epochs
    batch_size = cfg.batch_size if batch_size is None else batch_size
    for _ in range(epochs):
        for idx in _batches(X.shape[0], batch_size, order_rng):
            opt.zero_grad()
            with T.Graph() as g:
                loss = softmax_cross_entropy(clf(X[idx]), y[idx])
            T.backward(g, loss)
            opt.step()
    pred = np.argmax(clf(np.asarray(X_test, dtype=np.float64)).data, axis=1)
    return accuracy(pred, y_test)

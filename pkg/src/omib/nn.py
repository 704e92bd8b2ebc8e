"""Network blocks and closed-form loss kernels built on :mod:`omib.tensor`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

ACTIVATIONS = {
    "gelu": T.gelu,
    "relu": T.relu,
    "leaky-relu": T.leaky_relu,
    "tanh": T.tanh,
    "none": None,
}


class Module:
    """Minimal parameter container: subclasses list their tensors in ``params()``."""

    def params(self) -> list[Tensor]:
        raise NotImplementedError

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}{i}": p.data.copy() for i, p in enumerate(self.params())}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for i, p in enumerate(self.params()):
            arr = state[f"{prefix}{i}"]
            if arr.shape != p.shape:
                raise ShapeError(f"load_state_dict: {prefix}{i} has shape {arr.shape}, expected {p.shape}")
            p.data[...] = arr


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"linear: input width {x.shape[-1]} != {self.n_in}")
        return x @ self.weight + self.bias

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple[int, ...]
    activation: str = "gelu"
    final_activation: str = "none"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("MlpConfig needs at least one linear layer (two widths)")
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"MlpConfig widths must be positive: {self.widths}")
        for a in (self.activation, self.final_activation):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")


class Mlp(Module):
    def __init__(self, cfg: MlpConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = [Linear(a, b, rng) for a, b in zip(cfg.widths[:-1], cfg.widths[1:])]

    def __call__(self, x) -> Tensor:
        return mlp_forward(self, x)

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]


def mlp_forward(mlp: Mlp, x) -> Tensor:
    x = T.as_tensor(x)
    if x.shape[-1] != mlp.cfg.widths[0]:
        raise ShapeError(f"mlp: input width {x.shape[-1]} != {mlp.cfg.widths[0]}")
    hidden = ACTIVATIONS[mlp.cfg.activation]
    last = ACTIVATIONS[mlp.cfg.final_activation]
    n = len(mlp.layers)
    for i, layer in enumerate(mlp.layers):
        x = layer(x)
        act = last if i == n - 1 else hidden
        if act is not None:
            x = act(x)
    return x


class VaeHeadOutput(NamedTuple):
    mu: Tensor
    log_var: Tensor


class VaeHead(Module):
    """One shared GELU layer followed by separate linear mean and log-variance heads."""

    def __init__(self, n_in: int, k: int, rng: np.random.Generator):
        self.trunk = Linear(n_in, k, rng)
        self.mu_head = Linear(k, k, rng)
        self.log_var_head = Linear(k, k, rng)

    def __call__(self, z) -> VaeHeadOutput:
        return vae_head(self, z)

    def params(self) -> list[Tensor]:
        return self.trunk.params() + self.mu_head.params() + self.log_var_head.params()


def vae_head(head: VaeHead, z) -> VaeHeadOutput:
    h = T.gelu(head.trunk(z))
    return VaeHeadOutput(head.mu_head(h), head.log_var_head(h))


def reparameterize(out: VaeHeadOutput, eps) -> Tensor:
    """``mu + exp(log_var / 2) * eps``; ``eps`` is treated as a constant."""
    eps = T.as_tensor(eps)
    if eps.shape != out.mu.shape or out.log_var.shape != out.mu.shape:
        raise ShapeError(
            f"reparameterize: mu {out.mu.shape}, log_var {out.log_var.shape}, eps {eps.shape}"
        )
    return out.mu + T.exp(out.log_var * 0.5) * eps


class CrossAttention(Module):
    """Single-head scaled dot-product attention across modality tokens.

    Each sample contributes one token per modality. Attention mixes tokens
    within a sample only; the attended tokens are concatenated and mapped
    back to ``k`` dimensions by ``w_out``.
    """

    def __init__(self, k: int, n_modalities: int, rng: np.random.Generator, d_attn: int | None = None):
        d = d_attn or k
        bound = 1.0 / np.sqrt(k)
        self.k = k
        self.n_modalities = n_modalities
        self.w_q = Tensor(rng.uniform(-bound, bound, size=(k, d)), requires_grad=True)
        self.w_k = Tensor(rng.uniform(-bound, bound, size=(k, d)), requires_grad=True)
        self.w_v = Tensor(rng.uniform(-bound, bound, size=(k, d)), requires_grad=True)
        self.w_out = Linear(n_modalities * d, k, rng)

    def __call__(self, zetas: Sequence[Tensor]) -> Tensor:
        return cross_attention_fuse(self, zetas)

    def params(self) -> list[Tensor]:
        return [self.w_q, self.w_k, self.w_v] + self.w_out.params()


def cross_attention_fuse(attn: CrossAttention, zetas: Sequence[Tensor]) -> Tensor:
    zetas = [T.as_tensor(z) for z in zetas]
    if len(zetas) < 2:
        raise ShapeError(f"cross_attention_fuse: need at least 2 modalities, got {len(zetas)}")
    if len(zetas) != attn.n_modalities:
        raise ShapeError(
            f"cross_attention_fuse: built for {attn.n_modalities} modalities, got {len(zetas)}"
        )
    shape = zetas[0].shape
    if any(z.shape != shape for z in zetas) or shape[-1] != attn.k:
        raise ShapeError(f"cross_attention_fuse: shapes {[z.shape for z in zetas]}, k={attn.k}")
    n, m = shape[0], len(zetas)
    tokens = T.concat([z.reshape(n, 1, attn.k) for z in zetas], axis=1)  # [N, M, k]
    q = tokens @ attn.w_q
    kk = tokens @ attn.w_k
    v = tokens @ attn.w_v
    d = q.shape[-1]
    scores = (q @ kk.T) * (1.0 / np.sqrt(d))  # [N, M, M]
    weights = T.softmax(scores, axis=-1)
    mixed = weights @ v  # [N, M, d]
    return attn.w_out(mixed.reshape(n, m * d))


def kl_diag_gauss_std(out: VaeHeadOutput) -> Tensor:
    """Per-sample KL( N(mu, diag(exp(log_var))) || N(0, I) )."""
    mu, lv = out.mu, out.log_var
    return (T.square(mu) + T.exp(lv) - 1.0 - lv).sum(axis=-1) * 0.5


def kl_categorical(p, q) -> Tensor:
    """KL(p || q) along the last axis, both operands clamped at 1e-12 inside the logs.

    Works on single distributions or batches of row distributions.
    """
    p, q = T.as_tensor(p), T.as_tensor(q)
    if p.shape != q.shape:
        raise ShapeError(f"kl_categorical: support mismatch {p.shape} vs {q.shape}")
    for name, x in (("p", p), ("q", q)):
        if np.any(x.data < 0) or np.any(np.abs(x.data.sum(axis=-1) - 1.0) > 1e-6):
            raise ValueError(f"kl_categorical: {name} is not a probability vector")
    return (p * (T.log(p) - T.log(q))).sum(axis=-1)


def softmax_cross_entropy(logits, labels) -> Tensor:
    logits = T.as_tensor(logits)
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} for logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"cross_entropy: labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels.astype(int)] = 1.0
    return -(T.log_softmax(logits, axis=-1) * onehot).sum() * (1.0 / n)

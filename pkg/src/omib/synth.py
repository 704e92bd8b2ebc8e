"""Synthetic Gaussian multimodal classification data.

Two-modality observations are assembled from independent standard-normal
blocks::

    x1 = [b0; b1; a0; a1]        x2 = [b0; b2; a0; a2]

``a*`` blocks are task relevant, ``b*`` blocks superfluous, ``*0`` blocks
shared between the modalities. The label is the sign of a random hyperplane
over ``[a0; a1; a2]``. Block offsets are kept with the dataset so oracle
feature views (e.g. exactly the task-relevant blocks) can be sliced out.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

VIEWS = (
    "consistent-relevant",
    "specific-relevant",
    "unimodal-1",
    "unimodal-2",
    "authentic-optimal",
    "union",
)


@dataclass(frozen=True)
class SimConfig:
    d0: int = 200
    d0p: int = 200
    d11: int = 500
    d12: int = 200
    d21: int = 100
    d22: int = 200
    n: int = 10000
    seed: int = 0
    train_fraction: float = 0.9
    preset: str = "custom"
    # Sub-seed for the superfluous blocks only; None derives it from ``seed``.
    superfluous_seed: int | None = None

    def __post_init__(self):
        dims = (self.d0, self.d0p, self.d11, self.d12, self.d21, self.d22)
        if any(d < 0 for d in dims):
            raise ValueError(f"block dims must be >= 0, got {dims}")
        if self.d0 + self.d11 + self.d21 < 1:
            raise ValueError("the label needs at least one task-relevant dimension")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def blocks(self) -> dict[str, int]:
        return {"a0": self.d0, "b0": self.d0p, "a1": self.d11, "b1": self.d12, "a2": self.d21, "b2": self.d22}


@dataclass(frozen=True)
class Sim3Config:
    """Three modalities with blocks shared by all, by pairs, or private.

    Block names follow ``a00`` (shared by all three), ``aij`` (shared by
    modalities i and j) and ``aii`` (private to i); likewise for ``b``.
    """

    a00: int = 100
    a11: int = 100
    a22: int = 100
    a33: int = 100
    a12: int = 50
    a13: int = 50
    a23: int = 50
    b00: int = 100
    b11: int = 100
    b22: int = 100
    b33: int = 100
    b12: int = 50
    b13: int = 50
    b23: int = 50
    n: int = 10000
    seed: int = 0
    train_fraction: float = 0.9
    preset: str = "sim3mod"
    superfluous_seed: int | None = None

    def __post_init__(self):
        dims = self.blocks()
        if any(d < 0 for d in dims.values()):
            raise ValueError(f"block dims must be >= 0, got {dims}")
        if sum(v for k, v in dims.items() if k.startswith("a")) < 1:
            raise ValueError("the label needs at least one task-relevant dimension")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def blocks(self) -> dict[str, int]:
        names = ("a00", "a11", "a22", "a33", "a12", "a13", "a23",
                 "b00", "b11", "b22", "b33", "b12", "b13", "b23")
        return {k: getattr(self, k) for k in names}


def _sim3_membership(block: str) -> tuple[int, ...]:
    i, j = int(block[1]), int(block[2])
    if i == 0:
        return (0, 1, 2)
    if i == j:
        return (i - 1,)
    return (i - 1, j - 1)


PRESETS: dict[str, SimConfig | Sim3Config] = {
    "sim1": SimConfig(d11=500, d21=100, preset="sim1"),
    "sim2": SimConfig(d11=100, d21=500, preset="sim2"),
    "sim3": SimConfig(d11=300, d21=300, preset="sim3"),
    "sim3mod": Sim3Config(),
}


def preset(name: str, **overrides) -> SimConfig | Sim3Config:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


@dataclass
class SimDataset:
    views: list[np.ndarray]
    y: np.ndarray
    delta: np.ndarray
    # per view: block name -> (start, stop) column offsets
    layout: list[dict[str, tuple[int, int]]]
    relevant_order: tuple[str, ...]
    config: dict = field(default_factory=dict)
    preset: str = "custom"
    indices: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n_modalities(self) -> int:
        return len(self.views)

    @property
    def x1(self) -> np.ndarray:
        return self.views[0]

    @property
    def x2(self) -> np.ndarray:
        return self.views[1]

    @property
    def x3(self) -> np.ndarray:
        return self.views[2]

    def block(self, name: str) -> np.ndarray:
        for view, lay in zip(self.views, self.layout):
            if name in lay:
                lo, hi = lay[name]
                return view[:, lo:hi]
        raise KeyError(f"no block {name!r} in layout")

    def subset(self, idx: np.ndarray) -> "SimDataset":
        base = self.indices if self.indices is not None else np.arange(self.n)
        return replace(
            self,
            views=[v[idx] for v in self.views],
            y=self.y[idx],
            indices=base[idx],
        )


def _stack(blocks: dict[str, np.ndarray], order: list[str], n: int):
    cols, lay, off = [], {}, 0
    for name in order:
        b = blocks[name]
        lay[name] = (off, off + b.shape[1])
        off += b.shape[1]
        cols.append(b)
    x = np.concatenate(cols, axis=1) if cols else np.zeros((n, 0))
    return np.ascontiguousarray(x), lay


def _draw_blocks(cfg, dims: dict[str, int]):
    if cfg.n <= 0:
        raise ValueError(f"n must be positive, got {cfg.n}")
    relevant_ss, superfluous_ss, delta_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    if cfg.superfluous_seed is not None:
        superfluous_ss = np.random.SeedSequence(cfg.superfluous_seed)
    rng_a = np.random.default_rng(relevant_ss)
    rng_b = np.random.default_rng(superfluous_ss)
    blocks = {}
    for name, d in dims.items():
        rng = rng_a if name.startswith("a") else rng_b
        blocks[name] = rng.standard_normal((cfg.n, d))
    return blocks, np.random.default_rng(delta_ss)


def _label(blocks, relevant_order, rng_delta):
    a = np.concatenate([blocks[k] for k in relevant_order], axis=1)
    delta = rng_delta.standard_normal(a.shape[1])
    return (a @ delta > 0).astype(np.int64), delta


def generate_sim(cfg: SimConfig) -> SimDataset:
    blocks, rng_delta = _draw_blocks(cfg, cfg.blocks())
    relevant = ("a0", "a1", "a2")
    y, delta = _label(blocks, relevant, rng_delta)
    x1, l1 = _stack(blocks, ["b0", "b1", "a0", "a1"], cfg.n)
    x2, l2 = _stack(blocks, ["b0", "b2", "a0", "a2"], cfg.n)
    return SimDataset(
        views=[x1, x2],
        y=y,
        delta=delta,
        layout=[l1, l2],
        relevant_order=relevant,
        config=asdict(cfg),
        preset=cfg.preset,
    )


def generate_sim3(cfg: Sim3Config) -> SimDataset:
    dims = cfg.blocks()
    blocks, rng_delta = _draw_blocks(cfg, dims)
    relevant = tuple(k for k in dims if k.startswith("a"))
    y, delta = _label(blocks, relevant, rng_delta)
    views, layout = [], []
    for m in range(3):
        order = [k for k in dims if k.startswith("b") and m in _sim3_membership(k)]
        order += [k for k in dims if k.startswith("a") and m in _sim3_membership(k)]
        x, lay = _stack(blocks, order, cfg.n)
        views.append(x)
        layout.append(lay)
    return SimDataset(
        views=views,
        y=y,
        delta=delta,
        layout=layout,
        relevant_order=relevant,
        config=asdict(cfg),
        preset=cfg.preset,
    )


def generate(cfg: SimConfig | Sim3Config) -> SimDataset:
    return generate_sim3(cfg) if isinstance(cfg, Sim3Config) else generate_sim(cfg)


def split_train_test(ds: SimDataset, fraction: float = 0.9, seed: int | None = None):
    """Seeded shuffle, then the first ``round(fraction * n)`` rows are train."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n_train = int(round(fraction * ds.n))
    if n_train == 0 or n_train == ds.n:
        raise ValueError(f"split of n={ds.n} at {fraction} leaves an empty side")
    if seed is None:
        seed = ds.config.get("seed", 0)
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])).permutation(ds.n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def _view_blocks(ds: SimDataset, view: str) -> list[str]:
    if ds.n_modalities == 2:
        table = {
            "consistent-relevant": ["a0"],
            "specific-relevant": ["a1", "a2"],
            "authentic-optimal": ["a0", "a1", "a2"],
            "union": ["a0", "b0", "a1", "b1", "a2", "b2"],
        }
    else:
        rel = list(ds.relevant_order)
        table = {
            "consistent-relevant": [k for k in rel if len(_sim3_membership(k)) > 1],
            "specific-relevant": [k for k in rel if len(_sim3_membership(k)) == 1],
            "authentic-optimal": rel,
            "union": list(dict.fromkeys(k for lay in ds.layout for k in lay)),
        }
    if view not in table:
        raise ValueError(f"unknown oracle view {view!r}; choose from {VIEWS}")
    return table[view]


def oracle_feature_view(ds: SimDataset, view: str) -> np.ndarray:
    if view.startswith("unimodal-"):
        i = int(view.split("-")[1]) - 1
        if not 0 <= i < ds.n_modalities:
            raise ValueError(f"unknown oracle view {view!r}")
        return ds.views[i]
    if view not in VIEWS:
        raise ValueError(f"unknown oracle view {view!r}; choose from {VIEWS}")
    parts = [ds.block(k) for k in _view_blocks(ds, view)]
    return np.ascontiguousarray(np.concatenate(parts, axis=1))


# -- persistence -----------------------------------------------------------


def save_dataset(ds: SimDataset, directory: str | Path, name: str | None = None) -> tuple[Path, Path]:
    """Write ``<name>.f64`` (little-endian float64, row-major) and ``<name>.json``.

    Arrays are written back to back in the order listed under ``arrays`` in
    the sidecar: each view, then labels, then the hyperplane.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = name or ds.preset
    arrays = [(f"x{i + 1}", v) for i, v in enumerate(ds.views)]
    arrays += [("y", ds.y.astype("<f8")), ("delta", ds.delta)]
    raw = directory / f"{name}.f64"
    with open(raw, "wb") as fh:
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    meta = {
        "schema_version": SCHEMA_VERSION,
        "preset": ds.preset,
        "seed": ds.config.get("seed"),
        "config": ds.config,
        "arrays": [{"name": k, "shape": list(a.shape)} for k, a in arrays],
        "layout": [{k: list(v) for k, v in lay.items()} for lay in ds.layout],
        "relevant_order": list(ds.relevant_order),
        "indices": None if ds.indices is None else ds.indices.tolist(),
    }
    side = directory / f"{name}.json"
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return raw, side


def load_dataset(path: str | Path) -> SimDataset:
    """Load from either file of the pair (or the shared stem)."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".f64", ".json") else path
    meta = json.loads(stem.with_suffix(".json").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema {meta.get('schema_version')}")
    if "layout" not in meta:
        raise ValueError("dataset sidecar has no layout metadata")
    flat = np.fromfile(stem.with_suffix(".f64"), dtype="<f8")
    arrays, off = {}, 0
    for spec in meta["arrays"]:
        size = int(np.prod(spec["shape"]))
        arrays[spec["name"]] = flat[off : off + size].reshape(spec["shape"]).astype(np.float64)
        off += size
    if off != flat.size:
        raise ValueError(f"{stem}.f64 holds {flat.size} values, sidecar declares {off}")
    views = [arrays[f"x{i}"] for i in range(1, len(meta["layout"]) + 1)]
    return SimDataset(
        views=views,
        y=arrays["y"].astype(np.int64),
        delta=arrays["delta"],
        layout=[{k: tuple(v) for k, v in lay.items()} for lay in meta["layout"]],
        relevant_order=tuple(meta["relevant_order"]),
        config=meta["config"],
        preset=meta["preset"],
        indices=None if meta["indices"] is None else np.asarray(meta["indices"]),
    )

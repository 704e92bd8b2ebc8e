"""Command-line driver: ``gen``, ``bounds``, ``train``, ``sweep``, ``table1``.

Settings resolve in three layers: built-in defaults, then a JSON config file
with flat dotted keys (``{"train.lr": 1e-4, "sim.n": 2000}``), then flags.
The global seed comes from ``--seed``, the config's ``seed`` key, or the
``OMIB_SEED`` environment variable, in that order, and seeds every
component whose own seed key is not set.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import synth
from .mine import BetaBounds, MineConfig, compute_beta_bounds
from .tensor import NumericError
from .train import (
    BoundsRequired,
    NonFiniteLoss,
    TrainConfig,
    fit_omib,
    train_view_classifier,
    warmup_train,
)

log = logging.getLogger("omib")

SCHEMA_VERSION = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3
DEFAULT_GRID = ("1e-6", "1e-4", "1e-2", "m_l", "mid", "m_u", "2m_u", "1", "10")
SWEEP_COLUMNS = ("beta", "m_l", "m_u", "acc", "mean_r", "wall_seconds", "seed", "beta_le_m_u", "schema_version")
TABLE1_COLUMNS = ("row", "accuracy", "input_dim", "schema_version")


class UsageError(ValueError):
    pass


# -- configuration ---------------------------------------------------------


def _coerce(value, current):
    if isinstance(value, str) and not isinstance(current, str) and current is not None:
        if isinstance(current, bool):
            return value.lower() in ("1", "true", "yes")
        return type(current)(value)
    return value


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {path} not found")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path}: {e}") from None
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise UsageError(f"config file {path} must be a flat object of dotted keys")
    return data


def resolve_seed(flag: int | None, cfg: dict) -> int:
    if flag is not None:
        return flag
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get("OMIB_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"OMIB_SEED must be an integer, got {env!r}") from None
    return 0


def _apply(obj, section: str, settings: dict, seed: int):
    """Apply ``section.*`` settings onto a frozen dataclass, seeding it from ``seed`` unless set."""
    known = {f.name for f in fields(obj)}
    updates = {}
    if "seed" in known:
        updates["seed"] = seed
    for key, value in settings.items():
        head, _, name = key.partition(".")
        if head != section:
            continue
        if name not in known:
            raise UsageError(f"unknown setting {key!r}")
        updates[name] = _coerce(value, getattr(obj, name))
    try:
        return replace(obj, **updates)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid {section} settings: {e}") from None


def _flag_settings(args, mapping: dict[str, str]) -> dict:
    out = {}
    for attr, key in mapping.items():
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = v
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def settings_for(args, mapping: dict[str, str]) -> tuple[dict, int]:
    file_cfg = load_config(args.config)
    merged = {**file_cfg, **_flag_settings(args, mapping)}
    seed = resolve_seed(args.seed, merged)
    return merged, seed


TRAIN_FLAGS = {
    "warm_epochs": "train.warm_epochs",
    "main_epochs": "train.main_epochs",
    "batch_size": "train.batch_size",
    "lr": "train.lr",
    "beta_policy": "train.beta_policy",
    "r_mode": "train.r_mode",
    "r_estimator": "train.r_estimator",
    "mc_samples": "train.mc_samples",
    "task": "train.task",
}
MINE_FLAGS = {
    "mine_epochs": "mine.epochs",
    "mine_batch": "mine.batch_size",
    "mine_hidden": "mine.hidden",
    "mine_lr": "mine.lr",
}


# -- helpers ---------------------------------------------------------------


def _load(path) -> synth.SimDataset:
    if path is None:
        raise UsageError("--data is required")
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".f64", ".json") else p
    if not stem.with_suffix(".json").exists() or not stem.with_suffix(".f64").exists():
        raise UsageError(f"dataset {path} not found (need {stem}.f64 and {stem}.json)")
    return synth.load_dataset(stem)


def _split(ds: synth.SimDataset):
    return synth.split_train_test(ds, ds.config.get("train_fraction", 0.9), ds.config.get("seed", 0))


def _load_bounds(path) -> BetaBounds | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise UsageError(f"bounds file {path} not found")
    return BetaBounds.from_json(json.loads(p.read_text()))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    path.write_text(buf.getvalue())


def _mean_r(record) -> float:
    return float(np.mean(record.r_trajectory)) if record.r_trajectory else float("nan")


def _bounds_needed(train_cfg: TrainConfig) -> bool:
    return not train_cfg.beta_policy.startswith("fixed")


def _bounds_for(ds, train_views, args, settings, seed):
    """Bounds from ``--bounds`` if given, else estimated on the training views."""
    b = _load_bounds(getattr(args, "bounds", None))
    if b is not None:
        if (b.m_l is None) != (ds.n_modalities == 3):
            raise UsageError(f"bounds file does not match a {ds.n_modalities}-modality dataset")
        return b
    mine_cfg = _apply(MineConfig(), "mine", settings, seed)
    log.info("estimating beta bounds with MINE (%s)", mine_cfg)
    return compute_beta_bounds(train_views, mine_cfg)


# -- commands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    mapping = {"n": "sim.n", "train_fraction": "sim.train_fraction"}
    settings, seed = settings_for(args, mapping)
    name = args.preset or settings.get("preset")
    if name is None:
        raise UsageError("--preset is required")
    try:
        base = synth.preset(name)
    except ValueError as e:
        raise UsageError(str(e)) from None
    cfg = _apply(base, "sim", settings, seed)
    ds = synth.generate(cfg)
    out = Path(args.out or settings.get("out", "."))
    raw, side = synth.save_dataset(ds, out, args.name or name)
    print(f"wrote {raw} and {side}")
    for i, lay in enumerate(ds.layout):
        blocks = ", ".join(f"{k}[{lo}:{hi}]" for k, (lo, hi) in lay.items())
        print(f"  x{i + 1} {ds.views[i].shape}: {blocks}")
    print(f"  y: {int(ds.y.sum())}/{ds.n} positive")
    return 0


def cmd_bounds(args) -> int:
    settings, seed = settings_for(args, MINE_FLAGS)
    ds = _load(args.data)
    train, _ = _split(ds)
    mine_cfg = _apply(MineConfig(), "mine", settings, seed)
    t0 = time.perf_counter()
    b = compute_beta_bounds(train.views, mine_cfg)
    out = b.to_json()
    out["schema_version"] = SCHEMA_VERSION
    out["mine_config"] = asdict(mine_cfg)
    out["dataset"] = ds.preset
    path = Path(args.out or "bounds.json")
    _write_json(path, out)
    log.info("bounds done in %.1fs", time.perf_counter() - t0)
    print(json.dumps({k: out[k] for k in ("m_l", "m_u", "m_l2", "m_u2")}))
    return 0


def cmd_train(args) -> int:
    settings, seed = settings_for(args, TRAIN_FLAGS)
    ds = _load(args.data)
    if args.modalities is not None and args.modalities != ds.n_modalities:
        raise UsageError(f"--modalities {args.modalities} but dataset has {ds.n_modalities}")
    cfg = _apply(TrainConfig(), "train", settings, seed)
    train, test = _split(ds)
    bounds = _load_bounds(args.bounds)
    if bounds is None and _bounds_needed(cfg):
        raise UsageError(f"beta policy {cfg.beta_policy!r} needs --bounds (run `bounds` first)")
    model, record = fit_omib(cfg, train.views, train.y, bounds=bounds, test=(test.views, test.y))
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(record.to_json())
    model.save(out / "model")
    print(json.dumps({"accuracy": record.final.get("accuracy"), "beta": record.beta, "mean_r": record.final.get("mean_r")}))
    return 0


def parse_grid(spec: str, bounds: BetaBounds | None) -> list[float]:
    """Comma list of numbers and bound tokens (m_l, mid, m_u, 2m_u), ``log:lo:hi:n``, or ``default``."""
    if spec.strip() == "":
        raise UsageError("empty beta grid")
    if spec == "default":
        tokens = list(DEFAULT_GRID)
    elif spec.startswith("log:"):
        try:
            _, lo, hi, n = spec.split(":")
            return sorted(np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(n)).tolist())
        except ValueError:
            raise UsageError(f"bad log grid {spec!r}; expected log:lo:hi:n") from None
    else:
        tokens = [t.strip() for t in spec.split(",") if t.strip()]
    if not tokens:
        raise UsageError("empty beta grid")
    named = {}
    if bounds is not None:
        named = {"m_l": bounds.lower, "mid": bounds.midpoint, "m_u": bounds.upper, "2m_u": 2 * bounds.upper}
    values = []
    for t in tokens:
        if t in ("m_l", "mid", "m_u", "2m_u"):
            if not named:
                raise UsageError(f"grid token {t!r} needs bounds")
            values.append(named[t])
        else:
            try:
                values.append(float(t))
            except ValueError:
                raise UsageError(f"bad grid value {t!r}") from None
    if any(v <= 0 for v in values):
        raise UsageError("beta values must be positive")
    return sorted(set(values))


def _sweep_point(cfg, train, test, branches):
    model, rec = fit_omib(cfg, train.views, train.y, test=(test.views, test.y), branches=branches)
    return rec.final["accuracy"], _mean_r(rec), rec.wall_seconds


def cmd_sweep(args) -> int:
    settings, seed = settings_for(args, TRAIN_FLAGS)
    ds = _load(args.data)
    cfg = _apply(TrainConfig(), "train", settings, seed)
    train, test = _split(ds)
    bounds = _load_bounds(args.bounds)
    grid = parse_grid(args.grid, bounds)
    branches = None
    if args.share_warmup:
        branches = warmup_train(cfg, train.views, train.y)
    cfgs = [replace(cfg, beta_policy=f"fixed:{b!r}") for b in grid]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_sweep_point, cfgs, [train] * len(cfgs), [test] * len(cfgs), [branches] * len(cfgs)))
    else:
        results = [_sweep_point(c, train, test, branches) for c in cfgs]
    m_l = bounds.lower if bounds else None
    m_u = bounds.upper if bounds else None
    rows = []
    for beta, (acc, mean_r, wall) in zip(grid, results):
        rows.append(
            {
                "beta": repr(beta),
                "m_l": "" if m_l is None else repr(m_l),
                "m_u": "" if m_u is None else repr(m_u),
                "acc": repr(acc),
                "mean_r": repr(mean_r),
                "wall_seconds": f"{wall:.3f}",
                "seed": seed,
                "beta_le_m_u": "" if m_u is None else int(beta <= m_u),
                "schema_version": SCHEMA_VERSION,
            }
        )
        log.info("beta=%g acc=%.4f mean_r=%.3f", beta, acc, mean_r)
    _write_csv(Path(args.out or "sweep.csv"), SWEEP_COLUMNS, rows)
    return 0


def table1_rows(ds, cfg: TrainConfig, bounds: BetaBounds | None, clf_epochs: int | None = None,
                clf_batch: int | None = None):
    """Oracle-view classifier accuracies and the OMIB accuracy, plus the OMIB run record."""
    if not ds.layout:
        raise UsageError("dataset has no layout metadata")
    train, test = _split(ds)
    views = ["consistent-relevant", "specific-relevant"]
    views += [f"unimodal-{i + 1}" for i in range(ds.n_modalities)]
    views += ["authentic-optimal", "union"]
    rows = []
    for v in views:
        Xtr, Xte = synth.oracle_feature_view(train, v), synth.oracle_feature_view(test, v)
        acc = train_view_classifier(cfg, Xtr, train.y, Xte, test.y, epochs=clf_epochs, batch_size=clf_batch)
        rows.append({"row": v, "accuracy": repr(acc), "input_dim": Xtr.shape[1], "schema_version": SCHEMA_VERSION})
        log.info("%s: %.4f", v, acc)
    _, rec = fit_omib(cfg, train.views, train.y, bounds=bounds, test=(test.views, test.y))
    acc = rec.final["accuracy"]
    rows.append({"row": "omib", "accuracy": repr(acc), "input_dim": sum(v.shape[1] for v in train.views), "schema_version": SCHEMA_VERSION})
    log.info("omib: %.4f (beta=%g)", acc, rec.beta)
    return rows, rec


def cmd_table1(args) -> int:
    settings, seed = settings_for(args, {**TRAIN_FLAGS, **MINE_FLAGS})
    ds = _load(args.data)
    cfg = _apply(TrainConfig(), "train", settings, seed)
    bounds = None
    if _bounds_needed(cfg):
        train, _ = _split(ds)
        bounds = _bounds_for(ds, train.views, args, settings, seed)
    rows, rec = table1_rows(ds, cfg, bounds, args.clf_epochs, args.clf_batch)
    out = Path(args.out or "table1.csv")
    _write_csv(out, TABLE1_COLUMNS, rows)
    out.with_suffix(".run.json").write_text(rec.to_json())
    for r in rows:
        print(f"{r['row']:>22}  {float(r['accuracy']):.4f}")
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flat dotted keys")
    common.add_argument("--seed", type=int, help="global seed (fallback: OMIB_SEED, then 0)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any dotted setting")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument("--warm-epochs", type=int)
    train_opts.add_argument("--main-epochs", type=int)
    train_opts.add_argument("--batch-size", type=int)
    train_opts.add_argument("--lr", type=float)
    train_opts.add_argument("--beta-policy", help="midpoint | sample | fixed:<value>")
    train_opts.add_argument("--r-mode", help="dynamic | fixed:<value>")
    train_opts.add_argument("--r-estimator", choices=("ratio-of-means", "mean-of-ratios"))
    train_opts.add_argument("--mc-samples", type=int)
    train_opts.add_argument("--task", choices=("classification", "svdd", "regression"))

    mine_opts = argparse.ArgumentParser(add_help=False)
    mine_opts.add_argument("--mine-epochs", type=int)
    mine_opts.add_argument("--mine-batch", type=int)
    mine_opts.add_argument("--mine-hidden", type=int)
    mine_opts.add_argument("--mine-lr", type=float)

    p = argparse.ArgumentParser(prog="omib", description="Optimal multimodal information bottleneck experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--preset", help=f"one of {sorted(synth.PRESETS)}")
    g.add_argument("--n", type=int)
    g.add_argument("--train-fraction", type=float)
    g.add_argument("--name", help="file stem (default: preset name)")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bounds", parents=[common, mine_opts], help="estimate beta bounds with MINE")
    b.add_argument("--data", required=True)
    b.set_defaults(func=cmd_bounds)

    t = sub.add_parser("train", parents=[common, train_opts], help="warm-up then main training")
    t.add_argument("--data", required=True)
    t.add_argument("--bounds")
    t.add_argument("--modalities", type=int, choices=(2, 3))
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", parents=[common, train_opts], help="train over a grid of beta values")
    s.add_argument("--data", required=True)
    s.add_argument("--bounds")
    s.add_argument("--grid", default="default", help="default | log:lo:hi:n | comma list (tokens m_l, mid, m_u, 2m_u)")
    s.add_argument("--share-warmup", action="store_true", help="reuse one warm-up for every grid point")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("table1", parents=[common, train_opts, mine_opts], help="oracle-view ablation table")
    a.add_argument("--data", required=True)
    a.add_argument("--bounds")
    a.add_argument("--clf-epochs", type=int, help="epochs for oracle-view classifiers (default: main epochs)")
    a.add_argument("--clf-batch", type=int, help="batch size for oracle-view classifiers (default: train batch)")
    a.set_defaults(func=cmd_table1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, BoundsRequired) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, NumericError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end experiment orchestration shared by the CLI and the test suite.

``run_experiment`` turns one resolved configuration into data, a model, a
training run, and per-split metrics. ``sweep_lambda`` repeats that across a
grid of auxiliary-loss multipliers on fixed data.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any

import numpy as np

from . import config as cfg_mod
from .data import EchoDataset, class_proportions, generate, split
from .models import build_model
from .training import ExperimentRecord, evaluate, train

__all__ = ["prepare_splits", "run_experiment", "sweep_lambda", "lambda_table"]


def prepare_splits(cfg: dict[str, Any]) -> tuple[EchoDataset, EchoDataset, EchoDataset]:
    """Generate and split a dataset as the configuration describes.

    With ``rotation_shift_test`` enabled, the test split is rendered
    separately from ``rotation_range_test`` using sample indices disjoint from
    the pool, so train/val geometry statistics stay untouched.
    """
    synth = cfg_mod.synth_config_from(cfg)
    fractions = tuple(cfg["split_fractions"])
    if not cfg["rotation_shift_test"]:
        pool = generate(synth)
        return split(pool, fractions, cfg["split_seed"])

    test_share = fractions[2]
    n_test = int(round(synth.n_samples * test_share))
    n_pool = synth.n_samples - n_test
    pool = generate(replace(synth, n_samples=n_pool))
    remainder = fractions[0] + fractions[1]
    train_set, val_set, _ = split(
        pool, (fractions[0] / remainder, fractions[1] / remainder, 0.0), cfg["split_seed"]
    )
    test_set = generate(
        replace(synth, n_samples=n_test),
        rotation_range=synth.rotation_range_test,
        index_offset=n_pool,
    )
    return train_set, val_set, test_set


def run_experiment(
    cfg: dict[str, Any],
    splits: tuple[EchoDataset, EchoDataset, EchoDataset] | None = None,
):
    """Train one model per the config and evaluate it on every split.

    Returns (model, record); the record embeds the full config snapshot, so a
    rerun from that snapshot reproduces it bit for bit (timings aside).
    """
    train_set, val_set, test_set = splits if splits is not None else prepare_splits(cfg)
    proportions = class_proportions(train_set.labels, cfg["n_classes"])
    model = build_model(
        cfg_mod.model_config_from(cfg),
        tuple(cfg["image_size"]),
        cfg_mod.margin_params_from(cfg),
        cfg_mod.weighted_params_from(cfg, proportions),
        seed=cfg["seed"],
    )
    record = train(
        model, train_set, val_set, cfg_mod.train_config_from(cfg), cfg_mod.config_snapshot(cfg)
    )
    record.metrics["train"] = evaluate(model, train_set)
    record.metrics["val"] = evaluate(model, val_set)
    if len(test_set):
        record.metrics["test"] = evaluate(model, test_set)
    return model, record


DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5)


def sweep_lambda(
    cfg: dict[str, Any], grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
) -> list[tuple[float, ExperimentRecord]]:
    """Retrain on fixed data for each auxiliary multiplier in ``grid``.

    Data is generated once so every run sees identical splits; only
    ``lambda_reg`` varies.
    """
    splits = prepare_splits(cfg)
    results = []
    for lam in grid:
        run_cfg = dict(cfg)
        run_cfg["lambda_reg"] = float(lam)
        _, record = run_experiment(run_cfg, splits=splits)
        results.append((float(lam), record))
    return results


def lambda_table(results: list[tuple[float, ExperimentRecord]], split_name: str = "test") -> str:
    """CSV of ranking metrics per lambda, one row per grid point."""
    rows = ["lambda,accuracy,f1,roc_auc,pr_auc"]
    for lam, record in results:
        m = record.metrics[split_name]

        def fmt(v):
            return "undefined" if v is None else repr(float(v))

        rows.append(f"{lam!r},{fmt(m.accuracy)},{fmt(m.f1)},{fmt(m.roc_auc)},{fmt(m.pr_auc)}")
    return "\n".join(rows) + "\n"

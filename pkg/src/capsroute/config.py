"""Plain-text key=value configuration with documented defaults.

A config file contains one ``key=value`` pair per line; blank lines and
``#`` comments are ignored. Keys mirror the dataclass fields they feed
(``SynthConfig`` keys carry their own names except the generator seed, which
is exposed as ``data_seed`` so it cannot collide with the training seed).
Unknown keys are rejected. Command-line ``--set key=value`` pairs override
file values, which override the defaults below.
"""

from __future__ import annotations

from typing import Any, Callable

from .capsules import RoutingSpec
from .data import SynthConfig
from .errors import ConfigurationError
from .losses import MarginLossParams, WeightedLossParams
from .models import ModelConfig
from .training import TrainConfig

__all__ = [
    "SCHEMA",
    "parse_config_file",
    "resolve",
    "synth_config_from",
    "model_config_from",
    "train_config_from",
    "margin_params_from",
    "default_config_text",
]


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {raw!r}")


def _parse_floats(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {raw!r}") from None


def _parse_ints(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ConfigurationError(f"expected comma-separated integers, got {raw!r}") from None


def _pair(parser: Callable, name: str) -> Callable:
    def parse(raw: str):
        values = parser(raw)
        if len(values) != 2:
            raise ConfigurationError(f"{name} needs exactly two values, got {raw!r}")
        return values

    return parse


# key -> (default value, parser, help text)
SCHEMA: dict[str, tuple[Any, Callable[[str], Any], str]] = {
    # data generation
    "n_samples": (2000, int, "number of synthetic samples to render"),
    "image_size": ((1, 32, 32), lambda r: tuple(_parse_ints(r)), "channels,height,width"),
    "positive_ratio": (0.2, float, "fraction of label-1 samples (exact count)"),
    "rotation_range_train": ((-15.0, 15.0), _pair(_parse_floats, "rotation_range_train"), "degrees, lo,hi"),
    "rotation_range_test": ((-45.0, 45.0), _pair(_parse_floats, "rotation_range_test"), "degrees, lo,hi"),
    "translation_range": (2.0, float, "max |chamber jitter| in pixels"),
    "width_normal": ((6.0, 9.0), _pair(_parse_floats, "width_normal"), "label-0 chamber width interval, px"),
    "width_dilated": ((10.0, 13.0), _pair(_parse_floats, "width_dilated"), "label-1 chamber width interval, px"),
    "noise_sigma": (0.08, float, "additive Gaussian noise level inside the cone"),
    "data_seed": (10, int, "generator seed (distinct from the training seed)"),
    "allow_width_overlap": (False, _parse_bool, "permit overlapping width intervals"),
    "rotation_shift_test": (False, _parse_bool, "render the test split from rotation_range_test"),
    "split_fractions": ((0.8, 0.1, 0.1), lambda r: tuple(_parse_floats(r)), "train,val,test fractions"),
    "split_seed": (10, int, "seed for the stratified split shuffle"),
    # model
    "architecture": ("cardiocaps", str, "cardiocaps | cnn1 | cnn2"),
    "hidden_dim": (32, int, "stem width / primary conv channels"),
    "conv_kernel": (9, int, "stem and primary conv kernel size"),
    "d_primary": (8, int, "primary capsule dimensionality"),
    "d_digit": (16, int, "digit capsule dimensionality"),
    "n_classes": (2, int, "number of digit capsules"),
    "affine_kind": ("shared", str, "vote transform: shared | conv | constant"),
    "routing_method": ("attention", str, "dynamic | attention"),
    "routing_iterations": (3, int, "rounds of dynamic routing"),
    "attention_softmax_axis": ("input_caps", str, "input_caps | output_caps"),
    "attention_scale_by_sqrt_d": (False, _parse_bool, "scale attention logits by 1/sqrt(d_digit)"),
    "decoder_hidden": ((128, 256), _pair(_parse_ints, "decoder_hidden"), "decoder layer widths"),
    "positive_class": (1, int, "capsule index scored for ranking metrics"),
    # loss
    "weight_mode": ("inverse", str, "literal | inverse | uniform class weighting"),
    "lambda_reg": (0.05, float, "regression (auxiliary) loss multiplier"),
    "lambda_recon": (0.0005, float, "reconstruction loss multiplier"),
    "m_plus": (0.9, float, "presence margin"),
    "m_minus": (0.1, float, "absence margin"),
    "negative_weight": (0.5, float, "down-weight of absent-class margin terms"),
    # training
    "lr": (1e-4, float, "Adam learning rate"),
    "batch_size": (8, int, "minibatch size"),
    "max_epochs": (100, int, "upper bound on training epochs"),
    "patience": (5, int, "epochs without val improvement before stopping"),
    "seed": (10, int, "experiment seed: init, shuffling, and records"),
}


def parse_config_file(path) -> dict[str, str]:
    """Read raw key=value pairs; values stay as strings until resolve()."""
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line.rstrip()!r}")
            key, value = stripped.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


def resolve(file_values: dict[str, str] | None = None, overrides: dict[str, str] | None = None) -> dict[str, Any]:
    """Merge defaults, file values, and overrides into a fully typed config."""
    merged: dict[str, Any] = {k: default for k, (default, _, _) in SCHEMA.items()}
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if key not in SCHEMA:
                raise ConfigurationError(f"unknown configuration key: {key!r}")
            _, parser, _ = SCHEMA[key]
            merged[key] = parser(raw) if isinstance(raw, str) else raw
    return merged


def config_snapshot(cfg: dict[str, Any]) -> dict[str, str]:
    """Stringify a resolved config for embedding in an experiment record."""

    def fmt(v) -> str:
        if isinstance(v, tuple):
            return ",".join(fmt(x) for x in v)
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    return {k: fmt(cfg[k]) for k in sorted(cfg)}


def synth_config_from(cfg: dict[str, Any]) -> SynthConfig:
    return SynthConfig(
        n_samples=cfg["n_samples"],
        image_size=tuple(cfg["image_size"]),
        positive_ratio=cfg["positive_ratio"],
        rotation_range_train=tuple(cfg["rotation_range_train"]),
        rotation_range_test=tuple(cfg["rotation_range_test"]),
        translation_range=cfg["translation_range"],
        width_normal=tuple(cfg["width_normal"]),
        width_dilated=tuple(cfg["width_dilated"]),
        noise_sigma=cfg["noise_sigma"],
        seed=cfg["data_seed"],
        allow_width_overlap=cfg["allow_width_overlap"],
    )


def model_config_from(cfg: dict[str, Any]) -> ModelConfig:
    routing = RoutingSpec(
        method=cfg["routing_method"],
        iterations=cfg["routing_iterations"],
        softmax_axis=cfg["attention_softmax_axis"],
        scale_by_sqrt_d=cfg["attention_scale_by_sqrt_d"],
    )
    return ModelConfig(
        architecture=cfg["architecture"],
        hidden_dim=cfg["hidden_dim"],
        conv_kernel=cfg["conv_kernel"],
        d_primary=cfg["d_primary"],
        d_digit=cfg["d_digit"],
        n_classes=cfg["n_classes"],
        affine_kind=cfg["affine_kind"],
        routing=routing,
        decoder_hidden=tuple(cfg["decoder_hidden"]),
        positive_class=cfg["positive_class"],
    )


def train_config_from(cfg: dict[str, Any]) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["max_epochs"],
        patience=cfg["patience"],
        seed=cfg["seed"],
    )


def margin_params_from(cfg: dict[str, Any]) -> MarginLossParams:
    return MarginLossParams(
        m_plus=cfg["m_plus"], m_minus=cfg["m_minus"], negative_weight=cfg["negative_weight"]
    )


def weighted_params_from(cfg: dict[str, Any], proportions: tuple[float, ...]) -> WeightedLossParams:
    return WeightedLossParams(
        class_proportions=proportions,
        weight_mode=cfg["weight_mode"],
        lambda_reg=cfg["lambda_reg"],
        lambda_recon=cfg["lambda_recon"],
    )


def default_config_text() -> str:
    """A fully commented config file holding every key at its default."""
    lines = ["# capsroute configuration: key=value, '#' starts a comment"]
    snapshot = config_snapshot({k: default for k, (default, _, _) in SCHEMA.items()})
    for key, (_, _, help_text) in SCHEMA.items():
        lines.append(f"{key}={snapshot[key]}  # {help_text}")
    return "\n".join(lines) + "\n"

"""Flat key/value config files and TrainConfig construction.

Config files are plain ``key = value`` lines (``#`` comments, blank lines
ignored). Keys mirror TrainConfig plus the session-level choices:

    epochs, lr_base, batch_size, seed, m, validate_every,
    project_at_epoch, head_finetune_epochs,
    lambda_clst, lambda_sep, lambda_distr, lambda_divers, lambda_l1,
    lambda_interact, literal_min,
    mode (sentence|word), sim (cosine|l2),
    selector (sliding|attention|brute), k, dilation, k_lim,
    val_frac, test_frac, max_tokens
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigInvalid
from .losses import LossWeights
from .patching import ATTENTION, BRUTE_FORCE, COSINE, NEG_L2, SLIDING, SelectorConfig
from .trainer import TrainConfig

SELECTOR_NAMES = {"sliding": SLIDING, "attention": ATTENTION, "brute": BRUTE_FORCE}
SIM_NAMES = {"cosine": COSINE, "l2": NEG_L2, "neg_l2": NEG_L2}

_INT_KEYS = {
    "epochs", "batch_size", "seed", "m", "validate_every",
    "project_at_epoch", "head_finetune_epochs", "k", "dilation", "k_lim",
    "max_tokens",
}
_FLOAT_KEYS = {
    "lr_base", "lambda_clst", "lambda_sep", "lambda_distr", "lambda_divers",
    "lambda_l1", "lambda_interact", "val_frac", "test_frac",
}
_BOOL_KEYS = {"literal_min"}
_STR_KEYS = {"mode", "sim", "selector"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def parse_flat_config(path: str | Path) -> dict:
    """Parse a flat config file into typed values."""
    values: dict = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigInvalid(f"{path}:{line_no}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def _coerce(key: str, value):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            if str(value).lower() in ("1", "true", "yes"):
                return True
            if str(value).lower() in ("0", "false", "no"):
                return False
            raise ValueError(value)
    except ValueError as exc:
        raise ConfigInvalid(f"config key {key!r}: bad value {value!r}") from exc
    return value


def build_train_config(values: dict) -> TrainConfig:
    """TrainConfig from a flat mapping; unknown keys are rejected with the
    offending field named."""
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
    sim = SIM_NAMES.get(values.get("sim", "cosine"))
    if sim is None:
        raise ConfigInvalid(f"sim: must be one of {sorted(SIM_NAMES)}")
    sel_kind = SELECTOR_NAMES.get(values.get("selector", "sliding"))
    if sel_kind is None:
        raise ConfigInvalid(f"selector: must be one of {sorted(SELECTOR_NAMES)}")
    try:
        selector = SelectorConfig(
            kind=sel_kind,
            k=int(values.get("k", 4)),
            dilation=int(values.get("dilation", 0)),
            k_lim=int(values.get("k_lim", 10)),
        )
        weights = LossWeights(
            clst=values.get("lambda_clst", 0.5),
            sep=values.get("lambda_sep", 0.2),
            distr=values.get("lambda_distr", 0.1),
            divers=values.get("lambda_divers", 0.3),
            l1=values.get("lambda_l1", 0.001),
            interact=values.get("lambda_interact", 0.5),
            sim_kind=sim,
            literal_min=bool(values.get("literal_min", False)),
        )
        return TrainConfig(
            epochs=int(values.get("epochs", 100)),
            lr_base=float(values.get("lr_base", 0.001)),
            batch_size=int(values.get("batch_size", 64)),
            seed=int(values.get("seed", 0)),
            m=int(values.get("m", 10)),
            loss_weights=weights,
            selector=selector,
            validate_every=int(values.get("validate_every", 10)),
            project_at_epoch=values.get("project_at_epoch"),
            head_finetune_epochs=int(values.get("head_finetune_epochs", 20)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc


def sim_kind_from(values: dict) -> str:
    sim = SIM_NAMES.get(values.get("sim", "cosine"))
    if sim is None:
        raise ConfigInvalid(f"sim: must be one of {sorted(SIM_NAMES)}")
    return sim

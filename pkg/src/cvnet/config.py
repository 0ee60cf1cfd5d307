"""Run configuration: JSON files validated against per-task defaults.

A config is a plain JSON object. Every field has a default, so `{}` plus a
`task` key is a complete config; unknown keys anywhere in the tree are
rejected with the offending dotted path. The resolved dict is hashed
(sha256 over canonical JSON) to tie datasets and checkpoints back to the
exact settings that produced them.
"""

from __future__ import annotations

import hashlib
import json

__all__ = ["ConfigError", "DEFAULTS", "load_config", "resolve_config",
           "config_hash"]


class ConfigError(Exception):
    """Bad configuration: unknown key, wrong type, or invalid value."""


DEFAULTS = {
    "chanest": {
        "task": "chanest",
        "data": {"n_train": 2000, "n_eval": 200},
        "sim": {
            "n_f": 72,
            "n_s": 14,
            "n_pt": 2,
            "subcarrier_spacing_hz": 15000.0,
            "symbol_duration_s": 1.0 / 14000.0,
            "snr_range_db": [5.0, 25.0],
            "doppler_range_hz": [0.0, 97.0],
        },
        "model": {"n_filter": 16, "d_f": 128, "n_heads": 2},
        "train": {
            "steps": 20000,
            "batch_size": 4,
            "learning_rate": 1e-3,
            "optimizer": "adam",
            "seed": 8961,
            "checkpoint_every": 5000,
            "lr_decay_at": [16000],
            "lr_decay_factor": 0.1,
        },
        "eval": {
            "metrics": ["mse"],
            "sweep": "snr",
            "sweep_values": [0.0, 5.0, 10.0, 15.0, 20.0],
            "snr_db": 10.0,
            "doppler_hz": None,
        },
    },
    "actdet": {
        "task": "actdet",
        "data": {"n_train": 2000, "n_eval": 2000},
        "sim": {
            "n_users": 20,
            "n_antennas": 8,
            "pilot_len": 8,
            "p_active": 0.1,
            "cell_radius_km": 1.0,
            "tx_power_dbm": 23.0,
            "noise_psd_dbm_hz": -169.0,
            "bandwidth_hz": 1e7,
            "min_dist_km": 0.05,
        },
        "model": {"d_e": 64, "n_layers": 5, "n_heads": 4, "d_head": 16,
                  "d_f": 256},
        "train": {
            "steps": 10000,
            "batch_size": 8,
            "learning_rate": 1e-4,
            "optimizer": "adam",
            "seed": 8961,
            "checkpoint_every": 2500,
            "lr_decay_at": [8000],
            "lr_decay_factor": 0.1,
            "bce_lambda": 10.0,
        },
        "eval": {
            "metrics": ["pm", "pf"],
            "sweep": "gamma",
            "sweep_values": [round(0.05 * k, 2) for k in range(1, 20)],
        },
    },
    "precode": {
        "task": "precode",
        "data": {"n_train": 64, "n_eval": 64},
        "sim": {
            "n_antennas": 8,
            "n_users": 2,
            "n_paths": 4,
            "f_ul_hz": 3.5e9,
            "f_dl_hz": 3.6e9,
            "snr_db": 10.0,
        },
        "model": {
            "m_pilots": 8,
            "b_bits": 10,
            "rho": 1.0,
            "d_p": 64,
            "p_heads": 4,
            "l_p": 2,
            "m_p": 2,
            "l_d": 3,
            "l_f": 3,
            "d_p_ff": None,
            "tau": 10.0,
        },
        "train": {
            "steps": 2500,
            "batch_size": 8,
            "learning_rate": 1e-3,
            "optimizer": "adam",
            "seed": 8961,
            "checkpoint_every": 500,
            "lr_decay_at": [2000],
            "lr_decay_factor": 0.1,
        },
        "eval": {
            "metrics": ["sum_rate", "zf_bound"],
            "sweep": "snr",
            "sweep_values": [0.0, 5.0, 10.0, 15.0, 20.0],
        },
    },
}

# Keys whose value may be JSON null, with the type required when it is not
# (each null has its own fallback behaviour, resolved by the consumer).
_NULLABLE = {
    "chanest.eval.snr_db": float,       # null -> noiseless eval frames
    "chanest.eval.doppler_hz": float,   # null -> draw from sim range
    "precode.model.d_p_ff": int,        # null -> 2 * d_p
}

_SWEEP_AXES = {
    "chanest": ("snr", "doppler"),
    "actdet": ("gamma",),
    "precode": ("snr", "feedback_bits"),
}


def _merge(task, template, user, path):
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, "
                          f"got {type(user).__name__}")
    out = {}
    for key, tval in template.items():
        dotted = f"{path}.{key}" if path else key
        if key in user:
            out[key] = _coerce(task, tval, user[key], dotted)
        else:
            out[key] = json.loads(json.dumps(tval))  # deep copy
    unknown = sorted(set(user) - set(template))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"unknown config key: {where}")
    return out


def _coerce(task, tval, uval, dotted):
    nullable_as = _NULLABLE.get(f"{task}.{dotted}")
    if uval is None:
        if nullable_as is not None:
            return None
        raise ConfigError(f"{dotted}: null is not allowed here")
    if tval is None:
        tval = nullable_as()
    if isinstance(tval, dict):
        return _merge(task, tval, uval, dotted)
    if isinstance(tval, bool):
        if not isinstance(uval, bool):
            raise ConfigError(f"{dotted}: expected a boolean")
        return uval
    if isinstance(tval, int) and not isinstance(tval, bool):
        if isinstance(uval, bool) or not isinstance(uval, int):
            raise ConfigError(f"{dotted}: expected an integer, "
                              f"got {uval!r}")
        return uval
    if isinstance(tval, float):
        if isinstance(uval, bool) or not isinstance(uval, (int, float)):
            raise ConfigError(f"{dotted}: expected a number, got {uval!r}")
        return float(uval)
    if isinstance(tval, str):
        if not isinstance(uval, str):
            raise ConfigError(f"{dotted}: expected a string, got {uval!r}")
        return uval
    if isinstance(tval, list):
        if not isinstance(uval, list):
            raise ConfigError(f"{dotted}: expected a list, got {uval!r}")
        elem = tval[0] if tval else None
        out = []
        for i, item in enumerate(uval):
            if isinstance(elem, str):
                if not isinstance(item, str):
                    raise ConfigError(f"{dotted}[{i}]: expected a string")
                out.append(item)
            else:
                if isinstance(item, bool) or not isinstance(item,
                                                            (int, float)):
                    raise ConfigError(f"{dotted}[{i}]: expected a number")
                out.append(item if isinstance(elem, int) else float(item))
        return out
    raise ConfigError(f"{dotted}: unsupported template type")


def _validate(cfg):
    task = cfg["task"]
    ev = cfg["eval"]
    if ev["sweep"] not in _SWEEP_AXES[task]:
        raise ConfigError(
            f"eval.sweep: {ev['sweep']!r} is not a {task} axis "
            f"(choose from {', '.join(_SWEEP_AXES[task])})")
    if not ev["sweep_values"]:
        raise ConfigError("eval.sweep_values: must not be empty")
    allowed = set(DEFAULTS[task]["eval"]["metrics"])
    for m in ev["metrics"]:
        if m not in allowed:
            raise ConfigError(f"eval.metrics: unknown metric {m!r} for "
                              f"{task} (supported: {', '.join(sorted(allowed))})")
    tr = cfg["train"]
    for key in ("steps", "batch_size", "checkpoint_every"):
        if tr[key] < 1:
            raise ConfigError(f"train.{key}: must be >= 1")
    if tr["learning_rate"] < 0:
        raise ConfigError("train.learning_rate: must be >= 0")
    if tr["optimizer"] not in ("adam", "sgd"):
        raise ConfigError(f"train.optimizer: unknown kind "
                          f"{tr['optimizer']!r} (adam or sgd)")
    for key in ("n_train", "n_eval"):
        if cfg["data"][key] < 1:
            raise ConfigError(f"data.{key}: must be >= 1")
    if not 0 <= tr["seed"] < 2 ** 64:
        raise ConfigError("train.seed: must fit in an unsigned 64-bit int")


def resolve_config(raw, seed=None):
    """Merge a raw dict over the task defaults; returns the full config."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if "task" not in raw:
        raise ConfigError("config is missing the task key")
    task = raw["task"]
    if task not in DEFAULTS:
        raise ConfigError(f"unknown task {task!r} "
                          f"(choose from {', '.join(sorted(DEFAULTS))})")
    cfg = _merge(task, DEFAULTS[task], raw, "")
    if seed is not None:
        cfg["train"]["seed"] = int(seed)
    _validate(cfg)
    return cfg


def load_config(path, seed=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return resolve_config(raw, seed=seed)


def config_hash(cfg):
    """sha256 over the canonical JSON form of a resolved config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()

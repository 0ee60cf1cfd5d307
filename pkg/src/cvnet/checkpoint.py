"""Checkpoints: a manifest plus per-parameter blobs in the dataset format.

Layout under one directory:
    manifest.json          config hash, task, step, metric snapshot, shapes
    params/<name>.c16      one blob per named parameter
    opt/<name>.m.c16       Adam first moment (when the optimizer has state)
    opt/<name>.v.c16       Adam second moment
Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import ConfigError
from .ctensor import ShapeError
from .data import read_blob, write_blob

__all__ = ["save_checkpoint", "load_checkpoint", "restore_model",
           "restore_optimizer"]

_SCHEMA = 1


def save_checkpoint(out_dir, task, cfg_hash, step, metric, model, opt=None):
    out = Path(out_dir)
    (out / "params").mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    manifest = {
        "schema": _SCHEMA,
        "task": task,
        "config_hash": cfg_hash,
        "step": int(step),
        "metric": metric,
        "params": {k: list(p.shape) for k, p in params.items()},
        "opt": None,
    }
    for name, p in params.items():
        write_blob(out / "params" / f"{name}.c16", p.value)
    state = opt.state_dict() if opt is not None else {}
    if state:
        (out / "opt").mkdir(exist_ok=True)
        manifest["opt"] = {"kind": "adam", "t": int(state["t"])}
        for name in params:
            write_blob(out / "opt" / f"{name}.m.c16", state["m"][name])
            write_blob(out / "opt" / f"{name}.v.c16", state["v"][name])
    blob = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (out / "manifest.json").write_text(blob, encoding="utf-8")


def load_checkpoint(path):
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise OSError(f"{mpath}: no checkpoint manifest")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    if manifest.get("schema") != _SCHEMA:
        raise OSError(f"{mpath}: unsupported schema "
                      f"{manifest.get('schema')!r}")
    params = {}
    for name, shape in manifest["params"].items():
        params[name] = read_blob(root / "params" / f"{name}.c16",
                                 tuple(shape))
    opt_state = None
    if manifest["opt"] is not None:
        opt_state = {"t": manifest["opt"]["t"], "m": {}, "v": {}}
        for name, shape in manifest["params"].items():
            opt_state["m"][name] = read_blob(root / "opt" / f"{name}.m.c16",
                                             tuple(shape))
            opt_state["v"][name] = read_blob(root / "opt" / f"{name}.v.c16",
                                             tuple(shape))
    return manifest, params, opt_state


def restore_model(model, params):
    """Load a parameter map into a model; mismatches become config errors."""
    try:
        model.load_state_dict(params)
    except (KeyError, ShapeError) as exc:
        raise ConfigError(f"checkpoint does not fit the configured model: "
                          f"{exc}") from exc


def restore_optimizer(opt, opt_state):
    if opt_state is None:
        raise ConfigError("checkpoint carries no optimizer state; "
                          "cannot resume")
    try:
        opt.load_state_dict(opt_state)
    except KeyError as exc:
        raise ConfigError(f"optimizer state does not fit: {exc}") from exc

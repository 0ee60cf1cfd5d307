"""Dataset containers: a manifest plus one raw binary blob per field.

Blobs are little-endian complex128 (interleaved float64 re/im pairs),
row-major, no compression; real-valued fields ride along with a zero
imaginary part. The manifest pins schema version, task, split, shapes,
counts, the master seed, and the generation parameters, so a container is
self-describing and reloadable without the config that produced it.

Every sample is generated from its own counter-based stream
(`wsim.rng_stream(seed, "data.<split>", index)`), which makes generation
order-independent: a worker pool of any size writes the same bytes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import wsim
from .config import ConfigError, config_hash

__all__ = ["Dataset", "generate", "write_blob", "read_blob", "save_dataset",
           "load_dataset", "run_indexed"]

_SCHEMA = 1
_BLOB_DTYPE = np.dtype("<c16")


def write_blob(path, arr):
    np.ascontiguousarray(np.asarray(arr, dtype=np.complex128)).astype(
        _BLOB_DTYPE).tofile(path)


def read_blob(path, shape):
    arr = np.fromfile(path, dtype=_BLOB_DTYPE)
    want = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if arr.size != want:
        raise OSError(f"{path}: expected {want} complex values, "
                      f"found {arr.size}")
    return arr.astype(np.complex128).reshape(shape)


class Dataset:
    """In-memory view of one split: manifest dict + field arrays."""

    def __init__(self, manifest, fields):
        self.manifest = manifest
        self.fields = fields

    @property
    def task(self):
        return self.manifest["task"]

    @property
    def n_samples(self):
        return self.manifest["n_samples"]

    def field(self, name):
        return self.fields[name]


def save_dataset(ds, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, arr in ds.fields.items():
        write_blob(out / f"{name}.c16", arr)
    blob = json.dumps(ds.manifest, sort_keys=True, indent=2) + "\n"
    (out / "manifest.json").write_text(blob, encoding="utf-8")


def load_dataset(path):
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise OSError(f"{mpath}: no dataset manifest")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    if manifest.get("schema") != _SCHEMA:
        raise OSError(f"{mpath}: unsupported schema "
                      f"{manifest.get('schema')!r}")
    n = manifest["n_samples"]
    fields = {}
    for name, shape in manifest["fields"].items():
        fields[name] = read_blob(root / f"{name}.c16", (n,) + tuple(shape))
    return Dataset(manifest, fields)


def run_indexed(n, workers, fn):
    """Evaluate fn(i) for i in range(n), with optional thread fan-out.

    fn writes its results into preallocated arrays by index, so the output
    is identical for any worker count.
    """
    if workers <= 1:
        for i in range(n):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fn, i) for i in range(n)]:
            fut.result()


def _alloc(n, spec):
    return {name: np.zeros((n,) + shape, dtype=np.complex128)
            for name, shape in spec.items()}


def _gen_chanest(cfg, split, seed, workers):
    sim, ev = cfg["sim"], cfg["eval"]
    rows, cols = wsim.pilot_lattice(sim["n_f"], sim["n_s"], sim["n_pt"])
    spec = {
        "ls": (rows.size, cols.size),
        "h": (sim["n_f"], sim["n_s"]),
        "x": (sim["n_f"], sim["n_s"]),
        "snr_db": (),
        "doppler_hz": (),
    }
    sweep = None
    if split == "train":
        n = cfg["data"]["n_train"]
    else:
        group = cfg["data"]["n_eval"]
        values = ev["sweep_values"]
        n = group * len(values)
        sweep = {"axis": ev["sweep"], "values": list(values),
                 "group_size": group}
    fields = _alloc(n, spec)
    snr_lo, snr_hi = sim["snr_range_db"]
    dop_lo, dop_hi = sim["doppler_range_hz"]

    def one(i):
        rng = wsim.rng_stream(seed, f"data.{split}", i)
        if split == "train":
            snr = rng.uniform(snr_lo, snr_hi)
            dop = rng.uniform(dop_lo, dop_hi)
        else:
            value = sweep["values"][i // sweep["group_size"]]
            if sweep["axis"] == "snr":
                snr = float(value)
            else:
                snr = ev["snr_db"]
            if sweep["axis"] == "doppler":
                dop = float(value)
            elif ev["doppler_hz"] is not None:
                dop = ev["doppler_hz"]
            else:
                dop = rng.uniform(dop_lo, dop_hi)
        frame = wsim.gen_ofdm_frame(
            n_f=sim["n_f"], n_s=sim["n_s"], snr_db=snr, doppler_hz=dop,
            subcarrier_spacing_hz=sim["subcarrier_spacing_hz"],
            symbol_duration_s=sim["symbol_duration_s"], n_pt=sim["n_pt"],
            seed=rng)
        fields["ls"][i] = wsim.ls_estimate(frame.Y, frame.X,
                                           frame.pilot_rows,
                                           frame.pilot_cols)
        fields["h"][i] = frame.H
        fields["x"][i] = frame.X
        fields["snr_db"][i] = math.inf if snr is None else snr
        fields["doppler_hz"][i] = dop

    run_indexed(n, workers, one)
    return fields, n, sweep


def _gen_actdet(cfg, split, seed, workers):
    sim = cfg["sim"]
    n = cfg["data"]["n_train" if split == "train" else "n_eval"]
    l, users, ants = sim["pilot_len"], sim["n_users"], sim["n_antennas"]
    fields = _alloc(n, {
        "b": (l, users), "y": (l, ants), "c": (l, l),
        "a": (users,), "sigma2": (),
    })

    def one(i):
        s = wsim.gen_grantfree_sample(
            n_users=users, n_antennas=ants, pilot_len=l,
            p_active=sim["p_active"], cell_radius_km=sim["cell_radius_km"],
            tx_power_dbm=sim["tx_power_dbm"],
            noise_psd_dbm_hz=sim["noise_psd_dbm_hz"],
            bandwidth_hz=sim["bandwidth_hz"], min_dist_km=sim["min_dist_km"],
            seed=wsim.rng_stream(seed, f"data.{split}", i))
        fields["b"][i] = s.B
        fields["y"][i] = s.Y
        fields["c"][i] = s.C
        fields["a"][i] = s.a
        fields["sigma2"][i] = s.sigma2

    run_indexed(n, workers, one)
    return fields, n, None


def _gen_precode(cfg, split, seed, workers):
    sim = cfg["sim"]
    n = cfg["data"]["n_train" if split == "train" else "n_eval"]
    ants, users = sim["n_antennas"], sim["n_users"]
    fields = _alloc(n, {"h_ul": (ants, users), "h_dl": (ants, users)})

    def one(i):
        ch = wsim.gen_sv_channels(
            n_antennas=ants, n_users=users, n_paths=sim["n_paths"],
            f_ul_hz=sim["f_ul_hz"], f_dl_hz=sim["f_dl_hz"],
            seed=wsim.rng_stream(seed, f"data.{split}", i))
        fields["h_ul"][i] = ch.H_UL
        fields["h_dl"][i] = ch.H_DL

    run_indexed(n, workers, one)
    return fields, n, None


_GENERATORS = {
    "chanest": _gen_chanest,
    "actdet": _gen_actdet,
    "precode": _gen_precode,
}


def generate(cfg, split, workers=1):
    """Build one split ("train" or "eval") as an in-memory Dataset."""
    if split not in ("train", "eval"):
        raise ConfigError(f"unknown dataset split {split!r}")
    seed = cfg["train"]["seed"]
    fields, n, sweep = _GENERATORS[cfg["task"]](cfg, split, seed, workers)
    manifest = {
        "schema": _SCHEMA,
        "task": cfg["task"],
        "split": split,
        "master_seed": seed,
        "n_samples": n,
        "fields": {k: list(v.shape[1:]) for k, v in fields.items()},
        "sim": cfg["sim"],
        "sweep": sweep,
        "config_hash": config_hash(cfg),
    }
    return Dataset(manifest, fields)

"""Deterministic mini-batch training over a stored dataset.

Every source of randomness is a named sub-stream of the master seed: model
init ("init"), the index set of step s ("batch", s), and the received-pilot
noise of the precode chain ("noise", s, slot). Batch indices depend only on
(seed, step), so a run resumed from a checkpoint at step s replays steps
s+1.. bit-identically.

The loop writes log.csv (per-step loss, plus the pilot/precoder power
residuals for the precode task), log.time.csv (per-step wall time, kept in
a sidecar so the main log is reproducible byte for byte), periodic
checkpoints, and a final checkpoint.
"""

from __future__ import annotations

import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import ctensor as ct
from . import wsim
from .checkpoint import (load_checkpoint, restore_model, restore_optimizer,
                         save_checkpoint)
from .config import ConfigError, config_hash
from .ctensor import astensor, backward
from .data import load_dataset
from .losses import huber_loss, sum_rate_graph, weighted_bce
from .models import (ActDetModel, ComplexLight, PrecodeChain, actdet_inputs)
from .optim import SGD, Adam

__all__ = ["NumericAbort", "build_model", "make_optimizer", "train_run"]


class NumericAbort(RuntimeError):
    """Loss left the reals mid-run; carries the offending batch."""

    def __init__(self, step, batch_indices):
        self.step = int(step)
        self.batch_indices = [int(i) for i in batch_indices]
        super().__init__(f"non-finite loss at step {self.step} "
                         f"on batch indices {self.batch_indices}")


def build_model(cfg, rng):
    task, sim, mdl = cfg["task"], cfg["sim"], cfg["model"]
    if task == "chanest":
        rows, cols = wsim.pilot_lattice(sim["n_f"], sim["n_s"], sim["n_pt"])
        return ComplexLight(n_pf=rows.size, n_pt=cols.size, n_f=sim["n_f"],
                            n_s=sim["n_s"], n_filter=mdl["n_filter"],
                            d_f=mdl["d_f"], n_heads=mdl["n_heads"], rng=rng)
    if task == "actdet":
        return ActDetModel(pilot_len=sim["pilot_len"], d_e=mdl["d_e"],
                           n_layers=mdl["n_layers"], n_heads=mdl["n_heads"],
                           d_head=mdl["d_head"], d_f=mdl["d_f"], rng=rng)
    if task == "precode":
        return PrecodeChain(n_antennas=sim["n_antennas"],
                            n_users=sim["n_users"],
                            m_pilots=mdl["m_pilots"], b_bits=mdl["b_bits"],
                            rho=mdl["rho"], d_p=mdl["d_p"],
                            p_heads=mdl["p_heads"], l_p=mdl["l_p"],
                            m_p=mdl["m_p"], l_d=mdl["l_d"], l_f=mdl["l_f"],
                            d_p_ff=mdl["d_p_ff"], tau=mdl["tau"], rng=rng)
    raise ConfigError(f"unknown task {task!r}")


def make_optimizer(kind, params, lr):
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ConfigError(f"unknown optimizer {kind!r}")


def _mean(parts):
    total = parts[0]
    for p in parts[1:]:
        total = ct.add(total, p)
    return ct.scale(total, 1.0 / len(parts))


def _chanest_part(cfg, model, ds, i, step, slot):
    pred = model(ds.field("ls")[i])
    return huber_loss(pred, astensor(ds.field("h")[i])), {}


def _actdet_part(cfg, model, ds, i, step, slot):
    sample = SimpleNamespace(B=ds.field("b")[i], Y=ds.field("y")[i],
                             C=ds.field("c")[i],
                             sigma2=float(ds.field("sigma2")[i].real))
    b, c = actdet_inputs(sample)
    probs = model(b, c)
    target = ds.field("a")[i].real
    return weighted_bce(probs, target, lam=cfg["train"]["bce_lambda"]), {}


def _precode_part(cfg, model, ds, i, step, slot):
    seed = cfg["train"]["seed"]
    sigma2 = model.rho / 10.0 ** (cfg["sim"]["snr_db"] / 10.0)
    h_ul = ds.field("h_ul")[i]
    h_dl = ds.field("h_dl")[i]
    rng = wsim.rng_stream(seed, "noise", step, slot)
    noise = np.sqrt(sigma2) * wsim.crandn(rng, (model.m_pilots,
                                                model.n_users))
    p = model.pilot_forward(h_ul)
    y = ct.add(ct.matmul(ct.transpose(ct.conj(p)), astensor(h_dl)),
               astensor(noise))
    q = model.feedback_forward(y, mode="train")
    v = model.precoder_forward(q, h_ul)
    loss = ct.scale(sum_rate_graph(v, h_dl, sigma2), -1.0)
    pilot_err = np.max(np.abs(np.sum(np.abs(p.value) ** 2, axis=0)
                              - model.rho))
    trace_err = abs(np.sum(np.abs(v.value) ** 2) - model.rho)
    return loss, {"pilot_err": pilot_err, "trace_err": trace_err}


_PARTS = {"chanest": _chanest_part, "actdet": _actdet_part,
          "precode": _precode_part}

_LOG_HEADERS = {
    "chanest": "step,loss",
    "actdet": "step,loss",
    "precode": "step,loss,pilot_power_err,precoder_trace_err",
}


def _write_csv(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(x)) if isinstance(x, float)
                              else str(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8",
                          newline="\n")


def _loss_figure(path, steps, losses):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(steps, losses, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def train_run(cfg, dataset_dir, out_dir, resume=None, figure=True):
    """Run the configured schedule; returns the final checkpoint path."""
    ds = load_dataset(Path(dataset_dir) / "train")
    if ds.task != cfg["task"]:
        raise ConfigError(f"dataset holds {ds.task!r} samples but the "
                          f"config asks for {cfg['task']!r}")
    tr = cfg["train"]
    seed = tr["seed"]
    cfg_hash = config_hash(cfg)
    model = build_model(cfg, wsim.rng_stream(seed, "init"))
    opt = make_optimizer(tr["optimizer"], model.parameters(),
                         tr["learning_rate"])

    start = 0
    if resume is not None:
        manifest, params, opt_state = load_checkpoint(resume)
        if manifest["task"] != cfg["task"]:
            raise ConfigError(f"checkpoint task {manifest['task']!r} does "
                              f"not match config task {cfg['task']!r}")
        if manifest["config_hash"] != cfg_hash:
            raise ConfigError("checkpoint was written by a different "
                              "config; refusing to resume")
        restore_model(model, params)
        if tr["optimizer"] == "adam":
            restore_optimizer(opt, opt_state)
        start = manifest["step"]
        if start >= tr["steps"]:
            raise ConfigError(f"checkpoint is already at step {start}; "
                              f"nothing left of the {tr['steps']}-step "
                              f"schedule")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    part_fn = _PARTS[cfg["task"]]
    n = ds.n_samples
    batch = tr["batch_size"]
    milestones = sorted(tr["lr_decay_at"])
    rows = []
    time_rows = []
    t0 = time.perf_counter()
    final_loss = float("nan")

    for step in range(start, tr["steps"]):
        opt.lr = tr["learning_rate"] * tr["lr_decay_factor"] ** sum(
            1 for m in milestones if step >= m)
        idx = wsim.rng_stream(seed, "batch", step).integers(0, n, batch)
        parts = []
        extras = []
        for slot, i in enumerate(idx):
            loss_i, extra = part_fn(cfg, model, ds, int(i), step, slot)
            parts.append(loss_i)
            extras.append(extra)
        loss = _mean(parts)
        val = float(loss.value.reshape(()).real)
        if not np.isfinite(val):
            raise NumericAbort(step, idx)
        backward(loss)
        opt.step()
        row = [step, val]
        if cfg["task"] == "precode":
            row.append(max(e["pilot_err"] for e in extras))
            row.append(max(e["trace_err"] for e in extras))
        rows.append(row)
        time_rows.append([step, time.perf_counter() - t0])
        final_loss = val
        done = step + 1
        if done % tr["checkpoint_every"] == 0 and done < tr["steps"]:
            save_checkpoint(out / f"ckpt_{done:06d}", cfg["task"], cfg_hash,
                            done, {"loss": val}, model, opt)

    save_checkpoint(out / "final", cfg["task"], cfg_hash, tr["steps"],
                    {"loss": final_loss}, model, opt)
    _write_csv(out / "log.csv", _LOG_HEADERS[cfg["task"]],
               [[r[0]] + [float(x) for x in r[1:]] for r in rows])
    _write_csv(out / "log.time.csv", "step,walltime_s",
               [[s, float(w)] for s, w in time_rows])
    if figure and rows:
        _loss_figure(out / "loss.png", [r[0] for r in rows],
                     [r[1] for r in rows])
    return out / "final"

"""Checkpoint evaluation: per-sweep metric tables as CSV, plus figures.

Output schema is fixed per task:
    chanest  sweep,mse
    actdet   gamma,pm,pf        (+ <out>.op.json with the pm=pf point)
    precode  sweep,sum_rate,zf_bound

Numbers are written with repr(float), i.e. shortest decimal that
round-trips, UTF-8, LF endings. A PNG with the same stem is rendered next
to the CSV unless figures are disabled. Forward passes run without a tape
and per-sample results land in preallocated slots, so metrics are
byte-identical for any worker count.
"""

from __future__ import annotations

import json
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import wsim
from .checkpoint import load_checkpoint, restore_model
from .config import ConfigError
from .ctensor import no_grad
from .data import load_dataset, run_indexed
from .losses import mse_metric, pm_pf
from .models import actdet_inputs
from .train import build_model

__all__ = ["eval_run", "operating_point"]


def _load_model(cfg, ckpt_dir):
    manifest, params, _ = load_checkpoint(ckpt_dir)
    if manifest["task"] != cfg["task"]:
        raise ConfigError(f"checkpoint task {manifest['task']!r} does not "
                          f"match config task {cfg['task']!r}")
    model = build_model(cfg, wsim.rng_stream(cfg["train"]["seed"], "init"))
    restore_model(model, params)
    return model


def _eval_chanest(cfg, model, ds, workers):
    sweep = ds.manifest["sweep"]
    if sweep is None:
        raise ConfigError("chanest evaluation needs a sweep-grouped eval "
                          "split; regenerate the dataset")
    n = ds.n_samples
    per_sample = np.zeros(n)

    def one(i):
        pred = model(ds.field("ls")[i])
        per_sample[i] = mse_metric(pred.value, ds.field("h")[i])

    with no_grad():
        run_indexed(n, workers, one)
    rows = []
    g = sweep["group_size"]
    for k, value in enumerate(sweep["values"]):
        rows.append([float(value), float(np.mean(per_sample[k * g:
                                                            (k + 1) * g]))])
    return rows, None


def _eval_actdet(cfg, model, ds, workers):
    n = ds.n_samples
    n_users = ds.field("a").shape[1]
    probs = np.zeros((n, n_users))

    def one(i):
        sample = SimpleNamespace(B=ds.field("b")[i], Y=ds.field("y")[i],
                                 C=ds.field("c")[i],
                                 sigma2=float(ds.field("sigma2")[i].real))
        b, c = actdet_inputs(sample)
        probs[i] = model(b, c).value.real.reshape(-1)

    with no_grad():
        run_indexed(n, workers, one)
    activity = ds.field("a").real
    rows = []
    for gamma in cfg["eval"]["sweep_values"]:
        pm, pf = pm_pf(probs, activity, float(gamma))
        rows.append([float(gamma),
                     float("nan") if pm is None else float(pm),
                     float("nan") if pf is None else float(pf)])
    op = operating_point(probs, activity)
    return rows, op


def operating_point(probs, activity, tol=1e-3, max_iter=200):
    """Bisect gamma until pm and pf meet (pm - pf changes sign).

    pm grows and pf shrinks with gamma, so the difference is monotone;
    with finitely many samples both are step functions, so the bracket can
    collapse before the gap closes. Returns the best gamma with the
    achieved gap either way.
    """

    def gap(gamma):
        pm, pf = pm_pf(probs, activity, gamma)
        pm = 0.0 if pm is None else pm
        pf = 0.0 if pf is None else pf
        return pm - pf, pm, pf

    lo, hi = 0.0, 1.0
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        d, pm, pf = gap(mid)
        if best is None or abs(d) < abs(best[1] - best[2]):
            best = (mid, pm, pf)
        if abs(d) < tol or hi - lo < 1e-14:
            break
        if d > 0:
            hi = mid
        else:
            lo = mid
    gamma, pm, pf = best
    return {"gamma": gamma, "pm": pm, "pf": pf, "gap": abs(pm - pf),
            "error": max(pm, pf)}


def _eval_precode(cfg, model, ds, workers):
    n = ds.n_samples
    seed = cfg["train"]["seed"]
    values = cfg["eval"]["sweep_values"]
    if cfg["eval"]["sweep"] == "feedback_bits":
        raise ConfigError(
            "feedback_bits sweeps change the model architecture; train one "
            "checkpoint per bit width and evaluate each separately")
    rho = model.rho
    rates = np.zeros((len(values), n))
    bounds = np.zeros((len(values), n))
    jobs = [(k, i) for k in range(len(values)) for i in range(n)]

    def one(j):
        k, i = jobs[j]
        sigma2 = rho / 10.0 ** (float(values[k]) / 10.0)
        h_ul = ds.field("h_ul")[i]
        h_dl = ds.field("h_dl")[i]
        rng = wsim.rng_stream(seed, "eval.noise", k, i)
        noise = np.sqrt(sigma2) * wsim.crandn(rng, (model.m_pilots,
                                                    model.n_users))
        v = model.infer_precoder(h_ul, h_dl, noise)
        rates[k, i] = wsim.sum_rate(v, h_dl, sigma2)
        bounds[k, i] = wsim.sum_rate(wsim.zf_precoder(h_dl, rho), h_dl,
                                     sigma2)

    with no_grad():
        run_indexed(len(jobs), workers, one)
    rows = [[float(values[k]), float(np.mean(rates[k])),
             float(np.mean(bounds[k]))] for k in range(len(values))]
    return rows, None


_EVALS = {"chanest": _eval_chanest, "actdet": _eval_actdet,
          "precode": _eval_precode}

_HEADERS = {"chanest": "sweep,mse", "actdet": "gamma,pm,pf",
            "precode": "sweep,sum_rate,zf_bound"}


def _metric_figure(task, path, rows):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    xs = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if task == "chanest":
        ax.semilogy(xs, [r[1] for r in rows], marker="o")
        ax.set_xlabel("sweep value")
        ax.set_ylabel("mse")
    elif task == "actdet":
        ax.plot(xs, [r[1] for r in rows], marker="o", label="pm")
        ax.plot(xs, [r[2] for r in rows], marker="s", label="pf")
        ax.set_xlabel("gamma")
        ax.set_ylabel("error probability")
        ax.legend()
    else:
        ax.plot(xs, [r[1] for r in rows], marker="o", label="sum rate")
        ax.plot(xs, [r[2] for r in rows], marker="s", label="zf bound")
        ax.set_xlabel("sweep value")
        ax.set_ylabel("bits/s/Hz")
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def eval_run(cfg, dataset_dir, ckpt_dir, out_csv, workers=1, figure=True):
    """Evaluate a checkpoint over the eval split; returns the row list."""
    ds = load_dataset(Path(dataset_dir) / "eval")
    if ds.task != cfg["task"]:
        raise ConfigError(f"dataset holds {ds.task!r} samples but the "
                          f"config asks for {cfg['task']!r}")
    model = _load_model(cfg, ckpt_dir)
    rows, op = _EVALS[cfg["task"]](cfg, model, ds, workers)
    out = Path(out_csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [_HEADERS[cfg["task"]]]
    for row in rows:
        lines.append(",".join(repr(float(x)) for x in row))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    if op is not None:
        op_path = Path(str(out) + ".op.json")
        op_path.write_text(json.dumps(op, sort_keys=True, indent=2) + "\n",
                           encoding="utf-8")
    if figure:
        _metric_figure(cfg["task"], out.with_suffix(".png"), rows)
    return rows

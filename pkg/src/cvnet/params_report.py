"""Parameter accounting: per-layer and total real-scalar counts.

Complex scalars count as two reals; the whitening matrices of the layer
norms are real-valued and count once per entry. Counts are grouped by
top-level submodule so a report line maps onto one architectural block.

Each task also carries a published reference total. The report always
prints the delta against it, together with notes on where the difference
comes from when the configured dimensions match the published setup, or a
pointer that they do not.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import wsim
from .train import build_model

__all__ = ["PUBLISHED_TOTALS", "build_report", "format_report",
           "write_report"]

PUBLISHED_TOTALS = {"chanest": 80076, "actdet": 567555, "precode": 23087472}

# Model dimensions the published totals were quoted for. chanest and
# precode totals come from setups whose hyperparameters were never fully
# listed; the actdet total has a complete hyperparameter table.
_PUBLISHED_DIMS = {
    "actdet": {"d_e": 64, "n_layers": 5, "n_heads": 4, "d_head": 16,
               "d_f": 256},
}


def _layer_counts(model):
    groups = {}
    for name, p in model.parameters().items():
        top = name.split(".", 1)[0] if "." in name else "(top)"
        reals = p.size * (1 if p.real_only else 2)
        groups.setdefault(top, [0, 0])
        groups[top][0] += reals
        groups[top][1] += 1
    return groups


def _notes(cfg, total, published):
    task = cfg["task"]
    notes = []
    delta = total - published
    if task == "actdet":
        dims_match = all(cfg["model"][k] == v
                         for k, v in _PUBLISHED_DIMS["actdet"].items())
        if not dims_match:
            notes.append("configured dimensions differ from the published "
                         "table; the reference total applies to d_e=64, "
                         "5 layers, 4 heads, d_head=16, d_f=256")
            return notes
        if delta == 0:
            return notes
        notes.append(
            f"total differs from the published 567,555 by {delta:+,}")
        notes.append(
            "each encoder layer here keeps six per-branch attention "
            "projections (q/k/v for the signature branch and the "
            "covariance branch, 49,152 reals at d_e=64, 4x16 heads) plus "
            "one shared output projection (8,192) and two per-branch "
            "feed-forward stacks (66,176 each)")
        notes.append(
            "the user-token embedding takes 2L+2 inputs (signature, "
            "matched covariance response, excess-energy statistic, "
            "interference load) rather than the bare length-L signature, "
            "which adds 2*d_e*(L+2) reals to the embedding block")
        notes.append(
            "a variant that shares q/k/v projections and the feed-forward "
            "across the two branches drops roughly 90k reals per layer and "
            "lands near the published figure; the architecture description "
            "does not pin the sharing scheme, so the per-branch reading is "
            "kept and the delta is reported instead of hidden")
    elif task == "chanest":
        notes.append(
            "the published 80,076 total comes with no filter count, "
            "feed-forward width, or head split; the defaults here "
            "(16 filters, d_f=128, 2 heads) were chosen to land near it "
            "and the residual gap is expected")
    else:
        notes.append(
            "the published 23,087,472 total belongs to the full-scale "
            "setup (64 antennas and matching embed width); desk-scale "
            "defaults are deliberately smaller, so the delta is large by "
            "construction")
    return notes


def build_report(cfg):
    model = build_model(cfg, wsim.rng_stream(cfg["train"]["seed"], "init"))
    groups = _layer_counts(model)
    total = sum(v[0] for v in groups.values())
    published = PUBLISHED_TOTALS[cfg["task"]]
    return {
        "task": cfg["task"],
        "model": cfg["model"],
        "layers": [{"name": k, "real_params": v[0], "tensors": v[1]}
                   for k, v in sorted(groups.items())],
        "total_real_params": total,
        "published_total": published,
        "delta": total - published,
        "notes": _notes(cfg, total, published),
    }


def format_report(report):
    width = max(len(l["name"]) for l in report["layers"]) + 2
    lines = [f"parameter report: {report['task']}",
             f"{'layer':<{width}}{'real params':>14}{'tensors':>9}"]
    for l in report["layers"]:
        lines.append(f"{l['name']:<{width}}{l['real_params']:>14,}"
                     f"{l['tensors']:>9}")
    lines.append(f"{'total':<{width}}{report['total_real_params']:>14,}")
    lines.append(f"published total: {report['published_total']:,} "
                 f"(delta {report['delta']:+,})")
    for note in report["notes"]:
        lines.append(f"note: {note}")
    return "\n".join(lines)


def write_report(report, out_path):
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")

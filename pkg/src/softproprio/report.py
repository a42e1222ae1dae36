"""Report emission: CSV tables, SVG figures and a versioned summary.json.

Every output is a pure function of the results dict, so identical results give
byte-identical files. Cells without data are written as ``n/a``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import svg
from .metrics import ConfusionCounts, f1_accuracy
from .robot.episode import CRAWL_OBSTRUCTED, RANDOM_ACTION
from .robot.physics import REAL, SIM

SUMMARY_FORMAT = "softproprio-summary/1"
NA = "n/a"
SHAPE_METRICS = ("mae_norm", "mae_mm", "marker_mm")
SCORE_NAMES = ("precision", "recall", "f1", "accuracy")
ALIGN_METRICS = ("diff_init", "diff_trained", "overlap_latent", "overlap_raw")


def _num(v: float) -> float:
    return float(f"{v:.10g}")


def mean_std(values: list[float]) -> dict | str:
    """Mean and population std over seeds; ``n/a`` for no values."""
    if not values:
        return NA
    a = np.asarray(values, dtype=np.float64)
    return {"mean": _num(a.mean()), "std": _num(a.std()), "n": len(values)}


def _cell(ms, digits: int = 4) -> str:
    if ms == NA:
        return NA
    return f"{ms['mean']:.{digits}f} ± {ms['std']:.{digits}f}"


def _empty_results() -> dict:
    return {"config_hash": "", "seeds": [], "variants": [], "tasks": [RANDOM_ACTION, CRAWL_OBSTRUCTED],
            "domains": [SIM, REAL], "shape": [], "detection": [], "alignment": [], "figures": {}}


def summarize(results: dict) -> dict:
    r = {**_empty_results(), **results}
    shape = {}
    for v in r["variants"]:
        shape[v] = {}
        for d in r["domains"]:
            shape[v][d] = {}
            for t in r["tasks"]:
                rows = [x for x in r["shape"] if (x["variant"], x["domain"], x["task"]) == (v, d, t)]
                shape[v][d][t] = {m: mean_std([x[m] for x in rows]) for m in SHAPE_METRICS}
    detection = {}
    for v in r["variants"]:
        detection[v] = {}
        for d in r["domains"]:
            rows = [x for x in r["detection"] if (x["variant"], x["domain"]) == (v, d)]
            if not rows:
                detection[v][d] = NA
                continue
            per_seed = [f1_accuracy(ConfusionCounts(**x["counts"])) for x in rows]
            total = ConfusionCounts()
            for x in rows:
                total = total + ConfusionCounts(**x["counts"])
            cell = {"threshold": rows[0]["threshold"], "required": rows[0]["required"],
                    "counts": total.to_dict()}
            for name in SCORE_NAMES:
                vals = [getattr(s, name) for s in per_seed]
                defined = [x for x in vals if x is not None]
                cell[name] = mean_std(defined) if defined else NA
                cell[name + "_undefined_seeds"] = len(vals) - len(defined)
            detection[v][d] = cell
    alignment = {}
    for v in r["variants"]:
        rows = [x for x in r["alignment"] if x["variant"] == v]
        if rows:
            cell = {m: mean_std([x[m] for x in rows]) for m in ALIGN_METRICS}
            cell["per_seed"] = [{k: x[k] for k in ("seed",) + ALIGN_METRICS} for x in sorted(rows, key=lambda x: x["seed"])]
            alignment[v] = cell
        else:
            alignment[v] = NA
    return {"format": SUMMARY_FORMAT, "config_hash": r["config_hash"], "seeds": r["seeds"],
            "variants": r["variants"], "shape": shape, "detection": detection, "alignment": alignment}


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _fmt(ms, key="mean", digits=6):
    return NA if ms == NA else f"{ms[key]:.{digits}f}"


def shape_table(summary: dict) -> str:
    rows = [["variant", "domain", "task", "n_seeds"] + [f"{m}_{k}" for m in SHAPE_METRICS for k in ("mean", "std")]]
    for v, doms in summary["shape"].items():
        for d, tasks in doms.items():
            for t, cell in tasks.items():
                n = cell["mae_norm"]["n"] if cell["mae_norm"] != NA else 0
                rows.append([v, d, t, n] + [_fmt(cell[m], k) for m in SHAPE_METRICS for k in ("mean", "std")])
    return _csv(rows)


def shape_table_pm(summary: dict) -> str:
    """One row per variant, mean ± std per (domain, task)."""
    cols = [(d, t) for d in (SIM, REAL) for t in (RANDOM_ACTION, CRAWL_OBSTRUCTED)]
    rows = [["variant"] + [f"{d}/{t}" for d, t in cols]]
    for v, doms in summary["shape"].items():
        rows.append([v] + [_cell(doms.get(d, {}).get(t, {}).get("mae_norm", NA)) for d, t in cols])
    return _csv(rows)


def detection_table(summary: dict) -> str:
    rows = [["variant", "domain", "required", "threshold"]
            + [f"{n}_{k}" for n in SCORE_NAMES for k in ("mean", "std")]
            + ["tp_current", "tp_next", "fn", "fp", "tn"]]
    for v, doms in summary["detection"].items():
        for d, cell in doms.items():
            if cell == NA:
                rows.append([v, d] + [NA] * (2 + 2 * len(SCORE_NAMES) + 5))
                continue
            scores = []
            for n in SCORE_NAMES:
                ms = cell[n]
                scores += ["-", "-"] if ms == NA else [f"{ms['mean']:.4f}", f"{ms['std']:.4f}"]
            c = cell["counts"]
            rows.append([v, d, cell["required"], f"{cell['threshold']:.6f}"] + scores
                        + [c["tp_current"], c["tp_next"], c["fn"], c["fp"], c["tn"]])
    return _csv(rows)


def alignment_table(summary: dict) -> str:
    rows = [["variant", "seed"] + list(ALIGN_METRICS)]
    for v, cell in summary["alignment"].items():
        if cell == NA:
            rows.append([v, NA] + [NA] * len(ALIGN_METRICS))
            continue
        for x in cell["per_seed"]:
            rows.append([v, x["seed"]] + [f"{x[m]:.6f}" for m in ALIGN_METRICS])
    return _csv(rows)


def _figures(results: dict) -> dict[str, str]:
    figs = results.get("figures", {})
    out = {}
    series = [(v, np.asarray(f["shape_trace"]["t"]), np.asarray(f["shape_trace"]["mae"]))
              for v, f in sorted(figs.items()) if "shape_trace" in f]
    out["shape_error_trace.svg"] = (
        svg.line_plot(series, "Per-frame node MAE, real random action", "t [s]", "MAE (normalized)")
        if series else svg.empty_plot("Per-frame node MAE"))
    for v, f in sorted(figs.items()):
        if "latent" in f:
            lat = f["latent"]
            out[f"latent_{v}.svg"] = svg.scatter_plot(
                [("sim", np.asarray(lat["latent_sim"])), ("real", np.asarray(lat["latent_real"]))],
                f"{v}: latent features (PCA)", "PC1", "PC2")
            out[f"raw_sensors_{v}.svg"] = svg.scatter_plot(
                [("sim", np.asarray(lat["raw_sim"])), ("real", np.asarray(lat["raw_real"]))],
                "raw sensor readings (PCA)", "PC1", "PC2")
        for d, det in sorted(f.get("detection", {}).items()):
            t = np.asarray(det["t"])
            out[f"detection_{v}_{d}.svg"] = svg.line_plot(
                [("error", t, np.asarray(det["e"])), ("detected", t, np.asarray(det["pred"]) * det["threshold"])],
                f"{v}: {d} obstructed crawl", "t [s]", "error", hlines=[("threshold", det["threshold"])],
                shade=(t, np.asarray(det["truth"], bool)))
        curve = f.get("curve")
        if curve and "epoch" in curve:
            ep = np.asarray(curve["epoch"])
            keys = [k for k in ("recon_s", "recon_r", "diff", "kine", "val_total") if k in curve]
            out[f"training_curve_{v}.svg"] = svg.line_plot(
                [(k, ep, np.asarray(curve[k])) for k in keys], f"{v}: validation losses", "epoch", "loss")
    return out


def emit_report(results: dict | None, out_dir: str | Path) -> dict:
    """Write tables/, figures/ and summary.json under ``out_dir``; returns the summary."""
    out_dir = Path(out_dir)
    (out_dir / "tables").mkdir(parents=True, exist_ok=True)
    (out_dir / "figures").mkdir(parents=True, exist_ok=True)
    summary = summarize(results or {})
    tables = {
        "shape_mae.csv": shape_table(summary),
        "shape_mae_pm.csv": shape_table_pm(summary),
        "detection.csv": detection_table(summary),
        "alignment.csv": alignment_table(summary),
    }
    for name, text in tables.items():
        (out_dir / "tables" / name).write_text(text)
    for stale in (out_dir / "figures").glob("*.svg"):
        stale.unlink()
    for name, text in _figures(results or {}).items():
        (out_dir / "figures" / name).write_text(text)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary

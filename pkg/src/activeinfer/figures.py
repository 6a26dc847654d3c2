"""Render experiment tables as PNG figures.

Each function takes rows in the same shape the CSV writers use, so the
CLI can feed either freshly computed tables or reloaded files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = {
    "active-batch": "tab:blue",
    "active-seq": "tab:cyan",
    "active-seq-finetune": "tab:purple",
    "ppi": "tab:orange",
    "classical": "tab:green",
}


def _color(method):
    return _COLORS.get(method, "tab:gray")


def render_widths(rows, path, alpha=None):
    """Width and coverage against labeling budget, one line per method.

    rows: iterables of (method, n_b, mean_width, coverage).
    """
    groups: dict[str, list] = {}
    for method, n_b, width, cov in rows:
        groups.setdefault(str(method), []).append((float(n_b), float(width), float(cov)))
    fig, (ax_w, ax_c) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for method, pts in groups.items():
        pts.sort()
        nb = [p[0] for p in pts]
        ax_w.plot(nb, [p[1] for p in pts], marker="o", ms=3, label=method, color=_color(method))
        ax_c.plot(nb, [p[2] for p in pts], marker="o", ms=3, label=method, color=_color(method))
    ax_w.set_xscale("log")
    ax_w.set_yscale("log")
    ax_w.set_xlabel("label budget")
    ax_w.set_ylabel("mean interval width")
    ax_c.set_xlabel("label budget")
    ax_c.set_ylabel("coverage")
    ax_c.set_ylim(0.0, 1.02)
    if alpha is not None:
        ax_c.axhline(1.0 - float(alpha), color="k", lw=0.8, ls="--")
    ax_w.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_savings(rows, path):
    """Budget savings of the active method over each baseline.

    rows: iterables of (baseline, n_b, save_pct_or_None, note).
    """
    groups: dict[str, list] = {}
    for baseline, n_b, pct, _note in rows:
        if pct is None or pct == "":
            continue
        groups.setdefault(str(baseline), []).append((float(n_b), float(pct)))
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for baseline, pts in groups.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3,
                label=f"vs {baseline}", color=_color(baseline))
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("baseline label budget")
    ax.set_ylabel("budget saved (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_examples(rows, path, theta_star=None):
    """Interval whiskers for a handful of individual trials.

    rows: iterables of (trial, method, estimate, lo, hi).
    """
    methods: list[str] = []
    for _, method, *_rest in rows:
        if method not in methods:
            methods.append(str(method))
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    per_method: dict[str, int] = {m: 0 for m in methods}
    width = 0.8 / max(len(methods), 1)
    for trial, method, est, lo, hi in rows:
        k = methods.index(str(method))
        pos = float(trial) + (k - (len(methods) - 1) / 2.0) * width
        ax.vlines(pos, float(lo), float(hi), color=_color(method), lw=2,
                  label=method if per_method[method] == 0 else None)
        ax.plot([pos], [float(est)], marker="o", ms=3, color=_color(method))
        per_method[str(method)] += 1
    if theta_star is not None:
        ax.axhline(float(theta_star), color="k", lw=0.8, ls="--", label="target")
    ax.set_xlabel("trial")
    ax.set_ylabel("estimate and interval")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

"""Matplotlib figures written next to the CSV/JSON outputs (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def curve_figure(report, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    it = np.arange(1, len(report.losses) + 1)
    if len(it):
        ax.semilogy(it, report.losses, label="train loss")
        ax.semilogy(it, report.rmses, label="test RMSE")
        ax.legend()
    ax.set_xlabel("iteration")
    ax.set_title(f"{report.config['model']} / {report.config['system']} ({report.stop_reason})")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def prediction_figure(report, path):
    p = report.predictions
    x = np.asarray(p["x"])
    if x.shape[1] == 1:
        fig, ax = plt.subplots(figsize=(7, 4))
        order = np.argsort(x[:, 0])
        ax.plot(x[order, 0], np.asarray(p["truth"])[order], "k-", lw=1, label="reference")
        ax.plot(x[order, 0], np.asarray(p["prediction"])[order], "r--", lw=1, label="prediction")
        ax.plot(np.asarray(p["train_x"])[:, 0], p["train_y"], "b.", ms=4, label="training data")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("angle (rad)")
        ax.legend()
    else:
        # Last test frame: truth, prediction and their difference.
        t_last = x[:, 0].max()
        sel = x[:, 0] == t_last
        cols = x[sel, 1].astype(int)
        rows = x[sel, 2].astype(int)
        shape = (rows.max() + 1, cols.max() + 1)
        grids = []
        for key in ("truth", "prediction"):
            g = np.full(shape, np.nan)
            g[rows, cols] = np.asarray(p[key])[sel]
            grids.append(g)
        grids.append(grids[1] - grids[0])
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
        for ax, g, title in zip(axes, grids, ("reference", "prediction", "difference")):
            im = ax.imshow(g, origin="upper")
            ax.set_title(f"{title}, t = {t_last:.3g} s")
            fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def report_figures(report, out_dir):
    out = Path(out_dir)
    paths = [curve_figure(report, out / "loss_curve.png")]
    if report.predictions is not None:
        paths.append(prediction_figure(report, out / "predictions.png"))
    return paths


def sweep_figure(result, path):
    rows = result.table()
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r[result.axis] for r in rows]
    ax.plot(xs, [r["median_final_rmse"] for r in rows], "o-", label="median final RMSE")
    ax.plot(xs, [r["median_best_rmse"] for r in rows], "s--", label="median best RMSE")
    ax.set_xlabel(result.axis)
    ax.set_ylabel("RMSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)

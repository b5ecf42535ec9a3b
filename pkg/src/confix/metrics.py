"""Held-out view evaluation: PSNR and SSIM with report emission.

SSIM delegates to the same implementation the training objective uses,
so the evaluation metric can never drift from the loss.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .ssim import ssim_index

PSNR_CAP_DB = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images.

    10*log10(1 / MSE) with peak value 1.0; identical images report the
    cap value 99.0 dB instead of infinity.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite image values")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Channel-averaged mean SSIM; shares internals with the objective."""
    return ssim_index(a, b)


@dataclass(frozen=True)
class EvalRow:
    view_id: int
    psnr: float
    ssim: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    mean_psnr: float
    mean_ssim: float

    @property
    def view_count(self) -> int:
        return len(self.rows)


def evaluate_pairs(pairs: Iterable[tuple[int, np.ndarray, np.ndarray]]) -> EvalReport:
    """Score (view_id, render, reference) triples and aggregate.

    Rows keep the input order; aggregates are plain means.
    """
    rows = tuple(EvalRow(vid, psnr(render, ref), ssim(render, ref)) for vid, render, ref in pairs)
    if not rows:
        raise ValueError("no views to evaluate")
    return EvalReport(
        rows=rows,
        mean_psnr=float(np.mean([r.psnr for r in rows])),
        mean_ssim=float(np.mean([r.ssim for r in rows])),
    )


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    """One row per view plus a trailing mean row; full float precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["view_id", "psnr", "ssim"])
        for row in report.rows:
            writer.writerow([row.view_id, repr(row.psnr), repr(row.ssim)])
        writer.writerow(["mean", repr(report.mean_psnr), repr(report.mean_ssim)])


def write_report_json(report: EvalReport, path: str | Path) -> None:
    payload = {
        "views": [{"view_id": r.view_id, "psnr": r.psnr, "ssim": r.ssim} for r in report.rows],
        "mean_psnr": report.mean_psnr,
        "mean_ssim": report.mean_ssim,
        "view_count": report.view_count,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

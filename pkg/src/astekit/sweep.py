"""Two-stage weight search for the auxiliary losses: sweep alpha with beta
held at its pivot value, then sweep beta at the winning alpha."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

DEFAULT_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
BETA_PIVOT = 0.4


@dataclass
class SweepCell:
    stage: int
    alpha: float
    beta: float
    dev_f1: float


@dataclass
class SweepResult:
    best_alpha: float
    best_beta: float
    best_f1: float
    cells: list[SweepCell]


def two_stage_sweep(
    objective: Callable[[float, float], float],
    alpha_grid: Sequence[float] = DEFAULT_GRID,
    beta_grid: Sequence[float] = DEFAULT_GRID,
    beta_pivot: float = BETA_PIVOT,
    csv_path: Optional[str | Path] = None,
) -> SweepResult:
    """`objective(alpha, beta)` returns dev F1 for one training run.

    Ties break toward the earlier grid point so a flat objective is stable.
    Partial results are flushed to the CSV after every cell.
    """
    cells: list[SweepCell] = []

    def run(stage: int, alpha: float, beta: float) -> float:
        f1 = objective(alpha, beta)
        cells.append(SweepCell(stage, alpha, beta, f1))
        if csv_path is not None:
            _write_cells(csv_path, cells)
        return f1

    best_alpha, best_alpha_f1 = None, -1.0
    for alpha in alpha_grid:
        f1 = run(1, alpha, beta_pivot)
        if f1 > best_alpha_f1:
            best_alpha, best_alpha_f1 = alpha, f1

    best_beta, best_f1 = None, -1.0
    for beta in beta_grid:
        if beta == beta_pivot:
            f1 = best_alpha_f1  # already measured in stage 1
            cells.append(SweepCell(2, best_alpha, beta, f1))
            if csv_path is not None:
                _write_cells(csv_path, cells)
        else:
            f1 = run(2, best_alpha, beta)
        if f1 > best_f1:
            best_beta, best_f1 = beta, f1

    return SweepResult(best_alpha, best_beta, best_f1, cells)


def _write_cells(path: str | Path, cells: list[SweepCell]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "alpha", "beta", "dev_f1"])
        for cell in cells:
            writer.writerow([cell.stage, cell.alpha, cell.beta, f"{cell.dev_f1:.6f}"])

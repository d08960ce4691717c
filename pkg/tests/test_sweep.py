import csv

import pytest

from astekit.sweep import DEFAULT_GRID, two_stage_sweep


def make_objective(best_alpha, best_beta):
    def objective(alpha, beta):
        return 1.0 - (alpha - best_alpha) ** 2 - (beta - best_beta) ** 2

    return objective


class TestTwoStageSweep:
    def test_recovers_known_optimum(self, tmp_path):
        result = two_stage_sweep(make_objective(0.2, 0.6),
                                 csv_path=tmp_path / "sweep.csv")
        assert (result.best_alpha, result.best_beta) == (0.2, 0.6)

    def test_csv_shape(self, tmp_path):
        path = tmp_path / "sweep.csv"
        two_stage_sweep(make_objective(0.8, 0.4), csv_path=path)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert {r["stage"] for r in rows} == {"1", "2"}
        assert len(rows) == 2 * len(DEFAULT_GRID)
        assert set(rows[0]) == {"stage", "alpha", "beta", "dev_f1"}

    def test_single_point_grid(self):
        result = two_stage_sweep(make_objective(0.5, 0.5), [0.3], [0.7],
                                 beta_pivot=0.7)
        assert (result.best_alpha, result.best_beta) == (0.3, 0.7)

    def test_deterministic_reruns(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        two_stage_sweep(make_objective(0.6, 0.2), csv_path=p1)
        two_stage_sweep(make_objective(0.6, 0.2), csv_path=p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_stage_one_pivot_not_recomputed(self):
        calls = []

        def objective(alpha, beta):
            calls.append((alpha, beta))
            return 1.0 - abs(alpha - 0.4) - abs(beta - 0.4)

        two_stage_sweep(objective)
        assert calls.count((0.4, 0.4)) == 1

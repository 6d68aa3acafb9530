from __future__ import annotations

import math

import numpy as np
import pytest

from bevcast.decoder import GaussianSequence
from bevcast.errors import EvaluationError
from bevcast.evaluation import (
    HORIZON_SECONDS,
    REFERENCE_RMSE,
    HorizonReport,
    baseline_reports,
    constant_position_baseline,
    constant_velocity_baseline,
    horizon_step,
    plot_overlay,
    plot_rmse_vs_horizon,
    render_report,
    rmse_per_horizon,
    write_rmse_table,
)


def _oracle_rmse(mu: np.ndarray, xy: np.ndarray, k: int) -> float:
    # brute-force accumulation in the same fixed order as the implementation
    total = 0.0
    for i in range(mu.shape[0]):
        total += (mu[i, k - 1, 0] - xy[i, k - 1, 0]) ** 2 + (mu[i, k - 1, 1] - xy[i, k - 1, 1]) ** 2
    return math.sqrt(total / mu.shape[0])


class TestHorizonStep:
    def test_the_five_report_horizons(self):
        assert [horizon_step(s) for s in HORIZON_SECONDS] == [6, 13, 19, 25, 31]

    def test_half_up_rounding(self):
        assert horizon_step(0.88) == 6   # 5.5 rounds up
        assert horizon_step(0.87) == 5
        assert horizon_step(1.04) == 7   # 6.5 rounds up

    def test_clamping(self):
        assert horizon_step(0.0) == 1
        assert horizon_step(99.0) == 31


class TestRmse:
    def test_matches_oracle_on_1000_pairs(self, rng):
        mu = rng.standard_normal((1000, 31, 2)) * 5.0
        xy = rng.standard_normal((1000, 31, 2)) * 5.0
        report = rmse_per_horizon(list(mu), list(xy))
        for k, value in zip(report.steps, report.rmse):
            oracle = _oracle_rmse(mu, xy, k)
            assert abs(value - oracle) <= 1e-9 * max(1.0, abs(oracle))

    def test_zero_error_is_exactly_zero(self, rng):
        xy = rng.standard_normal((50, 31, 2))
        report = rmse_per_horizon(list(xy.copy()), list(xy))
        assert report.rmse == (0.0, 0.0, 0.0, 0.0, 0.0)

    def test_unit_offsets_give_sqrt_2(self):
        mu = np.zeros((10, 31, 2))
        xy = np.ones((10, 31, 2))
        report = rmse_per_horizon(list(mu), list(xy))
        for value in report.rmse:
            assert value == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_accepts_gaussian_sequences(self, rng):
        values = np.zeros((31, 5))
        values[:, 2:4] = 1.0
        seqs = [GaussianSequence(values.copy()) for _ in range(4)]
        xy = rng.standard_normal((4, 31, 2))
        a = rmse_per_horizon(seqs, list(xy))
        b = rmse_per_horizon([np.zeros((31, 2))] * 4, list(xy))
        assert a.rmse == b.rmse

    def test_order_invariance(self, rng):
        mu = rng.standard_normal((64, 31, 2))
        xy = rng.standard_normal((64, 31, 2))
        forward = rmse_per_horizon(list(mu), list(xy))
        perm = rng.permutation(64)
        shuffled = rmse_per_horizon(list(mu[perm]), list(xy[perm]))
        for a, b in zip(forward.rmse, shuffled.rmse):
            assert a == pytest.approx(b, rel=1e-12)

    def test_empty_or_mismatched_sets_rejected(self, rng):
        xy = list(rng.standard_normal((3, 31, 2)))
        with pytest.raises(EvaluationError):
            rmse_per_horizon([], [])
        with pytest.raises(EvaluationError):
            rmse_per_horizon(xy[:2], xy)
        with pytest.raises(EvaluationError):
            rmse_per_horizon([np.zeros((30, 2))], [np.zeros((31, 2))])

    def test_report_validation(self):
        with pytest.raises(EvaluationError):
            HorizonReport(horizons=(1.0,), steps=(6,), rmse=(1.0,), sample_count=0)
        with pytest.raises(EvaluationError):
            HorizonReport(horizons=(1.0,), steps=(6,), rmse=(float("nan"),), sample_count=3)
        with pytest.raises(EvaluationError):
            HorizonReport(horizons=(1.0,), steps=(6,), rmse=(-0.5,), sample_count=3)


class TestBaselines:
    def test_constant_velocity_is_exact_on_constant_velocity_windows(self, small_corpus):
        report = baseline_reports(small_corpus, names=("cv",))["constant velocity"]
        for value in report.rmse:
            assert value < 1e-9

    def test_constant_velocity_closed_form(self, one_window):
        pred = constant_velocity_baseline(one_window)
        assert pred.shape == (31, 2)
        assert pred[5, 0] == pytest.approx(one_window.vx * 0.16 * 6, rel=1e-12)
        assert pred[30, 1] == pytest.approx(one_window.vy * 0.16 * 31, rel=1e-12)

    def test_cv_at_25_mps_reaches_124_meters(self, one_window):
        import copy

        w = copy.copy(one_window)
        w.vx, w.vy = 25.0, 0.0
        pred = constant_velocity_baseline(w)
        assert pred[30, 0] == pytest.approx(124.0, abs=1e-12)

    def test_constant_position_is_zero(self, one_window):
        assert np.array_equal(constant_position_baseline(one_window), np.zeros((31, 2)))

    def test_constant_position_rmse_grows_with_horizon(self, small_corpus):
        report = baseline_reports(small_corpus, names=("cp",))["constant position"]
        assert all(a < b for a, b in zip(report.rmse, report.rmse[1:]))

    def test_unknown_baseline_rejected(self, small_corpus):
        with pytest.raises(EvaluationError, match="unknown baseline"):
            baseline_reports(small_corpus, names=("teleport",))
        with pytest.raises(EvaluationError):
            baseline_reports([], names=("cv",))


class TestReference:
    def test_reference_rows(self):
        assert REFERENCE_RMSE["BEV-LSTM (reported)"] == (0.42, 0.88, 1.26, 1.57, 1.91)
        assert set(REFERENCE_RMSE) == {
            "S-LSTM", "CS-LSTM", "CS-LSTM(M)", "NLS-LSTM", "BEV-LSTM (reported)"
        }
        for row in REFERENCE_RMSE.values():
            assert len(row) == len(HORIZON_SECONDS)
            assert all(a < b for a, b in zip(row, row[1:]))


class TestReportFiles:
    def test_rmse_table_contents(self, small_corpus, tmp_path):
        reports = baseline_reports(small_corpus)
        path = tmp_path / "rmse_table.csv"
        write_rmse_table(reports, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "predictor,rmse_1s,rmse_2s,rmse_3s,rmse_4s,rmse_5s"
        names = [l.split(",")[0] for l in lines[1:]]
        assert names[:2] == ["constant velocity", "constant position"]
        assert "BEV-LSTM (reported)" in names
        cp_row = lines[names.index("constant position") + 1].split(",")[1:]
        report = reports["constant position"]
        assert [float(v) for v in cp_row] == pytest.approx(list(report.rmse), abs=5e-7)

    def test_reference_rows_can_be_excluded(self, small_corpus, tmp_path):
        reports = baseline_reports(small_corpus)
        path = tmp_path / "bare.csv"
        write_rmse_table(reports, path, include_reference=False)
        text = path.read_text()
        assert "BEV-LSTM" not in text
        assert len(text.splitlines()) == 1 + len(reports)

    def test_empty_reports_rejected(self, tmp_path):
        with pytest.raises(EvaluationError):
            write_rmse_table({}, tmp_path / "never.csv")

    def test_render_report_creates_expected_files(self, small_corpus, tmp_path):
        reports = baseline_reports(small_corpus)
        qualitative = [
            (small_corpus[0], constant_velocity_baseline(small_corpus[0])),
            (small_corpus[1], None),
        ]
        created = render_report(reports, tmp_path / "report", qualitative)
        names = [p.name for p in created]
        w0, w1 = small_corpus[0], small_corpus[1]
        assert names == [
            "rmse_table.csv",
            "rmse_vs_horizon.png",
            f"overlay_{w0.tv_id}_{w0.t}.png",
            f"overlay_{w1.tv_id}_{w1.t}.png",
        ]
        for p in created:
            assert p.is_file() and p.stat().st_size > 0

    def test_figures_are_deterministic(self, small_corpus, tmp_path):
        reports = baseline_reports(small_corpus)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        plot_rmse_vs_horizon(reports, a)
        plot_rmse_vs_horizon(reports, b)
        assert a.read_bytes() == b.read_bytes()

        w = small_corpus[0]
        oa, ob = tmp_path / "oa.png", tmp_path / "ob.png"
        plot_overlay(w, constant_velocity_baseline(w), oa)
        plot_overlay(w, constant_velocity_baseline(w), ob)
        assert oa.read_bytes() == ob.read_bytes()

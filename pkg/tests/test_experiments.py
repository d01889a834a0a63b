import math

import numpy as np
import pytest

from leray_alpha.dynamics import TimeGrid
from leray_alpha.experiments import SweepConfig, SweepReport, SweepRow, alpha_sweep, uniformity_check
from leray_alpha.spectral import SpectralField, two_mode

G = TimeGrid(1.0, 100)


@pytest.fixture(scope="module")
def sweep(bed, fp_cfg):
    cfg = SweepConfig(two_mode(bed.basis, 0.2), bed.mask, G, fp_cfg)
    return alpha_sweep(cfg, [0.025, 0.1, 0.0, 0.05])


def test_rows_sorted_with_limit_last(sweep):
    assert [r.alpha for r in sweep.rows] == [0.1, 0.05, 0.025, 0.0]
    assert sweep.row(0.0).l2Q_dist_y == 0.0


def test_distances_shrink_quadratically(sweep):
    d, ratios = sweep.distances_decreasing()
    assert np.all(np.diff(d) < 0)
    # halving alpha divides the gap by about four
    np.testing.assert_allclose(ratios, 4.0, rtol=0.15)


def test_filter_gap_within_bound(sweep):
    for r in sweep.rows:
        assert r.l2Q_dist_zy <= r.zy_bound * (1 + 1e-12)


def test_uniform_controls(sweep):
    rep = uniformity_check(sweep)
    assert rep["pass"] and 1.0 <= rep["max_over_min"] <= 1.5


def test_records_have_csv_columns(sweep):
    recs = sweep.records()
    assert len(recs) == 4
    assert tuple(recs[0]) == SweepRow.CSV_COLUMNS


def test_single_limit_alpha(bed, fp_cfg):
    rep = alpha_sweep(SweepConfig(two_mode(bed.basis, 0.1), bed.mask, G, fp_cfg), [0.0])
    assert len(rep.rows) == 1 and rep.rows[0].converged
    d, ratios = rep.distances_decreasing()
    assert d.size == 0 and ratios.size == 0
    with pytest.raises(ValueError):
        uniformity_check(rep)


def test_zero_state_uniformity_is_one(bed, fp_cfg):
    rep = alpha_sweep(SweepConfig(SpectralField.zeros(bed.basis), bed.mask, G, fp_cfg), [0.0, 0.1])
    assert uniformity_check(rep)["max_over_min"] == 1.0


@pytest.mark.parametrize("alphas", [[0.1, 0.2], [0.0, -0.1]])
def test_invalid_alpha_sets(bed, fp_cfg, alphas):
    with pytest.raises(ValueError):
        alpha_sweep(SweepConfig(two_mode(bed.basis, 0.1), bed.mask, G, fp_cfg), alphas)


def test_uniformity_with_one_vanishing_control():
    rows = [SweepRow(0.1, 0.0, 0.0, 1, True), SweepRow(0.0, 0.5, 0.0, 1, True)]
    rep = uniformity_check(SweepReport([0.1, 0.0], rows))
    assert rep["max_over_min"] == math.inf and not rep["pass"]


def test_sweep_is_deterministic(bed, fp_cfg):
    cfg = SweepConfig(two_mode(bed.basis, 0.2), bed.mask, G, fp_cfg, workers=2)
    a = alpha_sweep(cfg, [0.0, 0.1])
    b = alpha_sweep(cfg, [0.1, 0.0])
    for ra, rb in zip(a.rows, b.rows):
        np.testing.assert_array_equal(ra.result.control.values, rb.result.control.values)
        assert ra.l2Q_dist_y == rb.l2Q_dist_y

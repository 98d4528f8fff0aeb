import csv

import numpy as np
import pytest

from vicsample.bench import (COMPLEXITY_TABLE, ScalingTable, TimingCell, bench_loss_scaling,
                             median_time, time_cell)


def test_median_time_batches_fast_calls():
    calls = []
    med, inner, samples = median_time(lambda: calls.append(1), reps=5, warmup=2)
    assert inner > 1
    assert len(samples) == 5 and med > 0
    assert len(calls) >= 2 + 5 * inner


@pytest.mark.parametrize("m", [1, 7, 32])
def test_buffer_is_exactly_m_squared(m):
    z = np.random.default_rng(0).standard_normal((50, 40))
    cell = time_cell(z, np.arange(m), reps=3, warmup=1)
    assert cell.buffer_entries == m * m
    assert cell.buffer_bytes == m * m * 8
    assert (cell.n, cell.d) == (50, m)


def test_float32_buffer_bytes():
    table = bench_loss_scaling([64], 32, [8], reps=3, dtype=np.float32)
    assert table.lookup(64, 8).buffer_bytes == 8 * 8 * 4


def _cell(n, d, t):
    return TimingCell(n, d, t, 1, 1, d * d, d * d * 8)


def test_scaling_ratios_and_csv(tmp_path):
    table = ScalingTable([_cell(100, 8, 1.0), _cell(100, 16, 4.0), _cell(200, 8, 2.5),
                          _cell(100, 64, 9.0)])
    assert table.dim_ratios(100) == [(8, 4.0)]
    assert table.node_ratios(8) == [(100, 2.5)]
    with pytest.raises(KeyError):
        table.lookup(300, 8)
    table.to_csv(tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 4 and rows[0]["buffer_entries"] == "64"


def test_bench_rejects_bad_grid():
    with pytest.raises(ValueError):
        bench_loss_scaling([10], 8, [16], reps=1)
    with pytest.raises(ValueError):
        bench_loss_scaling([], 8, [4], reps=1)


def test_complexity_table_entries():
    assert COMPLEXITY_TABLE["VICReg (Siamese)"]["ssl_loss"] == "N D^2"
    assert COMPLEXITY_TABLE["GRACE"]["ssl_loss"] == "N^2"
    assert set(COMPLEXITY_TABLE) == {"BGRL", "GRACE", "VICReg (non-Siamese)",
                                     "VICReg (Siamese)"}

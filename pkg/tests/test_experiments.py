"""Experiment drivers at small sizes."""

import math

import numpy as np
import pytest

from lamforge.constraints import ConstraintError
from lamforge.experiments import (
    ConfigError,
    EnergyDensity,
    RunConfig,
    parse_boundary,
    run_approximation,
    run_gap,
    run_lsc,
)


def test_energy_density():
    f = EnergyDensity(1.5, 2)
    assert f(np.eye(2)) == pytest.approx(2**0.75 + 1.0)
    assert f(0.1 * np.eye(2)) >= 100.0
    assert f(0.02 * np.eye(2)) >= 2500.0
    assert math.isinf(f(np.diag([1.0, -1.0])))
    assert math.isfinite(f.growth_ratio())
    with pytest.raises(ConstraintError):
        EnergyDensity(2.0, 2)
    with pytest.raises(ConfigError):
        EnergyDensity(1.5, 2, kappa="log")


def test_parse_boundary(tmp_path):
    g, A = parse_boundary("2x", 2)
    np.testing.assert_array_equal(g(np.array([[1.0, 2.0]])), [[2.0, 4.0]])
    g, A = parse_boundary("affine:1,2,3,4", 2)
    np.testing.assert_array_equal(A, [[1, 2], [3, 4]])
    with pytest.raises(ConfigError):
        parse_boundary("affine:1,2", 2)
    path = tmp_path / "b.csv"
    path.write_text("0,0\n1,1\n")
    vals, A = parse_boundary(f"file:{path}", 2)
    assert A is None and vals.shape == (2, 2)


def test_validation():
    with pytest.raises(ConfigError):
        RunConfig("solve", dim=2, p=2.0).validate()
    with pytest.raises(ConfigError):
        RunConfig("solve", dim=4, p=1.5).validate()
    with pytest.raises(ConfigError):
        RunConfig("solve", N=1).validate()
    assert RunConfig("laminate", dim=5, p=2.0).validate().dim == 5


def test_approximation_trivial():
    rows, summary = run_approximation(RunConfig("approx", n=8, rate=1.0, levels=2, iters=1))
    assert all(r["distance_lp"] == 0.0 for r in rows)
    assert summary["distance_decreasing"]


def test_approximation_sequence():
    rows, summary = run_approximation(RunConfig("approx", n=32, rate=2.0, levels=3, iters=3))
    assert summary["distance_decreasing"]
    assert summary["grad_band"] <= 3.0


def test_lsc_identity_boundary():
    rows, _ = run_lsc(RunConfig("lsc", n=8, eps=[1.0], iters=1))
    f = EnergyDensity(1.5, 2)
    assert rows[0]["realized_energy"] == pytest.approx(f(np.eye(2)))
    assert rows[0]["excluded_volume"] == 0.0


def test_lsc_table():
    rows, summary = run_lsc(RunConfig("lsc", n=64, iters=3))
    assert [r["eps"] for r in rows] == [0.5, 0.1, 0.02]
    assert summary["f_increasing"]
    assert summary["energies_below_K"]
    assert rows[-1]["f_boundary"] >= 2500.0


def test_gap_identity_rate_one():
    rep = run_gap(RunConfig("gap", n=16, rate=1.0, iters=1))
    assert rep["gap"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigError):
        run_gap(RunConfig("gap", g="2x"))

"""Smoke tests for the python bindings against the CMake-built module."""

import json
import math

import pytest

import otpf


def test_preset_constants():
    preset = otpf.make_preset("scalar_lg")
    assert preset.constants["a"] == -0.2
    assert preset.constants["c"] == 1.01
    assert preset.model.state_dim == 1
    with pytest.raises(ValueError):
        otpf.make_preset("nope")


def test_simulate_and_filter_roundtrip():
    preset = otpf.make_preset("scalar_lg")
    rng = otpf.RngStream(7, 0)
    truth = otpf.simulate_truth(preset.model, preset.true_params, [0.0], 50,
                                0.02, rng)
    assert len(truth.states) == 51
    assert truth.measurements.steps() == 50

    cfg = otpf.FilterConfig()
    cfg.kind = otpf.FilterKind.enkbf
    cfg.ensemble_size = 80
    out = otpf.run_filter(cfg, preset.model, preset.true_params,
                          otpf.initial_sampler(preset), truth.measurements, 3)
    assert out.means.shape == (51, 1)
    assert all(math.isfinite(v) for v in out.means[:, 0])

    again = otpf.run_filter(cfg, preset.model, preset.true_params,
                            otpf.initial_sampler(preset), truth.measurements, 3)
    assert (out.means == again.means).all()


def test_stationary_variance_value():
    p = otpf.kalman_bucy_stationary_variance(-0.2, 1.01, 0.001, 0.0001)
    assert abs(p - 2.9410413157391331e-4) < 1e-15


def test_transport_plan():
    cost = [[0.0, 1.0], [1.0, 0.0]]
    plan = otpf.exact_transport(cost, [0.5, 0.5], [0.5, 0.5])
    assert plan.entries[0][0] == pytest.approx(0.5)
    assert plan.entries[0][1] == pytest.approx(0.0)

    kernel = [[1.0, 0.5], [0.5, 1.0]]
    soft = otpf.sinkhorn(kernel, [0.5, 0.5], [0.5, 0.5])
    assert soft.converged
    row = soft.entries.sum(axis=1)
    assert row[0] == pytest.approx(0.5, abs=1e-8)


def test_gain_value():
    states = [[-1.0], [0.0], [1.0]]
    field = otpf.constant_gain(states, states, [[1.0]])
    assert field.gains[0][0][0] == pytest.approx(2.0 / 3.0)


def test_error_mapping():
    with pytest.raises(ValueError):
        otpf.validate_experiment_config("{broken")
    with pytest.raises(RuntimeError):
        # Infeasible kernel: one row carries no mass.
        otpf.sinkhorn([[1.0, 1.0], [0.0, 0.0]], [0.5, 0.5], [0.5, 0.5])


def test_run_experiment(tmp_path):
    config = {
        "schema_version": 1,
        "preset": "scalar_lg",
        "dt": 0.02,
        "horizon": 1.0,
        "burn_in": 0.5,
        "seeds": [1],
        "dual": {"enabled": True, "sigma": 0.001},
        "filters": [
            {"name": "enkbf", "kind": "enkbf", "ensemble_size": 60},
        ],
    }
    result = otpf.run_experiment(json.dumps(config), str(tmp_path))
    run = result["filters"]["enkbf"]["1"]
    assert math.isfinite(run["rmse_state"][0])
    assert len(run["param_boxplots"]) == 2
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "est_enkbf_seed1.csv").exists()

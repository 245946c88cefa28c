import math

import numpy as np
import pytest

from rabi_ccd.experiments import (PRESETS, EnsembleResult, NoiseBlock, build_experiment, quench_envelope,
                                  reduce_trajectories, run_ensemble, _Recorder, _TargetFrame)
from rabi_ccd.fock import build_operator_set, product_state
from rabi_ccd.hamiltonian import params_from_targets
from rabi_ccd.propagate import evolve_layer_ensemble
from rabi_ccd.seeding import trajectory_seeds

SHORT = {"t_final": 60e-6, "record_interval": 20e-6, "n_fock": 10}


def test_presets_resolve():
    for name in PRESETS:
        spec = build_experiment(name)
        assert spec.name == name
    assert build_experiment("qpt").n_trajectories == 50
    assert build_experiment("rabi").n_trajectories == 200
    assert build_experiment("coherence").n_trajectories == 1000


def test_overrides_and_errors():
    spec = build_experiment("coherence", {"tau": 5e-3, "n_trajectories": 3, "noise.T2": 2e-3})
    assert spec.noise.tau_m == 5e-3 and spec.noise.T2 == 2e-3 and spec.n_trajectories == 3
    assert build_experiment("rabi", {"layer": 2}).layers == (2,)
    assert not build_experiment("rabi", {"noiseless": True}).noise.enabled
    for bad in ({"bogus": 1}, {"noise.bogus": 1}, {"n_trajectories": 0}, {"record_interval": 1.0}):
        with pytest.raises(ValueError):
            build_experiment("rabi", bad)
    with pytest.raises(ValueError):
        build_experiment("coherence", {"layer": 1})
    with pytest.raises(ValueError):
        build_experiment("rabi", {"tau": 1e-3})
    with pytest.raises(ValueError):
        build_experiment("nope")


def test_quench_envelope():
    assert quench_envelope(0.0, 2.0, 5.0) == 0.0
    assert quench_envelope(1.0, 2.0, 5.0) == 2.5
    assert quench_envelope(2.0, 2.0, 5.0) == 5.0
    with pytest.raises(ValueError):
        quench_envelope(2.1, 2.0, 5.0)
    with pytest.raises(ValueError):
        quench_envelope(-0.1, 2.0, 5.0)


def test_reduce_single_trajectory_has_zero_stderr():
    m, se = reduce_trajectories(np.array([[1.0, 2.0]]))
    assert np.array_equal(m, [1.0, 2.0]) and np.array_equal(se, [0.0, 0.0])
    m, se = reduce_trajectories(np.array([[1.0], [3.0]]))
    assert m[0] == 2.0 and se[0] == pytest.approx(1.0)


def test_single_trajectory_ensemble_equals_direct_run():
    spec = build_experiment("rabi", {**SHORT, "n_trajectories": 1, "layers": (1,), "initial_states": ("up_tls",),
                                     "master_seed": 9})
    res = run_ensemble(spec)
    seed = trajectory_seeds(9, 1)[0]
    ops = build_operator_set(10)
    cfg, p = params_from_targets("rabi", 1, spec.targets, noise=spec.noise.model())
    plan = spec.plan()
    keep = []
    evolve_layer_ensemble(cfg, ops, product_state("up_x", 10), plan, [seed],
                          lambda s, t: keep.append(s[0].copy()) or np.zeros((1, 0)), _TargetFrame("rabi", 1, p).bind(10))
    rec = _Recorder(plan.record_times, None, [ops.sigma("x")], [(0.5, 0.5)])
    P = [rec(k[None, :], t)[0, 0] for k, t in zip(keep, plan.record_times)]
    assert np.array_equal(res.mean["P1_up_tls"], P)
    assert np.all(res.stderr["P1_up_tls"] == 0)


def test_zero_noise_amplitudes_reproduce_noiseless_run():
    over = {**SHORT, "n_trajectories": 3, "layers": (0, 2), "initial_states": ("up_tls",)}
    quiet = run_ensemble(build_experiment("rabi", {**over, "noise.c_override": 0.0, "noise.p": 0.0}))
    ideal = run_ensemble(build_experiment("rabi", {**over, "noiseless": True}))
    for k, vals in quiet.per_trajectory.items():
        assert np.array_equal(vals, np.broadcast_to(vals[0], vals.shape))      # every trajectory identical
        assert np.array_equal(vals[0], ideal.per_trajectory[k][0])             # ... and equal to the noiseless run
        assert np.all(quiet.stderr[k] < 1e-15)                                  # round-off of the mean only


@pytest.mark.parametrize("name,over", [
    ("rabi", {**SHORT, "n_trajectories": 5, "layers": (1,), "initial_states": ("up_tls",)}),
    ("ccd-demo", {"n_trajectories": 7, "t_final": 0.2e-3}),
    ("dirac", {**SHORT, "n_trajectories": 4, "layers": (2,)}),
])
def test_results_independent_of_worker_count(name, over):
    spec = build_experiment(name, over)
    a = run_ensemble(spec, workers=1)
    b = run_ensemble(spec, workers=3)
    for k in a.observables:
        assert np.array_equal(a.mean[k], b.mean[k]) and np.array_equal(a.stderr[k], b.stderr[k])


def test_qubit_preset_matches_analytic_coherence():
    res = run_ensemble(build_experiment("coherence", {"n_trajectories": 200, "t_final": 1e-3}))
    assert np.all(np.abs(res.mean["sx"] - res.mean["sx_analytic"]) <= 4 * res.stderr["sx"] + 1e-12)


def test_ou_demo_columns():
    res = run_ensemble(build_experiment("ou-demo", {"n_trajectories": 50,
                                                    "options": {"spectrum_realizations": 3, "spectrum_length": 1e-3}}))
    assert {"x", "var_x", "var_analytic", "sigma_analytic", "path0"} <= set(res.observables)
    spec = res.companions["spectrum"]
    assert spec.grid_label == "frequency_hz" and {"power", "power_analytic"} <= set(spec.observables)


def test_qpt_smoke():
    spec = build_experiment("qpt", {"n_trajectories": 2, "layers": (1,),
                                    "options": {"R_values": (50.0,), "T_grid": (4e-4,)}})
    res = run_ensemble(spec)
    assert res.grid_label == "T_rescaled"
    assert {"Sideal_R50", "S1_R50", "sigma1_R50"} <= set(res.observables)
    assert res.mean["S1_R50"][0] == pytest.approx(res.mean["Sideal_R50"][0], abs=0.02)

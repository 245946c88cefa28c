"""Per-step cost of the structured propagator against dense eigh stepping.

Usage: python benchmarks/bench_kernel.py [N ...]
"""
import sys
import time

import numpy as np

from rabi_ccd.experiments import build_experiment
from rabi_ccd.fock import build_operator_set, product_state
from rabi_ccd.hamiltonian import build_layer_hamiltonian, params_from_targets
from rabi_ccd.propagate import IntegrationPlan, default_dt, evolve, evolve_layer_ensemble
from rabi_ccd.seeding import channel_rng


def bench(N, layer=2, ntraj=8, nsteps=20000):
    spec = build_experiment("rabi")
    ops = build_operator_set(N)
    cfg, _ = params_from_targets("rabi", layer, spec.targets, noise=spec.noise.model())
    psi0 = product_state("up_y", N)
    plan = IntegrationPlan(default_dt(), nsteps * default_dt(), nsteps)
    noop = lambda s, t: np.zeros((len(s), 0))
    evolve_layer_ensemble(cfg, ops, psi0, IntegrationPlan(default_dt(), 10 * default_dt(), 10), [0], noop)
    t0 = time.perf_counter()
    evolve_layer_ensemble(cfg, ops, psi0, plan, list(range(ntraj)), noop, check=False)
    fast = (time.perf_counter() - t0) / (ntraj * nsteps)
    short = IntegrationPlan(default_dt(), 200 * default_dt(), 200)
    noise = {name: (p, channel_rng(0, c)) for c, (name, p) in enumerate(cfg.channels)}
    t0 = time.perf_counter()
    evolve(psi0, lambda t, s: build_layer_hamiltonian(t, cfg, s, ops), short, noise)
    dense = (time.perf_counter() - t0) / 200
    return fast, dense


if __name__ == "__main__":
    sizes = [int(a) for a in sys.argv[1:]] or [30, 60, 120]
    print(f"{'N':>5} {'kernel us/step':>15} {'dense us/step':>15} {'speed-up':>9}")
    for N in sizes:
        f, d = bench(N)
        print(f"{N:5d} {f * 1e6:15.2f} {d * 1e6:15.1f} {d / f:9.0f}")

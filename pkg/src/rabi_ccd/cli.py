"""Command-line entry point: ``rabi-ccd <preset> [flags]``.

Config files are INI text with sections ``[run]``, ``[noise]``,
``[targets]`` and ``[options]``.  Frequencies may be written as
``2pi*<kHz>`` (stored as rad/s) or as raw rad/s; lists are comma
separated.  Command-line flags override file values.

Outputs
-------
``<out>``            CSV: first column is the grid (``time_s`` for time series,
                     ``T_rescaled`` for the quench preset, ``frequency_hz``
                     for spectra), then ``mean_<name>``, ``stderr_<name>`` per
                     observable; 17 significant digits, LF line endings.
``<out>.meta.json``  JSON object with the resolved spec, trajectory seeds,
                     step size, Fock truncation and code version.
``<stem>.<companion>.csv``  extra datasets (the OU spectrum), same format.

On failure a JSON error record is printed to stderr (and written to
``<out>.error.json``) and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import PRESETS, EnsembleResult, build_experiment, run_ensemble
from .propagate import TrajectoryError

_TWO_PI_KHZ = re.compile(r"^\s*2\s*pi\s*\*\s*([-+0-9.eE]+)\s*$")


def parse_value(text: str):
    """Scalar or comma list; ``2pi*<kHz>`` becomes rad/s; booleans and ints as such."""
    text = text.strip()
    if "," in text:
        return tuple(parse_value(t) for t in text.split(",") if t.strip())
    m = _TWO_PI_KHZ.match(text)
    if m:
        return 2.0 * math.pi * 1e3 * float(m.group(1))
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_config(path) -> dict:
    """Override mapping from an INI file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ValueError(f"cannot read config {path!s}: {exc}") from exc
    out: dict = {}
    for section in cp.sections():
        vals = {k: parse_value(v) for k, v in cp[section].items()}
        if section == "run":
            out.update(vals)
        elif section in ("noise", "targets", "options"):
            out[section] = vals
        else:
            raise ValueError(f"unknown config section [{section}]")
    return out


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(result: EnsembleResult, path) -> None:
    """Write ``result`` to ``path`` plus its ``.meta.json`` sidecar."""
    path = Path(path)
    header = [result.grid_label]
    for name in result.observables:
        header += [f"mean_{name}", f"stderr_{name}"]
    lines = [",".join(header)]
    for i, g in enumerate(result.grid):
        row = [_fmt17(g)]
        for name in result.observables:
            row += [_fmt17(result.mean[name][i]), _fmt17(result.stderr[name][i])]
        lines.append(",".join(row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "name": result.name,
        "code_version": __version__,
        "grid": result.grid_label,
        "observables": result.observables,
        "n_trajectories": result.n_trajectories,
        "master_seed": result.master_seed,
        "trajectory_seeds": [int(s) for s in result.trajectory_seeds],
        "metadata": result.metadata,
        "companions": sorted(result.companions),
    }
    with open(str(path) + ".meta.json", "w", newline="\n") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")
    for key, comp in result.companions.items():
        write_csv(comp, path.with_name(f"{path.stem}.{key}{path.suffix or '.csv'}"))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    return str(obj)


def read_csv(path) -> tuple[str, np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Inverse of :func:`write_csv` (grid label, grid, means, stderrs)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
    data = np.array(rows).reshape(len(rows), len(header))
    means, errs = {}, {}
    for j, col in enumerate(header[1:], start=1):
        if col.startswith("mean_"):
            means[col[5:]] = data[:, j]
        elif col.startswith("stderr_"):
            errs[col[7:]] = data[:, j]
    return header[0], data[:, 0], means, errs


# --- validate -------------------------------------------------------------------------

def _check_ou():
    from .noise import OUParams, analytic_moments, ou_chains
    p = OUParams(50e-6, 1.5e11)
    paths = ou_chains(p, 1e-6, 100, 4000, 3)
    _, var = analytic_moments(np.array([100e-6]), p)
    rel = abs(paths[:, -1].var(ddof=1) / var[0] - 1)
    return rel < 0.08, f"OU variance at 2 tau within {rel:.3f} of analytic"


def _check_T2():
    from .noise import OUParams, analytic_coherence, diffusion_from_T2
    c = diffusion_from_T2(50e-6, 3e-3)
    v = analytic_coherence(np.array([3e-3]), OUParams(50e-6, c))[0]
    return abs(v - math.exp(-1)) < 1e-12, f"coherence at T2 = {v:.15f}"


def _check_operators():
    from .fock import build_operator_set, displacement_matrix
    ops = build_operator_set(12)
    a = ops.mode_a
    comm = a @ a.conj().T - a.conj().T @ a
    ok = np.allclose(np.diag(comm)[:-1], 1.0)
    D = displacement_matrix(0.4, 12)
    ok &= np.allclose(D.conj().T @ D, np.eye(12), atol=1e-12)
    return bool(ok), "ladder commutator and displacement unitarity"


def _check_kernel():
    from .fock import build_operator_set, product_state
    from .hamiltonian import NoiseModel, build_layer_hamiltonian, params_from_targets
    from .noise import OUParams
    from .propagate import IntegrationPlan, default_dt, evolve, evolve_layer_ensemble
    from .seeding import channel_rng
    N = 9
    ops = build_operator_set(N)
    worst = 0.0
    nm = NoiseModel(OUParams(50e-6, 1e14), OUParams(1e-3, 2 * 0.3 ** 2 / 1e-3))
    for layer in (0, 1, 2):
        cfg, _ = params_from_targets("rabi", layer, {"R": 1, "g": 0.25, "omega_mode": 2 * math.pi * 5e3}, noise=nm)
        psi0 = product_state("up_x", N)
        plan = IntegrationPlan(default_dt(), 200 * default_dt(), 200)
        _, v = evolve_layer_ensemble(cfg, ops, psi0, plan, [11],
                                     lambda p, t: np.concatenate([p.real, p.imag], 1))
        fast = v[0, -1, :2 * N] + 1j * v[0, -1, 2 * N:]
        noise = {name: (p, channel_rng(11, c)) for c, (name, p) in enumerate(cfg.channels)}
        ref = evolve(psi0, lambda t, s: build_layer_hamiltonian(t, cfg, s, ops), plan, noise)
        worst = max(worst, float(np.max(np.abs(fast - ref.final_state))))
    return worst < 1e-9, f"structured kernel vs dense stepping: max deviation {worst:.2e}"


def _check_determinism():
    spec = build_experiment("rabi", {"n_trajectories": 4, "t_final": 40e-6, "record_interval": 20e-6,
                                     "layers": (1,), "n_fock": 8, "initial_states": ("up_tls",)})
    a = run_ensemble(spec, workers=1)
    b = run_ensemble(spec, workers=2)
    same = all(np.array_equal(a.mean[k], b.mean[k]) and np.array_equal(a.stderr[k], b.stderr[k])
               for k in a.observables)
    return same, "ensemble identical for 1 and 2 workers"


def _check_readout():
    from .fock import build_operator_set, coherent_state
    from .observables import ancilla_position_readout, expectation
    ops = build_operator_set(40)
    psi = np.kron([1.0, 0.0], coherent_state(0.5, 40))
    est = ancilla_position_readout(psi, 2 * math.pi * 1e3, ops=ops)
    ref = expectation(psi, ops.x)
    return abs(est / ref - 1) < 0.02, f"ancilla readout {est:.6f} vs <x> = {ref:.6f}"


def validate() -> int:
    """Quick invariant suite; returns the number of failed checks."""
    fails = 0
    for check in (_check_ou, _check_T2, _check_operators, _check_kernel, _check_determinism, _check_readout):
        try:
            ok, msg = check()
        except Exception as exc:  # report, keep going
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        fails += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {check.__name__[7:]:<12} {msg}")
    return fails


# --- main -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rabi-ccd", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PRESETS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [run]/[noise]/[targets]/[options] sections")
        p.add_argument("--out", help="output CSV path (default <preset>.csv)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--trajectories", type=int)
        p.add_argument("--workers", type=int, help="worker processes (default $RABI_CCD_WORKERS or 1)")
        p.add_argument("--dt", type=float, help="time step in seconds")
        p.add_argument("--fock", type=int, help="Fock cutoff N")
        p.add_argument("--noiseless", action="store_true", help="zero every noise channel")
        p.add_argument("--layer", type=int, choices=(0, 1, 2), help="run a single protection layer")
        p.add_argument("--tau", type=float, help="dephasing correlation time (s) for the qubit presets")
    sub.add_parser("validate", help="run the invariant suite")
    return ap


def resolve_overrides(args) -> tuple[dict, str | None, int | None]:
    over = read_config(args.config) if args.config else {}
    out = over.pop("out", None)
    workers = over.pop("workers", None)
    flags = {"master_seed": args.seed, "n_trajectories": args.trajectories, "dt": args.dt,
             "n_fock": args.fock, "layer": args.layer, "tau": args.tau}
    if "seed" in over:
        over["master_seed"] = over.pop("seed")
    if "trajectories" in over:
        over["n_trajectories"] = over.pop("trajectories")
    if "fock" in over:
        over["n_fock"] = over.pop("fock")
    for k, v in flags.items():
        if v is not None:
            over[k] = v
    if args.noiseless:
        over["noiseless"] = True
    return over, args.out or out, args.workers if args.workers is not None else workers


def _error_record(exc: BaseException, command: str) -> dict:
    rec = {"status": "error", "command": command, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, TrajectoryError):
        rec["trajectory"] = exc.index
        rec["seed"] = exc.seed
    return rec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return 1 if validate() else 0
    out = args.out
    try:
        overrides, out, workers = resolve_overrides(args)
        spec = build_experiment(args.command, overrides)
        out = out or f"{args.command}.csv"
        t0 = time.perf_counter()
        result = run_ensemble(spec, workers=workers)
        write_csv(result, out)
        print(f"{args.command}: {result.n_trajectories} trajectories, {len(result.grid)} rows -> {out} "
              f"({time.perf_counter() - t0:.1f} s)", file=sys.stderr)
        return 0
    except Exception as exc:
        rec = _error_record(exc, args.command)
        print(json.dumps(rec), file=sys.stderr)
        if out:
            try:
                with open(str(out) + ".error.json", "w", newline="\n") as fh:
                    json.dump(rec, fh)
                    fh.write("\n")
            except OSError:
                pass
        return 1


if __name__ == "__main__":
    sys.exit(main())

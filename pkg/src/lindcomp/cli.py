"""Batch front-end: simulate / resources / validate subcommands.

Configs are INI files; every key can also come from a preset plus command
line overrides.  Example::

    [problem]
    preset = amplitude-damping
    gamma = 1.5

    [run]
    T = 1.0
    epsilon = 0.02
    delta = 0.05
    seed = 7

    [output]
    path = out.csv
    with_exact = true

``simulate`` writes the trajectory CSV (``time,estimate,stderr`` plus
``exact,abs_error`` when requested) and a JSON report next to it.  Exit
codes: 2 for config errors, 3 for an infeasible plan.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import asdict

import numpy as np

from .compensation import build_dissipative_coefficients, build_M
from .engine import DensityState
from .estimator import PlanInfeasible, SimPlan, StepKernel, plan, run_time_dependent, run_time_independent
from .lcs import from_chi
from .oracle import exact_propagate, rk4_propagate, superop_distance
from .pauli import PauliSum, parse_pauli_text
from .presets import load_preset
from .resources import precision_table
from .superop import LindbladSpec, chi_of_hamiltonian, to_dense_superop
from scipy.linalg import expm


class ConfigError(Exception):
    pass


_PRESET_KEYS = {
    "amplitude-damping": {"gamma": float},
    "tfi": {"n": int, "coupling": float, "field": float, "gamma": float},
    "driven-qubit": {"gamma": float, "h_base": float, "h_mod": float},
}


def _load_problem(cfg: configparser.ConfigParser, preset_override: str | None):
    section = cfg["problem"] if cfg.has_section("problem") else {}
    preset = preset_override or section.get("preset")
    if preset:
        kwargs = {}
        for key, cast in _PRESET_KEYS.get(preset, {}).items():
            if key in section:
                kwargs[key] = cast(section[key])
        return load_preset(preset, **kwargs)
    if "hamiltonian" not in section:
        raise ConfigError("config needs either a preset or an inline hamiltonian")
    n = int(section["n"]) if "n" in section else None
    h = parse_pauli_text(section["hamiltonian"], n=n)
    jumps = []
    for key in sorted(section):
        if key.startswith("jump"):
            jumps.append(parse_pauli_text(section[key], n=h.n))
    spec = LindbladSpec(h.n, h, jumps)
    obs_text = section.get("observable", "")
    if obs_text.startswith("projector:"):
        bits = obs_text.split(":", 1)[1].strip()
        obs = np.zeros((1 << h.n, 1 << h.n), dtype=complex)
        obs[int(bits, 2), int(bits, 2)] = 1.0
    elif obs_text:
        obs = parse_pauli_text(obs_text, n=h.n)
    else:
        raise ConfigError("inline problems need an observable")
    init = section.get("initial", "0" * h.n)
    if init.endswith(".npy"):
        rho0 = DensityState.from_matrix(np.load(init))
    else:
        rho0 = DensityState.from_bitstring(init)
    return spec, obs, rho0


def _read_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path:
        read = cfg.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
    return cfg


def _run_settings(cfg: configparser.ConfigParser, args) -> dict:
    section = cfg["run"] if cfg.has_section("run") else {}
    out = {
        "T": float(section.get("T", 1.0)),
        "epsilon": float(section.get("epsilon", 0.05)),
        "delta": float(section.get("delta", 0.05)),
        "mode": section.get("mode", "trotter"),
        "seed": int(section.get("seed", 0)),
        "tau": float(section["tau"]) if "tau" in section else None,
        "K": int(section["order"]) if "order" in section else None,
        "rounds": int(section["rounds"]) if "rounds" in section else None,
    }
    if args.seed is not None:
        out["seed"] = args.seed
    if args.rounds is not None:
        out["rounds"] = args.rounds
    if args.order is not None:
        out["K"] = args.order
    if args.tau is not None:
        out["tau"] = args.tau
    return out


def _cmd_simulate(args) -> int:
    cfg = _read_config(args.config)
    spec, obs, rho0 = _load_problem(cfg, args.preset)
    rs = _run_settings(cfg, args)
    sim_plan = plan(
        spec,
        rs["T"],
        rs["epsilon"],
        rs["delta"],
        mode=rs["mode"],
        seed=rs["seed"],
        tau=rs["tau"],
        K=rs["K"],
        rounds=rs["rounds"],
    )
    runner = run_time_dependent if spec.is_time_dependent() else run_time_independent
    report = runner(spec, obs, rho0, sim_plan)

    out_section = cfg["output"] if cfg.has_section("output") else None
    out_path = args.out or (out_section.get("path", "trajectory.csv") if out_section else "trajectory.csv")
    with_exact = args.with_exact or bool(
        out_section is not None and out_section.getboolean("with_exact", fallback=False)
    )

    exact_vals = None
    if with_exact:
        times = [t for t, _, _ in report.trajectory]
        obs_mat = obs.dense() if isinstance(obs, PauliSum) else obs
        if spec.is_time_dependent():
            exact_vals = rk4_propagate(spec, rho0.mat, obs_mat, times, h=1e-3).expectations
        else:
            exact_vals = exact_propagate(spec, rho0.mat, obs_mat, times).expectations

    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["time", "estimate", "stderr"]
        if exact_vals is not None:
            header += ["exact", "abs_error"]
        w.writerow(header)
        for i, (t, est, err) in enumerate(report.trajectory):
            row = [f"{t:.12g}", f"{est:.12g}", f"{err:.12g}"]
            if exact_vals is not None:
                row += [f"{exact_vals[i]:.12g}", f"{abs(est - exact_vals[i]):.12g}"]
            w.writerow(row)

    json_path = out_path.rsplit(".", 1)[0] + ".json"
    payload = {
        "mean": report.mean,
        "stderr": report.stderr,
        "mu_total": report.mu_total,
        "bias_budget": report.bias_budget,
        "rounds": report.rounds,
        "wall_time": report.wall_time,
        "plan": asdict(sim_plan),
    }
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(f"estimate {report.mean:.6g} +- {report.stderr:.2g} "
          f"(mu={report.mu_total:.4g}, bias budget {report.bias_budget:.2g})")
    print(f"wrote {out_path} and {json_path}")
    return 0


def _cmd_resources(args) -> int:
    cfg = _read_config(args.config)
    spec, _, _ = _load_problem(cfg, args.preset)
    section = cfg["run"] if cfg.has_section("run") else {}
    T = float(section.get("T", 1.0))
    if args.epsilons is not None:
        grid = [float(x) for x in args.epsilons.split(",") if x.strip()]
    elif "epsilons" in section:
        grid = [float(x) for x in section["epsilons"].split(",") if x.strip()]
    else:
        grid = [10.0**-k for k in range(1, 7)]
    rows = precision_table(spec, T, grid)
    out_path = args.out or "resources.csv"
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "method", "steps", "K", "rz_total", "cnot_total"])
        for row in rows:
            w.writerow([f"{row[0]:.6g}", row[1], row[2], row[3], row[4], row[5]])
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def _cmd_validate(_args) -> int:
    checks: list[tuple[str, bool, str]] = []
    coeffs = build_dissipative_coefficients(8)

    golden = (1.0, 0.0, 1.5833, 2.0472)
    norms = tuple(coeffs.a_norm(k) for k in range(4))
    ok = all(abs(n - g) <= 5e-5 * max(1.0, g) for n, g in zip(norms, golden))
    checks.append(("coefficient 1-norms (1, 0, 1.5833, 2.0472)",
                   ok, " ".join(f"{v:.6g}" for v in norms)))

    geo = all(
        coeffs.a_norm(k) <= 2.6 ** (k - 2) * coeffs.a_norm(2) * (1 + 1e-12)
        for k in range(3, 9)
    )
    checks.append(("geometric growth bound up to order 8", geo, "lambda=2.6"))

    conv = max(coeffs.convolution_residual(k) for k in range(9))
    checks.append(("series convolution identity", conv < 1e-12, f"max residual {conv:.2e}"))

    from .presets import amplitude_damping_preset

    spec, _, _ = amplitude_damping_preset(1.5)
    x = 2.0 * spec.chi_generator_at(0.0).one_norm() * 0.05
    m_f = build_M(spec, 0.05, 6)
    closed = 1.0 + sum(x**k / math.factorial(k) for k in range(2, 7))
    checks.append(
        ("splitting-series 1-norm closed form", abs(m_f.mu - closed) < 1e-10,
         f"mu={m_f.mu:.8f}")
    )

    h = PauliSum.from_terms([("X", 0.3), ("Z", 0.4)])
    chi = chi_of_hamiltonian(h)
    recon = from_chi(chi).to_dense()
    err = float(np.max(np.abs(recon - to_dense_superop(chi))))
    checks.append(("conjugate-basis reconstruction", err < 1e-10, f"max err {err:.2e}"))

    coeffs2 = build_dissipative_coefficients(4)
    target = expm(0.05 * to_dense_superop(spec.chi_generator_at(0.0)))
    errs = []
    for K in range(1, 5):
        kern = StepKernel(spec.hamiltonian, spec.jumps, 0.05, K, "exact", coeffs2)
        errs.append(superop_distance(kern.to_dense_superop(), target))
    mono = all(errs[i + 1] <= errs[i] * (1 + 1e-9) + 1e-15 for i in range(len(errs) - 1))
    checks.append(
        ("compensated-step error decreases with order", mono,
         " ".join(f"{e:.2e}" for e in errs))
    )

    width = max(len(name) for name, _, _ in checks)
    all_ok = True
    for name, ok, detail in checks:
        status = "pass" if ok else "FAIL"
        all_ok &= ok
        print(f"{name:<{width}}  {status}  {detail}")
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lindcomp", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", _cmd_simulate), ("resources", _cmd_resources)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None)
        sp.add_argument("--preset", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--rounds", type=int, default=None)
        sp.add_argument("--order", type=int, default=None)
        sp.add_argument("--tau", type=float, default=None)
        sp.add_argument("--with-exact", action="store_true")
        sp.add_argument("--out", default=None)
        sp.add_argument("--epsilons", default=None)
        sp.set_defaults(fn=fn)
    sv = sub.add_parser("validate")
    sv.set_defaults(fn=_cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PlanInfeasible as exc:
        print(f"plan infeasible: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

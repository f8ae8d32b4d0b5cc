"""Command-line front end.

Subcommands map onto the library layers: ``master`` and ``bipartite``
integrate the two routes and export trajectories, ``waiting`` and
``trajectories`` drive the jump unravelling, ``backflow`` runs the
relative-entropy witness, and ``verify`` executes the cross-route
consistency suite and exits nonzero on any failure.

Configuration is a flat ``key = value`` text file plus command-line
flags; flags win.  All CSV output uses 15 significant digits, '.'
decimals and '\\n' line endings, with a header row naming columns and
units (times in 1/gamma, rates in gamma).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import embedding as emb
from . import environment as env
from . import fluorescence as fl
from . import jumps, master, witness
from . import operators as ops
from .errors import PostMarkovError, UsageError

_NUMBER_FIELDS = {
    "omega": float, "gamma": float, "phi": float, "varphi": float,
    "dt": float, "t_max": float, "out_dt": float, "epsilon": float,
    "case": int, "n_traj": int, "seed": int, "workers": int,
}


@dataclass
class RunConfig:
    """Validated settings of one run."""

    command: str
    case: int = 1
    preset: str | None = None
    omega: float | None = None
    gamma: float = 1.0
    phi: float | None = None
    varphi: float | None = None
    dt: float = 1e-2
    t_max: float = 100.0
    out_dt: float | None = None
    n_traj: int = 1
    seed: int = 0
    workers: int = 1
    epsilon: float = witness.DEFAULT_REVIVAL_EPS
    out: str | None = None
    kernel_out: str | None = None

    def validate(self):
        if self.dt <= 0:
            raise UsageError(f"dt must be positive, got {self.dt}", field="dt")
        if self.t_max < self.dt:
            raise UsageError(
                f"t_max must be at least dt, got {self.t_max}", field="t_max"
            )
        if self.n_traj < 1:
            raise UsageError(
                f"n_traj must be at least 1, got {self.n_traj}", field="n_traj"
            )
        if self.case not in (1, 2):
            raise UsageError(f"case must be 1 or 2, got {self.case}", field="case")
        if self.workers < 1:
            raise UsageError(
                f"workers must be at least 1, got {self.workers}", field="workers"
            )
        return self

    def params(self):
        """Resolve the scenario parameters (preset plus overrides)."""
        if self.preset is not None:
            base = fl.preset(self.preset, case=self.case)
        else:
            missing = [k for k in ("omega", "phi", "varphi")
                       if getattr(self, k) is None]
            if missing:
                raise UsageError(
                    f"no preset given and missing {', '.join(missing)}",
                    field=missing[0],
                )
            base = fl.FluorescenceParams(
                omega=self.omega, gamma=self.gamma, phi=self.phi,
                varphi=self.varphi, case=emb.Case(self.case),
            )
        overrides = {
            k: getattr(self, k) for k in ("omega", "gamma", "phi", "varphi")
            if getattr(self, k) is not None
        }
        if self.preset is not None and overrides:
            from dataclasses import replace
            base = replace(base, **overrides)
        return base


def read_config_file(path):
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(
                    f"{path}:{lineno}: expected 'key = value', got {raw!r}"
                )
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key in _NUMBER_FIELDS:
                try:
                    values[key] = _NUMBER_FIELDS[key](value)
                except ValueError:
                    raise UsageError(
                        f"{path}:{lineno}: bad value for {key}: {value!r}",
                        field=key,
                    ) from None
            else:
                values[key] = value
    return values


def format_number(x):
    return f"{x:.15g}"


def write_csv(path, header, columns):
    """Write columns with 15-significant-digit decimals and \\n endings."""
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(format_number(x) for x in row) + "\n")


def output_path(cfg, default_name):
    if cfg.out:
        return cfg.out
    out_dir = os.environ.get("POSTMARKOV_OUTDIR", ".")
    return os.path.join(out_dir, default_name)


def _time_grid(cfg):
    n = int(round(cfg.t_max / cfg.dt))
    return cfg.dt * np.arange(n + 1)


def _solve_master(cfg, model):
    grid = _time_grid(cfg)
    kernel = env.memory_kernel(model.rates, cfg.dt, cfg.t_max)
    states = master.integrate_case(
        cfg.case, model.system_generator, model.system_dissipator(),
        kernel, fl.PRESET_INITIAL_STATE, grid,
    )
    return grid, states


def _state_columns(grid, states):
    min_eigs = np.linalg.eigvalsh(states).min(axis=1)
    return (
        ["t (1/gamma)", "rho_pp_re (dimensionless)", "rho_pm_re (dimensionless)",
         "rho_pm_im (dimensionless)", "trace (dimensionless)",
         "min_eigenvalue (dimensionless)"],
        [grid, states[:, 0, 0].real, states[:, 0, 1].real,
         states[:, 0, 1].imag, np.einsum("nii->n", states).real, min_eigs],
    )


def cmd_master(cfg):
    model = fl.build_model(cfg.params())
    grid, states = _solve_master(cfg, model)
    header, cols = _state_columns(grid, states)
    path = output_path(cfg, f"master_case{cfg.case}.csv")
    write_csv(path, header, cols)
    print(f"wrote {path} ({len(grid)} rows)")
    if cfg.kernel_out:
        kernel = env.memory_kernel(model.rates, cfg.dt, cfg.t_max)
        write_csv(
            cfg.kernel_out, ["t (1/gamma)", "k (gamma)"],
            [kernel.grid, kernel.values],
        )
        print(f"wrote {cfg.kernel_out} ({len(kernel.values)} rows)")
    return 0


def cmd_bipartite(cfg):
    model = fl.build_model(cfg.params())
    grid = _time_grid(cfg)
    snaps = emb.evolve_bipartite(model, fl.PRESET_INITIAL_STATE, grid)
    reduced = ops.partial_trace(snaps, (model.d_s, model.d_a), keep=0)
    pops = np.stack(
        [emb.ancilla_populations(s, model.d_s, model.d_a) for s in snaps]
    )
    header, cols = _state_columns(grid, reduced)
    header += [f"p{i} (prob)" for i in range(model.d_a)]
    cols += [pops[:, i] for i in range(model.d_a)]
    path = output_path(cfg, f"bipartite_case{cfg.case}.csv")
    write_csv(path, header, cols)
    print(f"wrote {path} ({len(grid)} rows)")
    return 0


def cmd_waiting(cfg):
    model = fl.build_model(cfg.params())
    proc = jumps.prepare_jump_process(
        model, fl.PRESET_INITIAL_STATE, cfg.dt, cfg.t_max
    )
    w = proc.waiting
    path = output_path(cfg, f"waiting_case{cfg.case}.csv")
    write_csv(
        path,
        ["t (1/gamma)", "P0 (prob)", "w (gamma)", "P0_in (prob)",
         "w_in (gamma)"],
        [w.grid, w.survival, w.density, w.survival_in, w.density_in],
    )
    print(f"wrote {path} ({len(w.survival)} rows)")
    return 0


def cmd_trajectories(cfg):
    model = fl.build_model(cfg.params())
    proc = jumps.prepare_jump_process(
        model, fl.PRESET_INITIAL_STATE, cfg.dt, cfg.t_max
    )
    out_dt = cfg.out_dt if cfg.out_dt is not None else cfg.dt
    t_out = out_dt * np.arange(int(round(cfg.t_max / out_dt)) + 1)
    if cfg.n_traj == 1:
        rec = jumps.sample_trajectory(proc, t_out, (cfg.seed, 0))
        path = output_path(cfg, f"trajectory_case{cfg.case}.csv")
        write_csv(
            path,
            ["t (1/gamma)", "rho_pp_re (dimensionless)", "jumps (count)"],
            [t_out, rec.states[:, 0, 0].real, rec.jump_counts()],
        )
        print(f"wrote {path} ({rec.jump_times.size} detections)")
        return 0
    average = jumps.run_ensemble(
        proc, cfg.n_traj, cfg.seed, t_out, workers=cfg.workers
    )
    path = output_path(cfg, f"ensemble_case{cfg.case}.csv")
    pop, sem = average.real_entry(0, 0)
    write_csv(
        path,
        ["t (1/gamma)", "rho_pp_re_mean (dimensionless)",
         "rho_pp_re_sem (dimensionless)"],
        [t_out, pop, sem],
    )
    print(f"wrote {path} ({cfg.n_traj} trajectories)")
    return 0


def cmd_backflow(cfg):
    model = fl.build_model(cfg.params())
    grid, states = _solve_master(cfg, model)
    stationary = master.stationary_state(model)
    series = witness.entropy_series(grid, states, stationary)
    pairs = witness.detect_backflow(series, epsilon=cfg.epsilon)
    path = output_path(cfg, f"entropy_case{cfg.case}.csv")
    write_csv(path, ["t (1/gamma)", "E (bits)"], [series.t, series.values])
    print(f"wrote {path}")
    amps = witness.revival_amplitudes(series, pairs)
    if pairs:
        print(f"backflow: {len(pairs)} revival(s) above {cfg.epsilon} bits")
        for (t1, t2), amp in zip(pairs, amps):
            print(
                f"  revival t1={format_number(t1)} t2={format_number(t2)} "
                f"rise={format_number(amp)} bits"
            )
    else:
        print(f"backflow: none above {cfg.epsilon} bits")
    return 0


def cmd_verify(cfg):
    """Cross-route consistency suite; nonzero exit on any failure."""
    checks = []
    model = fl.build_model(cfg.params())
    grid = _time_grid(cfg)
    kernel = env.memory_kernel(model.rates, cfg.dt, cfg.t_max)

    kernel2 = env.delta_kernel(model.rates, cfg.dt, cfg.t_max)
    n = min(len(kernel.values), len(kernel2.values))
    dev = float(np.max(np.abs(kernel2.values[:n] + kernel.values[:n])))
    checks.append(("kernel identity (case-2 regular = -case-1)", dev, 1e-12))

    gen = emb.total_generator(model)
    dev = float(np.max(np.abs(ops.trace_dual(model.d_s * model.d_a) @ gen)))
    checks.append(("bipartite generator trace preservation", dev, 1e-12))

    states = master.integrate_case(
        cfg.case, model.system_generator, model.system_dissipator(),
        kernel, fl.PRESET_INITIAL_STATE, grid,
    )
    snaps = emb.evolve_bipartite(model, fl.PRESET_INITIAL_STATE, grid)
    reduced = ops.partial_trace(snaps, (model.d_s, model.d_a), keep=0)
    dev = ops.max_abs_diff(states, reduced)
    checks.append(("master vs bipartite trace-out (max deviation)", dev, 1e-6))

    trace_dev = float(np.max(np.abs(np.einsum("nii->n", states) - 1.0)))
    checks.append(("master trace preservation", trace_dev, 1e-8))
    min_eig = float(np.linalg.eigvalsh(states).min())
    checks.append(("master positivity (negative part)", max(-min_eig, 0.0), 1e-8))

    spec = jumps.renewal_spec(model.channels)
    split_dev = ops.max_abs_diff(
        jumps.jump_superop(spec) + jumps.drain_superop(spec),
        model.system_dissipator(),
    )
    checks.append(("jump/drain splitting of the dissipator", split_dev, 1e-12))
    verdict = jumps.check_closure(model.case, spec, model.d_a)
    checks.append(
        ("closure conditions", verdict.max_error if verdict.ok else 1.0, 1e-9)
    )
    reset = (
        "none" if verdict.ancilla_reset is None
        else "diag(" + ", ".join(
            format_number(x) for x in np.diag(verdict.ancilla_reset).real
        ) + ")"
    )
    print(
        f"closure verdict: case={int(verdict.case)} d_a={verdict.d_a} "
        f"ok={verdict.ok} bath_reset={reset} max_error={verdict.max_error:.3e}"
    )

    proc = jumps.prepare_jump_process(
        model, fl.PRESET_INITIAL_STATE, cfg.dt, min(cfg.t_max, 50.0)
    )
    w = proc.waiting
    mid = -np.diff(w.survival) / w.dt
    dev = float(np.max(np.abs(mid - 0.5 * (w.density[1:] + w.density[:-1]))))
    checks.append(("waiting density vs survival slope", dev, 10 * w.dt**2))
    norm = float(np.trapezoid(w.density, dx=w.dt))
    checks.append(("waiting density normalization", abs(norm - 1.0), 1e-3))

    failed = 0
    for name, value, bound in checks:
        ok = value <= bound
        failed += 0 if ok else 1
        status = "ok  " if ok else "FAIL"
        print(f"{status} {name}: {value:.3e} (tolerance {bound:.1e})")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


_COMMANDS = {
    "master": cmd_master,
    "bipartite": cmd_bipartite,
    "trajectories": cmd_trajectories,
    "waiting": cmd_waiting,
    "backflow": cmd_backflow,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="postmarkov",
        description="Memory-kernel master equations from a classically "
        "fluctuating environment: solvers, jump trajectories, witnesses.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("master", "integrate the memory-kernel master equation"),
        ("bipartite", "integrate the joint system-bath representation"),
        ("trajectories", "sample renewal jump trajectories / ensembles"),
        ("waiting", "tabulate waiting-time statistics"),
        ("backflow", "relative-entropy witness along the solution"),
        ("verify", "run the cross-route consistency suite"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value file; flags win")
        p.add_argument("--preset", help="named parameter set (fig2, fig3, fig4)")
        p.add_argument("--case", type=int, help="coupling case, 1 or 2")
        p.add_argument("--omega", type=float, help="drive amplitude (gamma)")
        p.add_argument("--gamma", type=float, help="decay rate (sets the unit)")
        p.add_argument("--phi", type=float, help="bath rate 0 -> 1 (gamma)")
        p.add_argument("--varphi", type=float, help="bath rate 1 -> 0 (gamma)")
        p.add_argument("--dt", type=float, help="integration step (1/gamma)")
        p.add_argument("--t-max", dest="t_max", type=float,
                       help="horizon (1/gamma)")
        p.add_argument("--out", help="output file (default under "
                       "$POSTMARKOV_OUTDIR)")
        if name == "master":
            p.add_argument("--kernel-out", dest="kernel_out",
                           help="also export the memory kernel as (t, k) CSV")
        if name == "trajectories":
            p.add_argument("--n-traj", dest="n_traj", type=int,
                           help="ensemble size")
            p.add_argument("--seed", type=int, help="master seed")
            p.add_argument("--workers", type=int,
                           help="parallel workers (same output for any count)")
            p.add_argument("--out-dt", dest="out_dt", type=float,
                           help="output grid step (1/gamma)")
        if name == "backflow":
            p.add_argument("--epsilon", type=float,
                           help="revival threshold (bits)")
    return parser


def build_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config",) or value is None:
            continue
        values[key] = value
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown setting {unknown[0]!r}", field=unknown[0])
    return RunConfig(**values).validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return _COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"error: {exc}{field}", file=sys.stderr)
        return 2
    except PostMarkovError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Config-driven experiment runner.

Configs are flat key = value text files with sections (INI style, parsed by
configparser); see README for the full key reference. Every scenario writes
a manifest echoing the resolved config, then its own CSV/JSON artifacts.
Same config + same seed gives byte-identical outputs.

Exit codes: 0 success, 1 scenario failure, 2 config parse/validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .dtn import DtnSample, bump_trace, dtn_apply, normal_derivative
from .forward_solver import solve_semilinear
from .geometry import Grid2D, arc_mask, interior_integral, make_grid
from .harmonic import arc_supported_family
from .linearization import mixed_divided_difference, run_cascade
from .potential import PotentialSeries, sample_expression
from .reconstruction import (ReconstructionConfig, measured_moment,
                             reconstruct_all, stages_to_json)

SCENARIOS = ("forward_convergence", "linearization_check", "identity_check",
             "reconstruction")

OUTPUT_DIR_ENV = "SEMIDTN_OUTPUT_DIR"


class ConfigError(ValueError):
    """Config file failed to parse or validate."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    output_dir: str
    seed: int
    n: int
    s0: float
    s1: float
    potential_exprs: dict[int, str]
    kmax: int
    eps: float
    family_size: int
    basis_per_side: int
    rows_factor: int
    lam: float | None
    noise_sigma: float
    extras: dict[str, str] = dc_field(default_factory=dict)

    def resolved(self) -> dict:
        out = {
            "scenario": self.scenario, "output_dir": self.output_dir,
            "seed": self.seed, "n": self.n, "arc_s0": self.s0, "arc_s1": self.s1,
            "potential": {str(k): v for k, v in sorted(self.potential_exprs.items())},
            "kmax": self.kmax, "eps": self.eps, "family_size": self.family_size,
            "basis_per_side": self.basis_per_side, "rows_factor": self.rows_factor,
            "lambda": self.lam, "noise_sigma": self.noise_sigma,
        }
        out.update({f"extra_{k}": v for k, v in sorted(self.extras.items())})
        return out


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment config; raises ConfigError."""
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")

    def get(section: str, key: str, default=None, cast=str):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return cast(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
        if default is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default

    scenario = get("experiment", "scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    output_dir = os.environ.get(OUTPUT_DIR_ENV) or get("experiment", "output_dir")
    seed = get("experiment", "seed", 0, int)

    n = get("grid", "n", 64, int)
    if not 8 <= n <= 256:
        raise ConfigError(f"grid n must be in [8, 256], got {n}")
    s0 = get("arc", "s0", 0.0, float)
    s1 = get("arc", "s1", 4.0, float)
    if not 0.0 <= s0 < 4.0 or not 0.0 < s1 - s0 <= 4.0:
        raise ConfigError(f"arc [{s0}, {s1}) invalid: need 0 <= s0 < 4, 0 < s1-s0 <= 4")

    exprs: dict[int, str] = {}
    if parser.has_section("potential"):
        for key, value in parser.items("potential"):
            if not key.startswith("k") or not key[1:].isdigit():
                raise ConfigError(f"[potential] keys look like k2, k3, ...; got {key!r}")
            order = int(key[1:])
            if order < 2:
                raise ConfigError("potential coefficients start at k2")
            exprs[order] = value

    kmax = get("reconstruction", "kmax", max(exprs) if exprs else 2, int)
    if scenario == "reconstruction" and not 2 <= kmax <= 4:
        raise ConfigError(f"reconstruction kmax must be in [2, 4], got {kmax}")
    eps = get("measurement", "eps", 1e-2, float)
    if not 0.0 < eps <= 0.05:
        raise ConfigError(f"eps must be in (0, 0.05], got {eps}")
    noise_sigma = get("measurement", "noise_sigma", 0.0, float)
    if noise_sigma < 0.0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")

    family_size = get("reconstruction", "family_size", 12, int)
    basis_per_side = get("reconstruction", "basis_per_side", 6, int)
    rows_factor = get("reconstruction", "rows_factor", 3, int)
    lam_raw = get("reconstruction", "lambda", "auto")
    try:
        lam = None if lam_raw in ("auto", "") else float(lam_raw)
    except ValueError as exc:
        raise ConfigError(f"lambda must be a number or 'auto', got {lam_raw!r}") from exc

    extras = dict(parser.items("extras")) if parser.has_section("extras") else {}
    return ExperimentConfig(scenario, output_dir, seed, n, s0, s1, exprs, kmax,
                            eps, family_size, basis_per_side, rows_factor, lam,
                            noise_sigma, extras)


def add_noise(trace: np.ndarray, sigma: float, rng: np.random.Generator | int) -> np.ndarray:
    """Additive Gaussian perturbation of scale sigma * max|trace|."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return trace.copy()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    scale = sigma * float(np.max(np.abs(trace)))
    return trace + rng.normal(0.0, scale, trace.shape) if scale > 0.0 else trace.copy()


def _truth_series(cfg: ExperimentConfig, grid: Grid2D) -> PotentialSeries:
    fields = {k: sample_expression(expr, grid) for k, expr in cfg.potential_exprs.items()}
    return PotentialSeries.from_coefficients(grid, fields) if fields \
        else PotentialSeries.zero(grid)


def _make_measure(cfg: ExperimentConfig, truth: PotentialSeries, mask, grid):
    """The opaque measurement map: simulator plus optional output noise."""
    rng = np.random.default_rng(cfg.seed + 10_000)

    def measure(trace: np.ndarray) -> DtnSample:
        sample = dtn_apply(truth, trace, mask, grid)
        if cfg.noise_sigma == 0.0:
            return sample
        noisy = add_noise(sample.output, cfg.noise_sigma, rng)
        noisy[~mask.flags] = 0.0
        return DtnSample(sample.f, noisy, sample.report)

    return measure


def _write_manifest(cfg: ExperimentConfig, out: Path) -> None:
    with open(out / "manifest.json", "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _field_csv(path: Path, grid: Grid2D, value: np.ndarray,
               truth: np.ndarray | None = None) -> None:
    x, y = grid.node_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"] + (["truth_value"] if truth is not None else []))
        for j in range(grid.num_nodes):
            row = [f"{x[j]:.12g}", f"{y[j]:.12g}", f"{value[j]:.17g}"]
            if truth is not None:
                row.append(f"{truth[j]:.17g}")
            writer.writerow(row)


def _scenario_forward_convergence(cfg: ExperimentConfig, out: Path) -> None:
    base = cfg.n
    sizes = [base, 2 * base, 4 * base]
    if sizes[-1] > 256:
        raise ConfigError("forward_convergence needs 4*n <= 256")
    amp = float(cfg.extras.get("bump_amplitude", "0.05"))
    # 0.3 of the arc keeps the bump shoulders resolved on the coarsest grid
    width = float(cfg.extras.get("bump_width", min(0.3 * (cfg.s1 - cfg.s0), 0.45)))
    solutions = {}
    for n in sizes:
        grid = make_grid(n)
        truth = _truth_series(cfg, grid)
        center = (cfg.s0 + cfg.s1) / 2.0
        f = bump_trace(grid, center % 4.0, width, amp)
        u, _ = solve_semilinear(truth, f, grid)
        solutions[n] = u
    errors = []
    for coarse, fine in zip(sizes[:-1], sizes[1:]):
        uc = solutions[coarse].reshape(coarse + 1, coarse + 1)
        uf = solutions[fine].reshape(fine + 1, fine + 1)
        ratio = fine // coarse
        err = float(np.max(np.abs(uc - uf[::ratio, ::ratio])))
        errors.append((coarse, fine, err))
    with open(out / "forward_convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coarse_n", "fine_n", "sup_error", "observed_order"])
        prev = None
        for coarse, fine, err in errors:
            order = "" if prev is None else f"{math.log2(prev / err):.6g}"
            writer.writerow([coarse, fine, f"{err:.12g}", order])
            prev = err


def _scenario_linearization_check(cfg: ExperimentConfig, out: Path) -> None:
    grid = make_grid(cfg.n)
    mask = arc_mask(grid, cfg.s0, cfg.s1)
    truth = _truth_series(cfg, grid)
    family = arc_supported_family(mask, max(cfg.kmax, 3), grid)
    summary = {}
    rows = []
    for m in range(2, min(cfg.kmax, 3) + 1):
        fs = [family[i].trace for i in range(m)]
        eps = cfg.eps if m == 2 else 2 * cfg.eps
        dd = mixed_divided_difference(truth, fs, eps, mask, grid)
        state = run_cascade(truth, fs, grid)
        flux = normal_derivative(state.field(range(m)), grid)
        flux[~mask.flags] = 0.0
        scale = float(np.max(np.abs(flux[mask.flags]))) or 1.0
        gap = float(np.max(np.abs((dd - flux)[mask.flags]))) / scale
        summary[f"m{m}_rel_sup_gap"] = gap
        for k in range(grid.num_boundary):
            rows.append([m, f"{grid.boundary_s[k]:.12g}", int(mask.flags[k]),
                         f"{dd[k]:.17g}", f"{flux[k]:.17g}"])
    with open(out / "linearization_check.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "s", "in_gamma", "divided_difference", "cascade_flux"])
        writer.writerows(rows)
    with open(out / "linearization_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _scenario_identity_check(cfg: ExperimentConfig, out: Path) -> None:
    grid = make_grid(cfg.n)
    mask = arc_mask(grid, cfg.s0, cfg.s1)
    truth = _truth_series(cfg, grid)
    measure = _make_measure(cfg, truth, mask, grid)
    family = arc_supported_family(mask, cfg.family_size, grid)
    n_tuples = int(cfg.extras.get("tuples", "20"))
    rng = np.random.default_rng(cfg.seed)
    rows = []
    max_gap = 0.0
    for m in range(2, min(cfg.kmax, 3) + 1):
        known = truth if m > 2 else None
        for t in range(n_tuples):
            idx = rng.integers(0, len(family), size=m + 1)
            members = [family[i] for i in idx]
            value = measured_moment(measure, members, cfg.eps, mask, grid, known)
            prod = truth.coefficient(m).copy()
            for mem in members:
                prod *= mem.field
            expected = interior_integral(prod, grid)
            gap = abs(value - expected)
            max_gap = max(max_gap, gap)
            rows.append([m, t, "-".join(str(i) for i in idx),
                         f"{value:.17g}", f"{expected:.17g}", f"{gap:.17g}"])
    with open(out / "identity_check.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "tuple_id", "members", "measured_moment",
                         "direct_integral", "abs_gap"])
        writer.writerows(rows)
    with open(out / "identity_summary.json", "w") as fh:
        json.dump({"max_abs_gap": max_gap, "tuples_per_order": n_tuples},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def _scenario_reconstruction(cfg: ExperimentConfig, out: Path) -> None:
    grid = make_grid(cfg.n)
    mask = arc_mask(grid, cfg.s0, cfg.s1)
    truth = _truth_series(cfg, grid)
    measure = _make_measure(cfg, truth, mask, grid)
    rconf = ReconstructionConfig(grid, mask, eps=cfg.eps, family_size=cfg.family_size,
                                 basis_per_side=cfg.basis_per_side,
                                 rows_factor=cfg.rows_factor, lam=cfg.lam,
                                 seed=cfg.seed)
    result = reconstruct_all(measure, cfg.kmax, rconf, truth=truth)
    stages_to_json(result.stages, out / "stages.json")
    for m in range(2, cfg.kmax + 1):
        _field_csv(out / f"coefficient_k{m}.csv", grid,
                   result.series.coefficient(m), truth.coefficient(m))


_SCENARIO_FUNCS = {
    "forward_convergence": _scenario_forward_convergence,
    "linearization_check": _scenario_linearization_check,
    "identity_check": _scenario_identity_check,
    "reconstruction": _scenario_reconstruction,
}


def run(config_path: str | Path) -> int:
    """Execute the configured scenario; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        grid = make_grid(cfg.n)  # validates n against the stencil minimum
        mask = arc_mask(grid, cfg.s0, cfg.s1)
        truth = _truth_series(cfg, grid)  # validates the expressions
        del grid, mask, truth
    except (ConfigError, ValueError) as exc:
        print(json.dumps({"error": str(exc), "phase": "validate"}), file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(cfg, out)
        _SCENARIO_FUNCS[cfg.scenario](cfg, out)
    except Exception as exc:
        print(json.dumps({"error": str(exc), "phase": "run",
                          "scenario": cfg.scenario}), file=sys.stderr)
        return 1
    return 0


def validate(config_path: str | Path) -> int:
    try:
        load_config(config_path)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "phase": "validate"}), file=sys.stderr)
        return 2
    print("ok")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="semidtn",
                                     description="semilinear boundary-measurement experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario from a config file")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a config file without running")
    p_val.add_argument("config")
    sub.add_parser("list-scenarios", help="print available scenario names")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config)
    if args.command == "validate":
        return validate(args.config)
    for name in SCENARIOS:
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())

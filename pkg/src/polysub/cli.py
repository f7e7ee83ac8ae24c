"""Experiment runner: seeded, reproducible studies as CLI subcommands.

Every subcommand writes a ``manifest.json`` (config echo, digest, version,
wall time) plus CSV/JSON result files into ``--out``.  Outputs are
deterministic functions of the config: replicas draw from streams derived
with the SplitMix64 finalizer, work units are fixed-size replica blocks,
and results merge in replica order, so ``--threads`` changes scheduling
only.  CSV floats use shortest round-trip formatting; running the same
config twice gives byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import limit_point_batch, regular_polygon_chain, run_batch
from .lyapunov import (
    estimate_flatness_rate,
    estimate_spectrum,
    expected_log_abs_det,
    log_det_divergence_scan,
)
from .rng import RngStream, derive_replica_seed
from .shapedist import (
    eta_histogram,
    ks_distance,
    phi_cdf_closed_form,
    phi_closed_form,
    phi_folded_cdf,
    rate_via_eq_speed,
    solve_invariant_density,
    zeta_mc_oracle,
    zeta_uniform_closed_form,
)
from .splits import SplitSpec, log_moment_diagnostics

__all__ = ["ExperimentConfig", "run_experiment", "main", "derive_replica_seed", "parse_spec_argument"]

SUBCOMMANDS = (
    "simulate",
    "lyapunov",
    "flatness-rate",
    "limit-point",
    "shape-dist",
    "invariant-density",
    "rate-identity",
    "diagnostics",
)


@dataclass
class ExperimentConfig:
    subcommand: str
    spec: SplitSpec
    d: int = 3
    n_steps: int = 1000
    replicas: int = 64
    grid_size: int = 201
    samples: int = 10**6
    master_seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path("out"))
    threads: int = 1
    record_every: int = 1

    def digest_fields(self) -> dict:
        """The semantic identity of the experiment (threads and output path
        affect scheduling/placement only, never results)."""
        return {
            "subcommand": self.subcommand,
            "spec": self.spec.to_config(),
            "d": self.d,
            "n_steps": self.n_steps,
            "replicas": self.replicas,
            "grid_size": self.grid_size,
            "samples": self.samples,
            "master_seed": self.master_seed,
            "record_every": self.record_every,
        }

    def digest(self) -> str:
        blob = json.dumps(self.digest_fields(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# spec fragment parsing


def _parse_atoms(text: str, d: int):
    atoms = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        vec_text, _, prob_text = part.partition(":")
        vec = tuple(float(v) for v in vec_text.replace(",", " ").split())
        atoms.append((vec, float(prob_text)))
    return SplitSpec.joint_table(atoms, d)


def parse_spec_argument(arg: str, d: int) -> SplitSpec:
    """Parse ``--spec``: inline "kind=beta,alpha=3,beta=3" or a file of
    KEY = VALUE lines (one per line, # comments, optional [spec] header).
    joint_table atoms use "v1 v2 v3:p; v1 v2 v3:p"."""
    path = Path(arg)
    pairs: dict[str, str] = {}
    if path.exists() and path.is_file():
        for line in path.read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
    else:
        if "=" not in arg:
            raise ValueError(f"--spec {arg!r}: not a file and not inline key=value pairs")
        for item in arg.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key in ("alpha", "beta", "a", "b", "p", "delta", "kind", "atoms", "d"):
                pairs[key] = value.strip()
            else:
                raise ValueError(f"unknown spec key {key!r}")
    kind = pairs.pop("kind", None)
    if kind is None:
        raise ValueError("spec fragment needs kind=...")
    if kind == "joint_table":
        return _parse_atoms(pairs["atoms"], int(pairs.get("d", d)))
    frag = {"kind": kind}
    for key, value in pairs.items():
        frag[key] = float(value) if key != "d" else int(value)
    return SplitSpec.from_config(frag)


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_simulate(cfg: ExperimentConfig, out: Path) -> list[str]:
    rng = RngStream(cfg.master_seed)
    batch = run_batch(cfg.spec, cfg.d, cfg.n_steps, cfg.replicas, rng, record_every=cfg.record_every)
    rows = []
    for r in range(cfg.replicas):
        for k, step in enumerate(batch.steps):
            flat = math.exp(batch.log_flatness[r, k]) if batch.log_flatness[r, k] > -745 else 0.0
            g = batch.g[r, k] if batch.g is not None else ""
            h = batch.h[r, k] if batch.h is not None else ""
            rows.append([r, int(step), batch.log_M[r, k], flat, batch.delta_xy[r, k], g, h])
    _write_csv(out / "trajectory.csv", ["replica", "step", "log_M", "flatness", "delta_xy", "g", "h"], rows)

    # edge-chain dump of one short replica, for the chain CSV interface
    from .dynamics import subdivide_step
    from .splits import sample_vector

    chain = regular_polygon_chain(cfg.d)
    chain_rows = [chain.csv_row(0)]
    chain_rng = RngStream(derive_replica_seed(cfg.master_seed, 0))
    for step in range(1, min(cfg.n_steps, 50) + 1):
        chain = subdivide_step(chain, sample_vector(cfg.spec, cfg.d, chain_rng))
        chain_rows.append(chain.csv_row(step))
    header = ["step"] + [f"x_{j+1}" for j in range(cfg.d)] + [f"y_{j+1}" for j in range(cfg.d)] + ["log_scale"]
    _write_csv(out / "chain.csv", header, chain_rows)
    return ["trajectory.csv", "chain.csv"]


def _cmd_lyapunov(cfg: ExperimentConfig, out: Path) -> list[str]:
    sp = estimate_spectrum(
        cfg.spec, cfg.d, cfg.n_steps, cfg.replicas, RngStream(cfg.master_seed), threads=cfg.threads
    )
    report = {
        "d": cfg.d,
        "spec_digest": cfg.digest(),
        "n_steps": sp.n_steps,
        "replicas": sp.replicas,
        "mu": [float(v) for v in sp.mu],
        "se": [float(v) for v in sp.se],
        "log_det_mean": sp.log_det_mean,
        "log_det_se": sp.log_det_se,
        "sum_check_z_score": sp.sum_check_z,
        "rejected_steps": sp.rejected_steps,
    }
    _write_json(out / "spectrum.json", report)
    row = (
        [cfg.d, cfg.digest(), sp.n_steps, sp.replicas]
        + [float(v) for v in sp.mu]
        + [float(v) for v in sp.se]
        + [sp.log_det_mean, sp.sum_check_z]
    )
    header = (
        ["d", "spec_digest", "n_steps", "replicas"]
        + [f"mu_{j+1}" for j in range(cfg.d - 1)]
        + [f"se_{j+1}" for j in range(cfg.d - 1)]
        + ["log_det_mean", "sum_check_z"]
    )
    _write_csv(out / "spectrum.csv", header, [row])
    return ["spectrum.json", "spectrum.csv"]


def _cmd_flatness_rate(cfg: ExperimentConfig, out: Path) -> list[str]:
    observable = "h" if cfg.d == 3 else "delta"
    slope, se = estimate_flatness_rate(
        cfg.spec, cfg.d, cfg.n_steps, cfg.replicas, RngStream(cfg.master_seed), observable=observable
    )
    _write_json(
        out / "rate.json",
        {
            "observable": observable,
            "slope": slope,
            "se": se,
            "n_steps": cfg.n_steps,
            "replicas": cfg.replicas,
            "spec_digest": cfg.digest(),
        },
    )
    return ["rate.json"]


def _cmd_limit_point(cfg: ExperimentConfig, out: Path) -> list[str]:
    chain = regular_polygon_chain(cfg.d)
    verts = chain.vertices()
    pts, w = limit_point_batch(verts, cfg.spec, cfg.n_steps, cfg.replicas, RngStream(cfg.master_seed))
    rows = [[r, pts[r, 0], pts[r, 1], *[float(v) for v in w[r]]] for r in range(cfg.replicas)]
    header = ["replica", "px", "py"] + [f"w_{j+1}" for j in range(cfg.d)]
    _write_csv(out / "limit_points.csv", header, rows)
    _write_json(
        out / "limit_point_summary.json",
        {
            "weight_mean": [float(v) for v in w.mean(axis=0)],
            "weight_var": [float(v) for v in w.var(axis=0, ddof=1)],
            "replicas": cfg.replicas,
            "spec_digest": cfg.digest(),
        },
    )
    return ["limit_points.csv", "limit_point_summary.json"]


def _phi_index_for(spec: SplitSpec) -> int | None:
    if spec.kind == "uniform":
        return 1
    if spec.kind == "beta" and spec.alpha == spec.beta and float(spec.alpha).is_integer() and 1 <= spec.alpha <= 5:
        return int(spec.alpha)
    return None


def _cmd_shape_dist(cfg: ExperimentConfig, out: Path) -> list[str]:
    samples = eta_histogram(cfg.spec, cfg.replicas, cfg.n_steps, RngStream(cfg.master_seed))
    bins = np.linspace(0.0, 1.0, 101)
    counts, edges = np.histogram(samples, bins=bins)
    rows = [[edges[i], edges[i + 1], int(counts[i])] for i in range(len(counts))]
    _write_csv(out / "histogram.csv", ["bin_left", "bin_right", "count"], rows)
    report = {"replicas": cfg.replicas, "steps": cfg.n_steps, "spec_digest": cfg.digest()}
    n = _phi_index_for(cfg.spec)
    if n is not None:
        report["ks_vs_phi"] = ks_distance(samples, lambda z: phi_cdf_closed_form(n, z))
        report["ks_vs_phi_folded"] = ks_distance(samples, lambda z: phi_folded_cdf(n, z))
        report["phi_index"] = n
    _write_json(out / "ks_report.json", report)
    return ["histogram.csv", "ks_report.json"]


def _cmd_invariant_density(cfg: ExperimentConfig, out: Path) -> list[str]:
    grid = solve_invariant_density(cfg.spec, cfg.grid_size)
    _write_csv(out / "density.csv", ["z", "phi"], zip(grid.nodes, grid.values))
    report = {"grid_size": cfg.grid_size, "spec_digest": cfg.digest()}
    n = _phi_index_for(cfg.spec)
    if n is not None:
        report["sup_error_vs_phi"] = float(
            np.abs(grid.values - phi_closed_form(n, grid.nodes)).max()
        )
        report["phi_index"] = n
    _write_json(out / "density_report.json", report)
    return ["density.csv", "density_report.json"]


def _cmd_rate_identity(cfg: ExperimentConfig, out: Path) -> list[str]:
    rng = RngStream(cfg.master_seed)
    rate = rate_via_eq_speed(cfg.spec, rng=rng, zeta_samples=cfg.samples)
    report = {"rate": rate, "spec_digest": cfg.digest()}
    if cfg.spec.kind == "uniform":
        report["closed_form_rate"] = (6.0 - math.pi**2) / 9.0
        report["zeta_half"] = zeta_uniform_closed_form(0.5)
    _write_json(out / "rate_identity.json", report)
    return ["rate_identity.json"]


def _cmd_diagnostics(cfg: ExperimentConfig, out: Path) -> list[str]:
    rng = RngStream(cfg.master_seed)
    report = {"spec_digest": cfg.digest(), "d": cfg.d}
    if not cfg.spec.is_joint:
        lm = log_moment_diagnostics(cfg.spec, max(cfg.samples, 1000), rng.spawn(0))
        report["mean_abs_log_xi"] = lm.mean_abs_log
        report["se_abs_log_xi"] = lm.se_abs_log
        report["mean_abs_log_one_minus_xi"] = lm.mean_abs_log1m
        report["se_abs_log_one_minus_xi"] = lm.se_abs_log1m
    sizes = [max(cfg.samples // 100, 10**4), max(cfg.samples // 10, 10**5), max(cfg.samples, 10**6)]
    table, flag = log_det_divergence_scan(cfg.spec, cfg.d, sizes, rng.spawn(1))
    report["log_det_scan"] = [{"samples": n, "estimate": m, "se": s} for n, m, s in table]
    report["divergence_flag"] = flag
    est, se = expected_log_abs_det(cfg.spec, cfg.d, max(cfg.samples, 10**4), rng.spawn(2))
    report["log_det_mean"] = est
    report["log_det_se"] = se
    _write_json(out / "diagnostics.json", report)
    return ["diagnostics.json"]


_RUNNERS = {
    "simulate": _cmd_simulate,
    "lyapunov": _cmd_lyapunov,
    "flatness-rate": _cmd_flatness_rate,
    "limit-point": _cmd_limit_point,
    "shape-dist": _cmd_shape_dist,
    "invariant-density": _cmd_invariant_density,
    "rate-identity": _cmd_rate_identity,
    "diagnostics": _cmd_diagnostics,
}


def run_experiment(config: ExperimentConfig) -> int:
    """Run one experiment; writes outputs + manifest.json, returns exit status."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    try:
        files = _RUNNERS[config.subcommand](config, out)
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}")
        return 1
    manifest = {
        "config": {**config.digest_fields(), "threads": config.threads},
        "digest": config.digest(),
        "outputs": files,
        "version": __version__,
        "wall_time_s": round(time.time() - start, 3),
    }
    _write_json(out / "manifest.json", manifest)
    echoed = manifest["config"].copy()
    echoed.pop("threads")
    reparsed = ExperimentConfig(
        subcommand=echoed["subcommand"],
        spec=SplitSpec.from_config(echoed["spec"]),
        d=echoed["d"],
        n_steps=echoed["n_steps"],
        replicas=echoed["replicas"],
        grid_size=echoed["grid_size"],
        samples=echoed["samples"],
        master_seed=echoed["master_seed"],
        record_every=echoed["record_every"],
    )
    if reparsed.digest() != config.digest():
        print("error: manifest config does not round-trip")
        return 1
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polysub",
        description="Random subdivision of convex polygons: simulation and rate studies",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--d", type=int, default=3, help="number of polygon sides")
        p.add_argument("--steps", type=int, default=None, help="steps per replica / chain length")
        p.add_argument("--replicas", type=int, default=None, help="independent replicas")
        p.add_argument("--seed", type=int, default=0, help="64-bit master seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--threads", type=str, default="1", help="worker threads or 'auto'")
        p.add_argument("--spec", type=str, default="kind=uniform", help="split law: inline k=v pairs or a file")
        p.add_argument("--grid-size", type=int, default=201, help="invariant-density grid size")
        p.add_argument("--samples", type=int, default=10**6, help="Monte Carlo sample count")
        p.add_argument("--record-every", type=int, default=1, help="record observables every k steps")
    return parser


_DEFAULT_STEPS = {
    "simulate": 1000,
    "lyapunov": 10**4,
    "flatness-rate": 3000,
    "limit-point": 200,
    "shape-dist": 200,
    "invariant-density": 0,
    "rate-identity": 0,
    "diagnostics": 0,
}

_DEFAULT_REPLICAS = {
    "simulate": 8,
    "lyapunov": 64,
    "flatness-rate": 256,
    "limit-point": 10**4,
    "shape-dist": 10**5,
    "invariant-density": 1,
    "rate-identity": 1,
    "diagnostics": 1,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = parse_spec_argument(args.spec, args.d)
        if args.threads == "auto":
            import os

            threads = os.cpu_count() or 1
        else:
            threads = max(1, int(args.threads))
        config = ExperimentConfig(
            subcommand=args.subcommand,
            spec=spec,
            d=args.d,
            n_steps=args.steps if args.steps is not None else _DEFAULT_STEPS[args.subcommand],
            replicas=args.replicas if args.replicas is not None else _DEFAULT_REPLICAS[args.subcommand],
            grid_size=args.grid_size,
            samples=args.samples,
            master_seed=args.seed,
            output_dir=args.out,
            threads=threads,
            record_every=args.record_every,
        )
    except (ValueError, KeyError) as exc:
        print(f"usage error: {exc}")
        return 2
    return run_experiment(config)


if __name__ == "__main__":
    raise SystemExit(main())

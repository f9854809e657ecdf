"""Command-line front end.

Subcommands: gen-synthetic, sample-prior, fit, predict-density, geweke.
All outputs are plot-ready CSV files plus a meta.json that echoes the
configuration, the seed and a config hash, so runs are reproducible and
auditable.  No plotting happens here.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .chain import ChainOptions, default_walk_scales, run_exchange_chain, run_history_chain
from .config import RunConfig, parse_config, parse_float_list, parse_grid_spec
from .generate import draw_prior_dataset
from .geweke import run_geweke_exchange, run_geweke_history
from .gp import ConditionalSampler, GpHyper
from .io_utils import read_data_csv, write_csv, write_json
from .model import (
    BaseHyper,
    GaussianBase,
    HyperPrior,
    HyperWalkScales,
    UniformBox,
    phi,
)
from .predictive import DensityConfig, density_grid
from .synthetic import sample_f1, sample_f2


# ---------------------------------------------------------------------------
# Model construction from configuration
# ---------------------------------------------------------------------------

def build_psi(cfg: RunConfig, dim: int, data: np.ndarray | None) -> BaseHyper:
    if cfg.base == "uniform-box":
        lo = parse_float_list(cfg.box_lower, dim, "box_lower")
        hi = parse_float_list(cfg.box_upper, dim, "box_upper")
        return UniformBox(np.array(lo), np.array(hi))
    if cfg.base_mean_init == "auto":
        if data is None:
            raise ValueError("gaussian base with auto init requires data")
        mean = data.mean(axis=0)
    else:
        mean = np.array(parse_float_list(cfg.base_mean_init, dim, "base_mean_init"))
    if cfg.base_sigma_init == "auto":
        if data is None:
            raise ValueError("gaussian base with auto init requires data")
        sigma = data.std(axis=0)
        sigma = np.where(sigma > 0, sigma, 1.0)
    else:
        sigma = np.array(parse_float_list(cfg.base_sigma_init, dim, "base_sigma_init"))
    return GaussianBase(mean, sigma)


def build_theta(cfg: RunConfig, dim: int, psi: BaseHyper) -> GpHyper:
    ls = np.full(dim, cfg.lengthscale_init)
    pin = None
    if cfg.pin_enabled:
        if isinstance(psi, UniformBox):
            pin = 0.5 * (psi.lower + psi.upper)
        else:
            pin = psi.mean.copy()
    return GpHyper(amplitude=cfg.amplitude_init, lengthscales=ls,
                   pin_location=pin, mean=cfg.mean_const)


def build_priors(cfg: RunConfig, data: np.ndarray | None) -> HyperPrior:
    return HyperPrior.for_data(
        data if data is not None else np.zeros((1, 1)),
        gaussian_base=cfg.base == "gaussian",
        log_amplitude=(cfg.amp_log_prior_mu, cfg.amp_log_prior_sigma),
        log_lengthscale=(cfg.ls_log_prior_mu, cfg.ls_log_prior_sigma),
        isotropic=cfg.kernel == "isotropic",
        pin=cfg.pin_enabled,
    )


def build_chain_options(cfg: RunConfig, data: np.ndarray, **overrides) -> ChainOptions:
    kw = dict(
        total=cfg.total_iters,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        max_proposals=cfg.max_proposals,
        zeta_insert=cfg.zeta_insert,
        walk_scales=default_walk_scales(data, cfg.walk_scale_frac),
        number_moves=cfg.number_moves,
        hmc_step_size=cfg.hmc_step_size,
        hmc_leapfrog=cfg.hmc_steps,
        hmc_target=cfg.hmc_target,
        crankshaft_eps=cfg.crankshaft_eps,
        n_extra_controls=cfg.extra_controls,
        infer_hypers=cfg.infer_hypers,
        hyper_scales=HyperWalkScales(
            log_amplitude=cfg.hyper_walk_scale,
            log_lengthscale=cfg.hyper_walk_scale,
            base_mean=cfg.hyper_walk_scale,
            log_base_sigma=cfg.hyper_walk_scale,
            pin=cfg.hyper_walk_scale,
        ),
        record_predictive=cfg.record_predictive,
        record_rejections=True,
    )
    kw.update(overrides)
    return ChainOptions(**kw)


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------

def _write_samples(path: Path, samples: np.ndarray) -> None:
    dim = samples.shape[1] if samples.ndim == 2 else 1
    header = [f"x{i + 1}" for i in range(dim)]
    write_csv(path, header, samples.reshape(-1, dim))


def _write_trace(path: Path, result, dim: int) -> None:
    cols = ["iteration", "m"]
    accept_keys = sorted(result.accept)
    cols += accept_keys
    cols += ["log_density", "amplitude"]
    cols += [f"ls{i + 1}" for i in range(dim)]
    parts = [result.iterations, result.m_counts]
    parts += [result.accept[k] for k in accept_keys]
    parts += [result.log_density, result.amplitude]
    parts += [result.lengthscales[:, i] for i in range(dim)]
    if result.psi_mean is not None:
        cols += [f"base_mean{i + 1}" for i in range(dim)]
        cols += [f"base_sigma{i + 1}" for i in range(dim)]
        parts += [result.psi_mean[:, i] for i in range(dim)]
        parts += [result.psi_sigma[:, i] for i in range(dim)]
    rows = np.column_stack(parts) if result.iterations.size else np.empty((0, len(cols)))
    write_csv(path, cols, rows)


def _write_rejections(path: Path, result, dim: int) -> None:
    header = ["iteration"] + [f"x{i + 1}" for i in range(dim)]
    rows = []
    for it, snap in zip(result.iterations, result.rejection_snapshots):
        for point in snap:
            rows.append([it, *point])
    write_csv(path, header, np.asarray(rows) if rows else np.empty((0, dim + 1)))


def _write_predictive(path: Path, result, dim: int) -> None:
    header = ["iteration"] + [f"x{i + 1}" for i in range(dim)]
    rows = []
    if result.predictive is not None:
        for it, point in zip(result.iterations, result.predictive):
            if np.all(np.isfinite(point)):
                rows.append([it, *point])
    write_csv(path, header, np.asarray(rows) if rows else np.empty((0, dim + 1)))


def _acceptance_summary(counters) -> dict:
    out = {}
    for move in ("number", "loc", "hmc", "hyper", "func"):
        att = counters.get(f"{move}_att", 0)
        if att:
            out[move] = counters.get(f"{move}_acc", 0) / att
    out["budget_failures"] = counters.get("budget_failures", 0)
    return out


def _meta(cfg: RunConfig, command: str, extra: dict) -> dict:
    from dataclasses import asdict

    payload = {
        "command": command,
        "seed": cfg.seed,
        "config": asdict(cfg),
        "config_hash": cfg.hash(),
    }
    payload.update(extra)
    return payload


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_synthetic(cfg: RunConfig, name: str, n: int, out: Path) -> None:
    rng = np.random.default_rng(cfg.seed)
    if name == "f1":
        samples = sample_f1(n, rng)
    elif name == "f2":
        samples = sample_f2(n, rng)
    else:
        raise ValueError(f"unknown synthetic dataset {name!r} (want f1 or f2)")
    out.mkdir(parents=True, exist_ok=True)
    _write_samples(out / f"{name}.csv", samples)
    write_json(out / "meta.json", _meta(cfg, "gen-synthetic",
                                        {"dataset": name, "n": n}))
    print(f"wrote {out / (name + '.csv')} ({n} rows)")


def _prior_grid(psi: BaseHyper, per_dim: int) -> np.ndarray:
    if isinstance(psi, UniformBox):
        axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(psi.lower, psi.upper)]
    else:
        axes = [np.linspace(m - 3 * s, m + 3 * s, per_dim)
                for m, s in zip(psi.mean, psi.sigma)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def cmd_sample_prior(cfg: RunConfig, out: Path, n: int | None = None) -> None:
    n = cfg.n_samples if n is None else n
    if cfg.base == "uniform-box":
        dim = len(cfg.box_lower.replace(",", " ").split())
    else:
        if cfg.base_mean_init == "auto":
            raise ValueError("sample-prior with a gaussian base needs explicit base_mean_init")
        dim = len(cfg.base_mean_init.replace(",", " ").split())
    psi = build_psi(cfg, dim, None)
    theta = build_theta(cfg, dim, psi)
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    trace = draw_prior_dataset(n, theta, psi, rng, max_proposals=cfg.max_proposals)
    out.mkdir(parents=True, exist_ok=True)
    _write_samples(out / "samples.csv", trace.accepted)
    # unnormalised density grid through the realised function's conditional mean
    grid = _prior_grid(psi, cfg.grid_count)
    sampler = ConditionalSampler(theta, trace.cond.points, trace.cond.values)
    mean, _ = sampler.mean_cov(grid)
    from .model import base_logpdf

    dens = phi(mean) * np.exp(base_logpdf(grid, psi))
    header = [f"x{i + 1}" for i in range(dim)] + ["unnormalized_density"]
    write_csv(out / "density_grid.csv", header, np.column_stack([grid, dens]))
    write_json(out / "meta.json", _meta(cfg, "sample-prior", {
        "n": n,
        "proposals": int(trace.proposal_count),
        "wall_time_s": time.perf_counter() - t0,
    }))
    print(f"wrote {out / 'samples.csv'} ({n} accepted, "
          f"{trace.proposal_count} proposals)")


def _run_one_chain(args) -> tuple[int, object]:
    idx, data, cfg, seed = args
    rng = np.random.default_rng(seed)
    psi = build_psi(cfg, data.shape[1], data)
    theta = build_theta(cfg, data.shape[1], psi)
    priors = build_priors(cfg, data) if cfg.infer_hypers else None
    opts = build_chain_options(cfg, data)
    if cfg.sampler == "exchange":
        result = run_exchange_chain(data, theta, psi, opts, priors, rng)
    else:
        result = run_history_chain(data, theta, psi, opts, priors, rng)
    return idx, result


def cmd_fit(cfg: RunConfig, data_path: Path, out: Path, chains: int = 1) -> None:
    data = read_data_csv(data_path)
    dim = data.shape[1]
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(cfg.seed).spawn(chains)
    tasks = [(k, data, cfg, seeds[k]) for k in range(chains)]
    t0 = time.perf_counter()
    if cfg.workers > 1 and chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = dict(pool.map(_run_one_chain, tasks))
    else:
        results = dict(map(_run_one_chain, tasks))
    summaries = {}
    for k in range(chains):
        result = results[k]
        chain_dir = out if chains == 1 else out / f"chain{k:02d}"
        chain_dir.mkdir(parents=True, exist_ok=True)
        _write_trace(chain_dir / "trace.csv", result, dim)
        _write_rejections(chain_dir / "rejections.csv", result, dim)
        _write_predictive(chain_dir / "predictive_samples.csv", result, dim)
        summaries[f"chain{k:02d}"] = {
            "acceptance": _acceptance_summary(result.counters),
            "retained": int(result.iterations.size),
            "final_amplitude": result.final_theta.amplitude,
            "hmc_step_size": result.hmc_step_size,
            "wall_time_s": result.wall_time,
        }
    write_json(out / "meta.json", _meta(cfg, "fit", {
        "data": str(data_path),
        "n_data": int(data.shape[0]),
        "chains": chains,
        "wall_time_s": time.perf_counter() - t0,
        "summary": summaries,
    }))
    print(f"fit complete: {out} ({chains} chain(s), "
          f"{time.perf_counter() - t0:.1f}s)")


def cmd_predict_density(cfg: RunConfig, data_path: Path, out: Path,
                        grid_spec: str | None = None) -> None:
    data = read_data_csv(data_path)
    dim = data.shape[1]
    spec = parse_grid_spec(grid_spec if grid_spec is not None else cfg.grid)
    if len(spec) != dim:
        raise ValueError(f"grid spec has {len(spec)} dimensions, data has {dim}")
    axes = [np.linspace(lo, hi, n) for lo, hi, n in spec]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.column_stack([m.ravel() for m in mesh])
    psi = build_psi(cfg, dim, data)
    theta = build_theta(cfg, dim, psi)
    priors = build_priors(cfg, data) if cfg.infer_hypers else None
    dconf = DensityConfig(
        theta0=theta, psi0=psi, priors=priors, sampler=cfg.sampler,
        retained=cfg.pred_retained, burn_in=cfg.pred_burn_in,
        thinning=cfg.pred_thinning,
        chain_options=build_chain_options(cfg, data, total=1, burn_in=0,
                                          record_predictive=False,
                                          record_rejections=False),
    )
    seq = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(seq.spawn(1)[0])
    t0 = time.perf_counter()
    result = density_grid(grid, data, dconf, rng, workers=cfg.workers,
                          seed_seq=seq)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"x{i + 1}" for i in range(dim)]
    header += ["estimate", "stderr_numerator", "stderr_denominator"]
    rows = np.column_stack([
        grid,
        result.ratios(),
        np.array([e.numerator_se for e in result.estimates]),
        np.array([e.denominator_se for e in result.estimates]),
    ])
    write_csv(out / "density_grid.csv", header, rows)
    write_json(out / "meta.json", _meta(cfg, "predict-density", {
        "data": str(data_path),
        "grid_points": int(grid.shape[0]),
        "integral": result.integral,
        "wall_time_s": time.perf_counter() - t0,
    }))
    print(f"wrote {out / 'density_grid.csv'} ({grid.shape[0]} points"
          + (f", integral {result.integral:.4f}" if result.integral is not None else "")
          + ")")


def cmd_geweke(cfg: RunConfig, out: Path) -> None:
    if cfg.geweke_n_data > 5:
        raise ValueError("geweke harness supports at most 5 data points")
    psi = build_psi(cfg, 1, None)
    if not isinstance(psi, UniformBox):
        raise ValueError("geweke harness uses a 1-D uniform-box base")
    theta = build_theta(cfg, 1, psi)
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    if cfg.sampler == "exchange":
        if cfg.geweke_corrupt:
            raise ValueError("the corruption hook only exists for the "
                             "latent-history sampler")
        report = run_geweke_exchange(theta, psi, n_data=cfg.geweke_n_data,
                                     n_samples=cfg.geweke_samples,
                                     thin=cfg.geweke_thin, rng=rng,
                                     crankshaft_eps=cfg.crankshaft_eps,
                                     max_proposals=cfg.max_proposals)
    else:
        report = run_geweke_history(theta, psi, n_data=cfg.geweke_n_data,
                                    n_samples=cfg.geweke_samples,
                                    thin=cfg.geweke_thin, rng=rng,
                                    corrupt_insert=cfg.geweke_corrupt,
                                    max_proposals=cfg.max_proposals)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "geweke_report.json", {
        "sampler": cfg.sampler,
        "n_samples": report.n_samples,
        "threshold": report.threshold,
        "statistics": report.statistics,
        "passed": report.passed,
        "corrupted": cfg.geweke_corrupt,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "wall_time_s": time.perf_counter() - t0,
    })
    for line in report.summary_lines():
        print(line)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpds",
        description="Gaussian process density sampler: generation, "
                    "inference and predictive density estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="config file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("gen-synthetic", help="write a synthetic benchmark dataset")
    common(p)
    p.add_argument("--name", choices=("f1", "f2"), required=True)
    p.add_argument("--n", type=int, default=None, help="number of draws")

    p = sub.add_parser("sample-prior", help="draw a dataset from the prior")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of accepted samples")

    p = sub.add_parser("fit", help="run MCMC inference on a dataset")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--chains", type=int, default=1)

    p = sub.add_parser("predict-density", help="normalised predictive density on a grid")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--grid", type=str, default=None, help="min:max:count[;...]")

    p = sub.add_parser("geweke", help="forward vs successive-conditional check")
    common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "gen-synthetic":
            cmd_gen_synthetic(cfg, args.name, args.n or cfg.n_samples, args.out)
        elif args.command == "sample-prior":
            cmd_sample_prior(cfg, args.out, args.n)
        elif args.command == "fit":
            cmd_fit(cfg, args.data, args.out, args.chains)
        elif args.command == "predict-density":
            cmd_predict_density(cfg, args.data, args.out, args.grid)
        elif args.command == "geweke":
            cmd_geweke(cfg, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

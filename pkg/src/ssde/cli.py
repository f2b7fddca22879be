"""Batch entry point: configure an experiment, run it, emit CSV artifacts.

Configuration is layered: built-in defaults, then a plain ``key = value``
config file (one section per command), then ``--key value`` flags.  A seed
is always required so artifacts are a pure function of configuration, and
reruns are byte-identical.  Exit codes: 0 all checks passed, 1 usage,
2 config, 3 io, 4 at least one check failed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path as FsPath
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bessel_analytic, localtime, schemes, stats, testfn, transforms, verify
from .core import (
    CoefficientSpec,
    NoiseSource,
    Path,
    Representation,
    SdeProblem,
    make_grid,
)
from .errors import SsdeError

__all__ = ["main", "run"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CHECK_FAILED = 4

COMMANDS = (
    "simulate",
    "check-density",
    "check-martingale",
    "check-localtime",
    "check-transform",
    "check-uniqueness",
)

_DEFAULTS: Dict[str, Dict[str, str]] = {
    "simulate": {
        "scheme": "exact",
        "beta": "2.0",
        "alpha": "0.25",
        "x0": "0.0",
        "step": "1e-2",
        "horizon": "1.0",
        "n_paths": "10",
        "delta": "auto",
    },
    "check-density": {
        "betas": "0.5,1.0,2.0",
        "x0s": "0.0,1.0",
        "n_paths": "20000",
        "t": "1.0",
        "n_steps": "4",
        "level": "0.99",
    },
    "check-martingale": {
        "beta": "0.5",
        "x0": "0.0",
        "n_paths": "20000",
        "step": "1e-3",
        "s": "0.25",
        "t": "1.0",
        "radii": "0.15,0.25,0.4,0.6,0.9",
        "threshold": "4.0",
    },
    "check-localtime": {
        "beta": "0.5",
        "x0": "1.0",
        "n_paths": "100",
        "step": "1e-3",
        "horizon": "1.0",
        "window": "1e-2",
        "spacing": "1e-2",
        "tolerance": "0.05",
        "excursion_level": "0.05",
        "alpha": "0.25",
    },
    "check-transform": {
        "betas": "1.5",
        "x0": "1.0",
        "delta": "0.1",
        "n_paths": "2000",
        "step": "1e-3",
        "horizon": "3.0",
        "t_new": "0.5",
        "bias_budget": "0.004",
    },
    "check-uniqueness": {
        "beta": "3.0",
        "x0": "1.0",
        "h_levels": "1e-2,1e-3",
        "n_gap_paths": "128",
        "n_paths": "5000",
        "t": "1.0",
        "step": "1e-3",
        "delta_pair": "0.05",
        "radii": "0.15,0.25,0.4,0.6,0.9",
        "threshold": "4.0",
    },
}


class _UsageError(Exception):
    pass


class _ConfigError(Exception):
    pass


def _worker_count() -> int:
    raw = os.environ.get("SSDE_THREADS", "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise _ConfigError(f"SSDE_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _map_ordered(fn: Callable, items: Sequence, threads: int) -> List:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _load_config(command: str, config_path: Optional[str],
                 overrides: Dict[str, str]) -> Dict[str, str]:
    cfg = dict(_DEFAULTS[command])
    if config_path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise _ConfigError(f"cannot read config file {config_path}: {exc}")
        except configparser.Error as exc:
            raise _ConfigError(f"malformed config file {config_path}: {exc}")
        if parser.has_section(command):
            for key, value in parser.items(command):
                norm = key.replace("-", "_")
                if norm not in cfg:
                    raise _ConfigError(f"unknown key {key!r} in section [{command}]")
                cfg[norm] = value
    for key, value in overrides.items():
        if key not in cfg:
            raise _ConfigError(f"unknown option --{key} for command {command}")
        cfg[key] = value
    return cfg


def _floats(raw: str) -> List[float]:
    try:
        return [float(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError:
        raise _ConfigError(f"expected a comma-separated list of numbers, got {raw!r}")


def _float(cfg: Dict[str, str], key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise _ConfigError(f"option {key} must be a number, got {cfg[key]!r}")


def _int(cfg: Dict[str, str], key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise _ConfigError(f"option {key} must be an integer, got {cfg[key]!r}")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(out_dir: FsPath, name: str, header: Sequence[str],
               rows: Sequence[Sequence]) -> FsPath:
    target = out_dir / name
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {target}: {exc}") from exc
    return target


Row = Tuple[str, float, float, bool]


def _bessel_problem(beta: float, x0: float,
                    representation=Representation.DRIFT_INTEGRAL) -> SdeProblem:
    return SdeProblem(x0=x0, coefficients=CoefficientSpec.bessel_drift(beta),
                      representation=representation)


def _cmd_simulate(cfg: Dict[str, str], seed: int, out_dir: FsPath) -> Tuple[int, List[str]]:
    scheme = cfg["scheme"]
    x0 = _float(cfg, "x0")
    step = _float(cfg, "step")
    horizon = _float(cfg, "horizon")
    n_paths = _int(cfg, "n_paths")
    grid = make_grid(step, horizon)
    delta = None if cfg["delta"] == "auto" else float(cfg["delta"])
    rows = []
    for i in range(n_paths):
        noise = NoiseSource(seed, i)
        if scheme == "exact":
            path = schemes.simulate_bessel_exact(_float(cfg, "beta"), x0, grid, noise)
        elif scheme == "regularized":
            problem = _bessel_problem(_float(cfg, "beta"), x0)
            path = schemes.simulate_regularized_drift(
                problem, grid, noise, delta if delta is not None else step ** 0.5)
        elif scheme == "reflected":
            problem = SdeProblem(x0=x0, coefficients=CoefficientSpec.unit_diffusion(),
                                 representation=Representation.REFLECTED)
            path = schemes.simulate_euler_reflected(problem, grid, noise,
                                                    delta_eval=delta)
        elif scheme in ("power_sticky", "power_absorbed"):
            variant = "sticky_free" if scheme == "power_sticky" else "absorbed"
            path = schemes.simulate_power_diffusion(_float(cfg, "alpha"), x0, grid,
                                                    noise, variant)
        else:
            raise _ConfigError(f"unknown scheme {scheme!r}")
        refl = path.reflection_term
        for k, t in enumerate(path.grid.times):
            rows.append((i, float(t), float(path.values[k]),
                         "" if refl is None else _fmt(float(refl[k]))))
    _write_csv(out_dir, "paths.csv", ("path_id", "t", "x", "l"), rows)
    return EXIT_OK, [f"wrote {n_paths * (grid.n_steps + 1)} samples to paths.csv"]


def _density_rows(cfg: Dict[str, str], seed: int) -> List[Row]:
    betas = _floats(cfg["betas"])
    x0s = _floats(cfg["x0s"])
    n = _int(cfg, "n_paths")
    t = _float(cfg, "t")
    n_steps = _int(cfg, "n_steps")
    level = _float(cfg, "level")
    threshold = stats.ks_null_quantile(n, level)
    combos = [(b, x0) for b in betas for x0 in x0s]

    def one(args, _stream_of={c: i for i, c in enumerate(combos)}):
        beta, x0 = args
        noise = NoiseSource(seed, _stream_of[args])
        sample = schemes.bessel_exact_marginal(beta, x0, t, n, noise, n_steps=n_steps)
        params = bessel_analytic.BesselParams(beta)
        dist = stats.ks_distance(
            sample, lambda ys: bessel_analytic.transition_cdf_many(params, t, x0, ys))
        return (f"density_beta={beta:g}_x0={x0:g}", dist, threshold, dist < threshold)

    return _map_ordered(one, combos, _worker_count())


def _martingale_rows(cfg: Dict[str, str], seed: int) -> List[Row]:
    beta = _float(cfg, "beta")
    x0 = _float(cfg, "x0")
    n = _int(cfg, "n_paths")
    step = _float(cfg, "step")
    s = _float(cfg, "s")
    t = _float(cfg, "t")
    threshold = _float(cfg, "threshold")
    family = testfn.bump_family(_floats(cfg["radii"]))
    grid = make_grid(step, t)
    coeffs = CoefficientSpec.bessel_drift(beta)
    sums = {fn.name: [] for fn in family}
    noise = NoiseSource(seed, 0)
    for block in schemes.bessel_exact_path_blocks(beta, x0, grid, noise, n):
        for fn in family:
            inc, _ = testfn.increment_samples(block, grid, fn, coeffs, s, t)
            sums[fn.name].append(inc)
    rows: List[Row] = []
    for fn in family:
        inc = np.concatenate(sums[fn.name])
        sd = float(np.std(inc, ddof=1))
        z = 0.0 if sd == 0.0 else float(np.mean(inc) / (sd / np.sqrt(inc.size)))
        rows.append((f"martingale_{fn.name}", abs(z), threshold, abs(z) < threshold))
    return rows


def _localtime_rows(cfg: Dict[str, str], seed: int) -> List[Row]:
    beta = _float(cfg, "beta")
    x0 = _float(cfg, "x0")
    n_paths = _int(cfg, "n_paths")
    step = _float(cfg, "step")
    horizon = _float(cfg, "horizon")
    window = _float(cfg, "window")
    spacing = _float(cfg, "spacing")
    tol = _float(cfg, "tolerance")
    exc_level = _float(cfg, "excursion_level")
    alpha = _float(cfg, "alpha")
    grid = make_grid(step, horizon)
    noise = NoiseSource(seed, 0)
    rows: List[Row] = []

    phis = {
        "phi_one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
        "phi_x": lambda x: np.asarray(x, dtype=float),
        "phi_band": lambda x: ((np.asarray(x, dtype=float) >= 0.5)
                               & (np.asarray(x, dtype=float) <= 1.0)).astype(float),
    }
    residuals = {name: [] for name in phis}
    lhs_means = {name: [] for name in phis}
    paths = schemes.paths_from_blocks(
        grid, schemes.bessel_exact_path_blocks(beta, x0, grid, noise, n_paths))
    k_errors: List[float] = []
    for j, path in enumerate(paths):
        top = float(np.max(path.values)) + window
        levels = np.arange(spacing, top + spacing, spacing)
        for name, phi in phis.items():
            res = localtime.occupation_identity_residual(path, phi, beta, levels, window)
            residuals[name].append(res)
            lhs_means[name].append(step * float(np.sum(phi(path.values[:-1]))))
        if beta < 1.0 and j < 20:
            k_errors.extend(_k_increment_errors(path, beta, exc_level))
    for name in phis:
        mean_res = float(np.mean(residuals[name]))
        scale = max(float(np.mean(lhs_means[name])), 1e-12)
        rel = mean_res / scale
        rows.append((f"occupation_{name}", rel, tol, rel < tol))
    if k_errors:
        worst = float(np.max(k_errors))
        rows.append(("k_increment_worst_rel", worst, tol, worst < tol))

    frac_coarse = []
    frac_fine = []
    zero_noise = NoiseSource(seed, 10_000)
    for block in schemes.bessel_exact_path_blocks(beta, 0.0, grid, zero_noise,
                                                  min(n_paths, 200)):
        below_c = block[:, :-1] < 1e-1
        below_f = block[:, :-1] < 1e-2
        frac_coarse.append(np.mean(below_c, axis=1))
        frac_fine.append(np.mean(below_f, axis=1))
    ratio = float(np.mean(np.concatenate(frac_fine))
                  / np.mean(np.concatenate(frac_coarse)))
    rows.append(("zero_time_ratio", ratio, 0.5, ratio < 0.5))

    absorbed = schemes.simulate_power_diffusion(alpha, 0.0, grid,
                                                NoiseSource(seed, 20_000), "absorbed")
    frac = localtime.zero_time_fraction(absorbed, 1e-3)
    rows.append(("absorbed_zero_fraction", frac, 1.0, frac >= 1.0))
    return rows


def _k_increment_errors(path, beta: float, exc_level: float) -> List[float]:
    """Relative k-identity error on each maximal excursion above exc_level."""
    values = path.values
    h = path.grid.step
    # One-sided window smear is (2-beta) window / (2 v); keep it below the
    # tolerance at the excursion floor.
    window = 0.04 * exc_level
    a_max = float(np.max(values)) + window
    levels = np.geomspace(1e-4, a_max, 2500)
    k_curve = localtime.principal_value_k(path, beta, a_max, levels=levels,
                                          window=window)
    above = values >= exc_level
    errors: List[float] = []
    start = None
    for idx in range(values.size):
        if above[idx] and start is None:
            start = idx
        is_last = idx == values.size - 1
        if start is not None and (not above[idx] or is_last):
            end = idx if not above[idx] else idx + 1
            if end - start >= 2:
                direct = h * float(np.sum(1.0 / values[start:end - 1]))
                est = float(k_curve[end - 1] - k_curve[start])
                if direct > 0:
                    errors.append(abs(est - direct) / direct)
            start = None
    return errors


def _transform_rows(cfg: Dict[str, str], seed: int) -> List[Row]:
    betas = _floats(cfg["betas"])
    x0 = _float(cfg, "x0")
    delta = _float(cfg, "delta")
    n_paths = _int(cfg, "n_paths")
    step = _float(cfg, "step")
    horizon = _float(cfg, "horizon")
    t_new = _float(cfg, "t_new")
    bias = _float(cfg, "bias_budget")
    rows: List[Row] = []
    for stream, beta in enumerate(betas):
        dist, n_used = _reduced_marginal_ks(beta, x0, delta, n_paths, step, horizon,
                                            t_new, NoiseSource(seed, 1000 + stream))
        threshold = stats.ks_null_quantile(n_used, 0.99) + bias
        rows.append((f"transform_beta={beta:g}", dist, threshold, dist < threshold))
    return rows


def _reduced_marginal_ks(beta: float, x0: float, delta: float, n_paths: int,
                         step: float, horizon: float, t_new: float,
                         noise: NoiseSource) -> Tuple[float, int]:
    """KS of the reduced-process marginal against the reflected-BM law."""
    from statistics import NormalDist

    coeffs = CoefficientSpec.bessel_drift(beta)
    transform = transforms.build_scale(coeffs)
    grid = make_grid(step, horizon)
    level = transform.s(delta)
    start = transform.s(max(x0, delta))
    samples = []
    short = 0
    for block in schemes.bessel_exact_path_blocks(beta, x0, grid, noise, n_paths):
        for row in block:
            path = Path(grid=grid, values=row)
            try:
                reduced = transforms.reduce_to_reflected(path, transform, delta)
            except SsdeError:
                short += 1
                continue
            if reduced.grid.horizon < t_new:
                short += 1
                continue
            k = int(round(t_new / reduced.grid.step))
            k = min(k, reduced.grid.n_steps)
            samples.append(float(reduced.values[k]))
    if short > 0.005 * n_paths:
        raise _ConfigError(
            f"{short} of {n_paths} paths had a variance clock shorter than "
            f"t_new={t_new}; increase horizon"
        )
    nd = NormalDist(mu=0.0, sigma=float(np.sqrt(t_new)))

    def folded_cdf(vs):
        vs = np.asarray(vs, dtype=float)
        out = np.empty_like(vs)
        for i, v in enumerate(vs):
            if v < level:
                out[i] = 0.0
            else:
                out[i] = nd.cdf(v - start) - nd.cdf(2.0 * level - v - start)
        return out

    return stats.ks_distance(np.array(samples), folded_cdf), len(samples)


def _uniqueness_rows(cfg: Dict[str, str], seed: int) -> List[Row]:
    beta = _float(cfg, "beta")
    x0 = _float(cfg, "x0")
    levels = _floats(cfg["h_levels"])
    n_gap = _int(cfg, "n_gap_paths")
    n_paths = _int(cfg, "n_paths")
    t = _float(cfg, "t")
    step = _float(cfg, "step")
    delta_pair = _float(cfg, "delta_pair")
    threshold = _float(cfg, "threshold")
    problem = _bessel_problem(beta, x0)
    rows: List[Row] = []
    gaps = []
    for i, h in enumerate(levels):
        gap = verify.pathwise_uniqueness_gap(problem, "regularized",
                                             NoiseSource(seed, 100 + i),
                                             [h, h / 2], n_paths=n_gap)[0]
        prev = gaps[-1] if gaps else float("inf")
        gaps.append(gap)
        rows.append((f"gap_h={h:g}", gap, prev, gap < prev))

    dist = verify.weak_law_distance(problem, "exact", "regularized", t, n_paths,
                                    NoiseSource(seed, 300), NoiseSource(seed, 301),
                                    step=step)
    ks_threshold = stats.ks_null_quantile(n_paths, 0.99, n_paths) + 0.008
    rows.append(("weak_law_exact_vs_regularized", dist, ks_threshold,
                 dist < ks_threshold))

    family = testfn.bump_family(_floats(cfg["radii"]))
    report = verify.max_solution_residual(problem, NoiseSource(seed, 400),
                                          delta_pair, family, n_paths=n_paths,
                                          step=step, t=t)
    rows.append(("max_solution_stat", report.max_abs_stat, threshold,
                 report.max_abs_stat < threshold and not report.flagged))
    return rows


_CHECK_RUNNERS = {
    "check-density": _density_rows,
    "check-martingale": _martingale_rows,
    "check-localtime": _localtime_rows,
    "check-transform": _transform_rows,
    "check-uniqueness": _uniqueness_rows,
}


def run(command: str, config_path: Optional[str], overrides: Dict[str, str],
        seed: int, out_dir: str) -> Tuple[int, List[str]]:
    """Execute one command; returns (exit_code, log lines)."""
    cfg = _load_config(command, config_path, overrides)
    out = FsPath(out_dir)
    if command == "simulate":
        return _cmd_simulate(cfg, seed, out)
    rows = _CHECK_RUNNERS[command](cfg, seed)
    _write_csv(out, "report.csv", ("check_name", "statistic", "threshold", "pass"),
               rows)
    lines = [f"{name}: statistic={_fmt(stat)} threshold={_fmt(thr)} "
             f"{'PASS' if ok else 'FAIL'}" for name, stat, thr, ok in rows]
    code = EXIT_OK if all(ok for *_, ok in rows) else EXIT_CHECK_FAILED
    return code, lines


def _usage() -> str:
    return (
        "usage: ssde COMMAND --seed N [--config FILE] [--out DIR] [--key value ...]\n"
        f"commands: {', '.join(COMMANDS)}\n"
        "every config key of the chosen command can be overridden by a --key flag"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_usage())
        return EXIT_OK if argv else EXIT_USAGE
    command, rest = argv[0], argv[1:]
    if command not in COMMANDS:
        print(f"unknown command {command!r}", file=sys.stderr)
        print(_usage(), file=sys.stderr)
        return EXIT_USAGE

    parser = argparse.ArgumentParser(prog=f"ssde {command}", add_help=False)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--config", default=None)
    parser.add_argument("--out", default=".")
    for key in _DEFAULTS[command]:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    try:
        ns = parser.parse_args(rest)
    except SystemExit:
        print(_usage(), file=sys.stderr)
        return EXIT_USAGE
    if ns.seed is None:
        print("--seed is required (no wall-clock default)", file=sys.stderr)
        return EXIT_USAGE
    overrides = {key: getattr(ns, key) for key in _DEFAULTS[command]
                 if getattr(ns, key) is not None}
    try:
        code, lines = run(command, ns.config, overrides, ns.seed, ns.out)
    except _ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SsdeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in lines:
        print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())

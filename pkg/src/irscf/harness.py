"""Experiment front-end: config files, seeded multi-realization sweeps,
scheme comparison, and tabular output.

A realization is one network draw (placement + channels). Beamformers are
designed from the channel estimates and the error statistics, then scored
by the Monte Carlo average rate over fresh error draws. Realization i's
randomness depends only on (master seed, i), so runs are reproducible and
independent of the parallelism degree.
"""

import argparse
import concurrent.futures
import json
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .optim import init_beamformers, run_bcd
from .rate import avg_sum_rate_mc, nats_to_bits
from .scenario import SystemConfig, default_placement, generate_channels

__all__ = [
    "SCHEMES",
    "SWEEP_PARAMS",
    "ExperimentSpec",
    "ResultRow",
    "load_config",
    "run_experiment",
    "run_realization",
    "write_results",
    "main",
]

SCHEMES = ("conventional-cf", "rjd-1bit", "rjd-2bit", "rjd-continuous", "upper-bound")
SWEEP_PARAMS = ("kappa2", "N", "chi", "irs_pathloss_exponent", "alpha", "b")

CSV_HEADER = [
    "sweep_param",
    "sweep_value",
    "scheme",
    "mean_rate",
    "std_err",
    "n_realizations",
    "mean_iters",
    "wall_time_s",
]


@dataclass
class ExperimentSpec:
    """One experiment: base config, sweep grid, schemes, seeding, output."""

    config: SystemConfig = field(default_factory=SystemConfig)
    sweep_param: str = None
    sweep_values: list = None
    realizations: int = 20
    seed: int = 0
    schemes: tuple = SCHEMES
    output: str = None
    fmt: str = "csv"
    jobs: int = 1

    def __post_init__(self):
        if self.sweep_param is not None and self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(
                f"sweep: unknown parameter {self.sweep_param!r}, expected one of {SWEEP_PARAMS}"
            )
        if self.sweep_param is not None and not self.sweep_values:
            raise ValueError("sweep: empty value grid")
        if self.realizations < 1:
            raise ValueError(f"realizations: must be >= 1, got {self.realizations}")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"schemes: unknown scheme {s!r}, expected subset of {SCHEMES}")
        if self.fmt not in ("csv", "records"):
            raise ValueError(f"format: must be 'csv' or 'records', got {self.fmt!r}")
        if self.jobs < 1:
            raise ValueError(f"jobs: must be >= 1, got {self.jobs}")


@dataclass
class ResultRow:
    sweep_param: str
    sweep_value: float
    scheme: str
    mean_rate: float        # bits per channel use
    std_err: float          # None when realizations < 2
    n_realizations: int
    mean_iters: float
    wall_time_s: float


def apply_sweep(config, param, value):
    """Base config with one swept parameter overridden."""
    if param is None:
        return config
    if param == "kappa2":
        return config.replace(kappa2_D=value, kappa2_G=value, kappa2_S=value)
    if param == "irs_pathloss_exponent":
        return config.replace(p_S=value, p_G=value)
    if param == "N":
        value = int(value)
        n_h = config.N_h if value % config.N_h == 0 else 1
        return config.replace(N=value, N_h=n_h)
    if param == "b":
        return config.replace(b=int(value))
    return config.replace(**{param: value})


def scheme_config(config, scheme, swept=None):
    """Scheme-specific settings on top of a swept config.

    A swept resolution (`swept == "b"`) takes precedence over the
    continuous/perfect-CSI schemes' default of b = 0, so `--sweep b=...`
    varies the resolution of those schemes.
    """
    if scheme == "conventional-cf":
        return config.replace(alpha=0.0, b=0)
    if scheme == "rjd-continuous":
        return config if swept == "b" else config.replace(b=0)
    if scheme == "rjd-1bit":
        return config.replace(b=1)
    if scheme == "rjd-2bit":
        return config.replace(b=2)
    if scheme == "upper-bound":
        kw = dict(kappa2_D=0.0, kappa2_G=0.0, kappa2_S=0.0)
        if swept != "b":
            kw["b"] = 0
        return config.replace(**kw)
    raise ValueError(f"unknown scheme {scheme!r}")


def run_realization(config, scheme, master_seed, index, swept=None):
    """Design and score one channel realization under one scheme.

    Channels come from stream (seed, index, 0), the solver start from
    (seed, index, 1) and the evaluation errors from (seed, index, 2), so
    every scheme sees identical channels for the same realization index.

    Returns (rate_bits, n_iters, wall_time_s).
    """
    cfg = scheme_config(config, scheme, swept=swept)
    t0 = time.perf_counter()
    rng_chan = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index, 0)))
    placement = default_placement(cfg, rng_chan)
    estimate = generate_channels(cfg, placement, rng_chan)

    rng_init = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index, 1)))
    init = init_beamformers(cfg, rng_init)
    bf, _, trace = run_bcd(estimate, cfg, init)

    rng_eval = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index, 2)))
    n_eval = cfg.mc_samples if any((cfg.kappa2_D, cfg.kappa2_G, cfg.kappa2_S)) else 1
    mean_nats, _ = avg_sum_rate_mc(estimate, bf, rng_eval, n_eval)
    return nats_to_bits(mean_nats), trace.n_iters, time.perf_counter() - t0


def _run_task(args):
    grid_idx, value, scheme, index, config, master_seed, swept = args
    rate, iters, wall = run_realization(config, scheme, master_seed, index, swept=swept)
    return (grid_idx, scheme, index, rate, iters, wall)


def run_experiment(spec):
    """Execute the full sweep and aggregate per (grid value, scheme).

    Deterministic for a given spec + seed regardless of the parallelism
    degree: tasks are keyed and sorted before reduction.
    """
    values = spec.sweep_values if spec.sweep_param is not None else [None]
    tasks = []
    for gi, value in enumerate(values):
        cfg = apply_sweep(spec.config, spec.sweep_param, value)
        for scheme in spec.schemes:
            for i in range(spec.realizations):
                tasks.append((gi, value, scheme, i, cfg, spec.seed, spec.sweep_param))

    if spec.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        results = [_run_task(t) for t in tasks]

    results.sort(key=lambda r: (r[0], spec.schemes.index(r[1]), r[2]))

    rows = []
    for gi, value in enumerate(values):
        for scheme in spec.schemes:
            sel = [r for r in results if r[0] == gi and r[1] == scheme]
            rates = np.array([r[3] for r in sel])
            iters = np.array([r[4] for r in sel])
            wall = float(sum(r[5] for r in sel))
            n = len(sel)
            se = float(np.std(rates, ddof=1) / np.sqrt(n)) if n >= 2 else None
            rows.append(
                ResultRow(
                    sweep_param=spec.sweep_param or "none",
                    sweep_value=value if value is not None else "",
                    scheme=scheme,
                    mean_rate=float(np.mean(rates)),
                    std_err=se,
                    n_realizations=n,
                    mean_iters=float(np.mean(iters)),
                    wall_time_s=wall,
                )
            )
    return rows


def _fmt(x):
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_results(rows, path, fmt="csv"):
    """Write result rows as CSV (fixed column order) or JSON records."""
    if not rows:
        raise ValueError("no result rows to write")
    lines = render_results(rows, fmt)
    with open(path, "w") as fh:
        fh.write(lines)


def render_results(rows, fmt="csv"):
    if not rows:
        raise ValueError("no result rows to render")
    if fmt == "csv":
        out = [",".join(CSV_HEADER)]
        for r in rows:
            out.append(
                ",".join(
                    [
                        r.sweep_param,
                        _fmt(r.sweep_value),
                        r.scheme,
                        _fmt(r.mean_rate),
                        _fmt(r.std_err),
                        str(r.n_realizations),
                        _fmt(r.mean_iters),
                        _fmt(r.wall_time_s),
                    ]
                )
            )
        return "\n".join(out) + "\n"
    if fmt == "records":
        out = []
        for r in rows:
            out.append(
                json.dumps(
                    {
                        "sweep_param": r.sweep_param,
                        "sweep_value": r.sweep_value if r.sweep_value != "" else None,
                        "scheme": r.scheme,
                        "mean_rate": r.mean_rate,
                        "std_err": r.std_err,
                        "n_realizations": r.n_realizations,
                        "mean_iters": r.mean_iters,
                        "wall_time_s": r.wall_time_s,
                    }
                )
            )
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


_CONFIG_FIELDS = {f.name for f in dc_fields(SystemConfig)}
_INT_CONFIG_FIELDS = {"L", "R", "K", "M_B", "M_U", "N", "N_h", "d", "b", "max_iters", "mc_samples"}


def _parse_value(key, raw):
    raw = raw.strip()
    if key in ("sweep", "output", "format"):
        return raw
    if key == "schemes":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if key == "sweep_values":
        return [float(v) for v in raw.split(",") if v.strip()]
    if key in _INT_CONFIG_FIELDS or key in ("realizations", "seed", "jobs"):
        try:
            return int(raw)
        except ValueError as exc:
            raise ValueError(f"{key}: expected integer, got {raw!r}") from exc
    try:
        return float(raw)
    except ValueError as exc:
        raise ValueError(f"{key}: expected number, got {raw!r}") from exc


def load_config(path):
    """Parse a flat key = value config file into an ExperimentSpec.

    Unknown keys, malformed values and invariant violations raise
    ValueError naming the offending field. Unset fields take the default
    scenario values.
    """
    config_kw = {}
    spec_kw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key == "kappa2":
                v = _parse_value(key, raw)
                config_kw.update(kappa2_D=v, kappa2_G=v, kappa2_S=v)
            elif key in _CONFIG_FIELDS:
                config_kw[key] = _parse_value(key, raw)
            elif key == "sweep":
                spec_kw["sweep_param"] = raw
            elif key == "sweep_values":
                spec_kw["sweep_values"] = _parse_value(key, raw)
            elif key in ("realizations", "seed", "jobs"):
                spec_kw[key] = _parse_value(key, raw)
            elif key == "schemes":
                spec_kw["schemes"] = _parse_value(key, raw)
            elif key == "output":
                spec_kw["output"] = raw
            elif key == "format":
                spec_kw["fmt"] = raw
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    try:
        config = SystemConfig(**config_kw)
    except ValueError:
        raise
    except TypeError as exc:
        raise ValueError(f"{path}: bad config field: {exc}") from exc
    return ExperimentSpec(config=config, **spec_kw)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="irscf",
        description="IRS-assisted cell-free downlink: robust joint beamforming sweeps",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--sweep", help="NAME=v1,v2,... sweep specification")
    parser.add_argument("--schemes", help="comma-separated scheme list")
    parser.add_argument("--realizations", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mc-samples", type=int, dest="mc_samples")
    parser.add_argument("--output", help="output file path (stdout if omitted)")
    parser.add_argument("--format", choices=("csv", "records"), dest="fmt")
    parser.add_argument("--jobs", type=int, help="parallel workers over realizations")
    args = parser.parse_args(argv)

    try:
        spec = load_config(args.config) if args.config else ExperimentSpec()
        cfg = spec.config
        if args.sweep:
            if "=" not in args.sweep:
                raise ValueError("--sweep expects NAME=v1,v2,...")
            name, vals = args.sweep.split("=", 1)
            spec.sweep_param = name.strip()
            spec.sweep_values = [float(v) for v in vals.split(",") if v.strip()]
        if args.schemes:
            spec.schemes = tuple(s.strip() for s in args.schemes.split(","))
        if args.realizations is not None:
            spec.realizations = args.realizations
        if args.seed is not None:
            spec.seed = args.seed
        if args.mc_samples is not None:
            cfg = cfg.replace(mc_samples=args.mc_samples)
        if args.output:
            spec.output = args.output
        if args.fmt:
            spec.fmt = args.fmt
        if args.jobs is not None:
            spec.jobs = args.jobs
        spec.config = cfg
        spec.__post_init__()  # re-validate after overrides

        rows = run_experiment(spec)
        text = render_results(rows, spec.fmt)
        if spec.output:
            with open(spec.output, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except Exception as exc:
        print(f"irscf: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

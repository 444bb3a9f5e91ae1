"""Experiment specs and the artifact-writing runner behind the CLI."""

import csv
import json
import logging
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import Topology, generate_instance
from .errors import SpecError, ValidationError
from .link import BeamformerSet, ImpairmentProfile, compute_metrics
from .optimize import (
    OptimizerConfig,
    Utility,
    evaluate_utility,
    matched_filter_start,
    optimize_rsma,
    random_search_oracle,
)
from .seeding import derive_seed
from .serialize import dumps
from .verify import (
    DEFAULT_DELTA_GRID,
    VIOLATED,
    aggregate_sweep,
    certify_instance,
    degeneration_verdict,
    sweep_trial,
    zero_common,
)

log = logging.getLogger(__name__)

MODES = ("sweep", "certify", "oracle_compare", "single_eval")
THREADS_ENV = "RSMADEG_THREADS"
ORACLE_REL_TOL = 0.01

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT_FAILED = 2

DEFAULT_PROFILE = {"m_t": 0.01, "m_r": 0.01, "sigma_k_sq": 1.0, "delta_sic": 0.0}


@dataclass(frozen=True)
class ExperimentSpec:
    topology: Topology
    mode: str
    master_seed: int
    profile_base: ImpairmentProfile = None
    p_max: float = 1.0
    delta_grid: tuple = DEFAULT_DELTA_GRID
    trials: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output_dir: str = "results"
    oracle_samples: int = 100_000
    verdict_rel_tol: float = 0.01

    def __post_init__(self):
        if self.profile_base is None:
            object.__setattr__(self, "profile_base", _profile_from(DEFAULT_PROFILE, self.topology.K))
        if self.mode not in MODES:
            raise SpecError(f"mode must be one of {MODES}, got {self.mode!r}", "mode")
        if self.profile_base.K != self.topology.K:
            raise SpecError("profile_base.sigma_k_sq must have K entries", "profile_base.sigma_k_sq")
        grid = tuple(float(d) for d in self.delta_grid)
        object.__setattr__(self, "delta_grid", grid)
        if not grid:
            raise SpecError("delta_grid must not be empty", "delta_grid")
        if any(not 0.0 <= d <= 1.0 for d in grid):
            raise SpecError("delta_grid values must lie in [0, 1]", "delta_grid")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise SpecError("delta_grid must be strictly increasing", "delta_grid")
        if self.mode == "sweep" and 1.0 not in grid:
            raise SpecError("sweep mode needs delta = 1 in delta_grid", "delta_grid")
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise SpecError("trials must be an integer >= 1", "trials")
        if not self.p_max > 0:
            raise SpecError("p_max must be positive", "p_max")
        if self.oracle_samples < 1:
            raise SpecError("oracle_samples must be >= 1", "oracle_samples")
        if not self.verdict_rel_tol > 0:
            raise SpecError("verdict_rel_tol must be positive", "verdict_rel_tol")

    def to_dict(self):
        return {
            "topology": self.topology.to_dict(),
            "profile_base": self.profile_base.to_dict(),
            "p_max": self.p_max,
            "delta_grid": list(self.delta_grid),
            "trials": self.trials,
            "optimizer": self.optimizer.to_dict(),
            "mode": self.mode,
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "oracle_samples": self.oracle_samples,
            "verdict_rel_tol": self.verdict_rel_tol,
        }


def _profile_from(data, K):
    data = dict(data)
    sig = data.get("sigma_k_sq", DEFAULT_PROFILE["sigma_k_sq"])
    if np.isscalar(sig):
        sig = [sig] * K
    return ImpairmentProfile(
        m_t=float(data.get("m_t", DEFAULT_PROFILE["m_t"])),
        m_r=float(data.get("m_r", DEFAULT_PROFILE["m_r"])),
        sigma_k_sq=tuple(float(s) for s in sig),
        delta_sic=float(data.get("delta_sic", DEFAULT_PROFILE["delta_sic"])),
    )


@contextmanager
def _field(name):
    try:
        yield
    except SpecError:
        raise
    except ValidationError as exc:
        sub = f"{name}.{exc.field}" if exc.field else name
        raise SpecError(f"{sub}: {exc}", sub) from None
    except (TypeError, ValueError, KeyError) as exc:
        raise SpecError(f"{name}: {exc}", name) from None


def spec_from_dict(data):
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    known = set(ExperimentSpec.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise SpecError(f"unknown field(s): {', '.join(unknown)}", unknown[0])
    for required in ("topology", "mode", "master_seed"):
        if required not in data:
            raise SpecError(f"missing required field {required!r}", required)
    with _field("topology"):
        topo = data["topology"]
        topology = Topology(M=topo["M"], N=topo["N"], K=topo["K"])
    kwargs = {"topology": topology, "mode": data["mode"]}
    seed = data["master_seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise SpecError("master_seed must be a 64-bit non-negative integer", "master_seed")
    kwargs["master_seed"] = seed
    if "profile_base" in data:
        with _field("profile_base"):
            kwargs["profile_base"] = _profile_from(data["profile_base"], topology.K)
    if "optimizer" in data:
        with _field("optimizer"):
            kwargs["optimizer"] = OptimizerConfig.from_dict(data["optimizer"])
    for name in ("p_max", "delta_grid", "trials", "output_dir", "oracle_samples", "verdict_rel_tol"):
        if name in data:
            kwargs[name] = data[name]
    with _field("spec"):
        return ExperimentSpec(**kwargs)


def load_spec(path):
    """Read and validate a JSON experiment spec, applying documented defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read spec ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return spec_from_dict(data)


def dump_spec(spec):
    return dumps(spec.to_dict())


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


@contextmanager
def _mapper(threads):
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield pool.map


def _random_beamformers(rng, M, K, p_max):
    """Gaussian directions, uniform simplex power split over all K + 1 streams."""
    D = rng.standard_normal((M, K + 1)) + 1j * rng.standard_normal((M, K + 1))
    D /= np.linalg.norm(D, axis=0)
    alpha = rng.dirichlet(np.ones(K + 1))
    return BeamformerSet.from_stacked(D * np.sqrt(alpha * p_max), p_max)


def _certify_trial(spec, t):
    inst_seed = derive_seed(spec.master_seed, t, 0)
    bf_seed = derive_seed(spec.master_seed, t, 1)
    inst = generate_instance(spec.topology, inst_seed)
    B = _random_beamformers(np.random.default_rng(bf_seed), spec.topology.M, spec.topology.K, spec.p_max)
    prof = spec.profile_base.with_delta(1.0)
    cert = certify_instance(inst, B, prof)
    B0 = zero_common(B)
    u_priv = [evaluate_utility(inst, b, prof, Utility.SUM_RATE_PRIVATE_ONLY) for b in (B, B0)]
    u_total = [evaluate_utility(inst, b, prof, Utility.SUM_RATE_TOTAL) for b in (B, B0)]
    return {
        "trial": t,
        "seed": inst_seed,
        "beamformer_seed": bf_seed,
        "certificate": cert.to_dict(),
        "private_only": {"rsma": u_priv[0], "zero_common": u_priv[1], "improved": u_priv[1] >= u_priv[0]},
        "sum_rate_total": {"rsma": u_total[0], "zero_common": u_total[1], "improved": u_total[1] >= u_total[0]},
    }


def _oracle_trial(spec, t):
    inst_seed = derive_seed(spec.master_seed, t, 0)
    inst = generate_instance(spec.topology, inst_seed)
    cfg = replace(spec.optimizer, seed=derive_seed(spec.master_seed, t, 1))
    oracle_seed = derive_seed(spec.master_seed, t, 2)
    prof = spec.profile_base
    res = optimize_rsma(inst, prof, cfg, p_max=spec.p_max)
    best = random_search_oracle(inst, prof, cfg.utility, spec.oracle_samples, oracle_seed, p_max=spec.p_max)
    oracle_val = evaluate_utility(inst, best, prof, cfg.utility)
    return {
        "trial": t,
        "seed": inst_seed,
        "oracle_seed": oracle_seed,
        "optimizer_objective": res.objective,
        "oracle_objective": oracle_val,
        "oracle_common_fraction": best.common_power / spec.p_max,
        "passed": res.objective >= oracle_val - ORACLE_REL_TOL * abs(oracle_val),
    }


def _run_single_eval(spec):
    inst_seed = derive_seed(spec.master_seed, 0, 0)
    inst = generate_instance(spec.topology, inst_seed)
    B = BeamformerSet.from_stacked(matched_filter_start(inst.h, spec.p_max, common=False), spec.p_max)
    metrics = compute_metrics(inst, B, spec.profile_base)
    results = {
        "mode": "single_eval",
        "ideal_hardware": spec.profile_base.ideal,
        "instance": inst.to_dict(),
        "beamformers": B.to_dict(),
        "metrics": metrics.to_dict(),
    }
    return results, metrics.csv_rows(), [inst_seed], True


def _run_certify(spec, mapper):
    rows = list(mapper(_certify_trial, [spec] * spec.trials, range(spec.trials)))
    verdicts = [r["certificate"]["verdict"] for r in rows]
    counts = {v: verdicts.count(v) for v in sorted(set(verdicts))}
    passed = VIOLATED not in counts
    results = {
        "mode": "certify",
        "ideal_hardware": spec.profile_base.ideal,
        "delta_sic": 1.0,
        "verdict_counts": counts,
        "private_only_improved": sum(r["private_only"]["improved"] for r in rows),
        "sum_rate_total_improved": sum(r["sum_rate_total"]["improved"] for r in rows),
        "passed": passed,
        "instances": rows,
    }
    table = [["trial", "seed", "verdict", "gram_min_eig", "min_floor_margin", "min_sinr_delta", "strict_users"]]
    for r in rows:
        c = r["certificate"]
        table.append(
            [
                r["trial"],
                r["seed"],
                c["verdict"],
                c["gram_ordering_min_eig"],
                min(c["floor_ordering_margins"]),
                min(c["sinr_deltas"]),
                " ".join(str(u) for u in c["strict_users"]),
            ]
        )
    return results, table, [r["seed"] for r in rows], passed


def _run_oracle_compare(spec, mapper):
    rows = list(mapper(_oracle_trial, [spec] * spec.trials, range(spec.trials)))
    passed = all(r["passed"] for r in rows)
    results = {"mode": "oracle_compare", "rel_tol": ORACLE_REL_TOL, "passed": passed, "trials": rows}
    keys = ["trial", "seed", "optimizer_objective", "oracle_objective", "oracle_common_fraction", "passed"]
    table = [keys] + [[r[k] for k in keys] for r in rows]
    return results, table, [r["seed"] for r in rows], passed


def _run_sweep(spec, mapper):
    job = partial(
        sweep_trial,
        spec.topology,
        spec.profile_base,
        spec.delta_grid,
        spec.optimizer,
        spec.p_max,
        spec.master_seed,
    )
    sweep = aggregate_sweep(spec.delta_grid, list(mapper(job, range(spec.trials))))
    verdict = degeneration_verdict(sweep, spec.verdict_rel_tol)
    results = {
        "mode": "sweep",
        "ideal_hardware": spec.profile_base.ideal,
        "utility": spec.optimizer.utility.value,
        "sweep": sweep.to_dict(),
        "verdict": verdict,
        "passed": verdict["passed"],
    }
    return results, sweep.csv_rows(), list(sweep.trial_seeds), verdict["passed"]


RUNNERS = {
    "single_eval": lambda spec, mapper: _run_single_eval(spec),
    "certify": _run_certify,
    "oracle_compare": _run_oracle_compare,
    "sweep": _run_sweep,
}


def _prepare_output(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path):
            pass
    except OSError as exc:
        raise OSError(f"output directory {path} is not writable: {exc.strerror}") from None
    return path


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def run(spec, out=None, threads=None):
    """Execute ``spec`` and write ``results.json``, ``results.csv`` and ``manifest.json``.

    Returns the process exit status: 0 on success, 2 when the run's verdict
    fails.  Operational errors propagate as exceptions (the CLI maps them to 1).
    """
    out_dir = _prepare_output(out if out is not None else spec.output_dir)
    n = _thread_count(threads)
    log.info("mode=%s trials=%d threads=%d -> %s", spec.mode, spec.trials, n, out_dir)
    start = time.perf_counter()
    with _mapper(n) as mapper:
        results, table, seeds, passed = RUNNERS[spec.mode](spec, mapper)
    wall = time.perf_counter() - start

    results = {"spec": spec.to_dict(), **results}
    (out_dir / "results.json").write_text(dumps(results))
    _write_csv(out_dir / "results.csv", table)
    manifest = {
        "spec": spec.to_dict(),
        "derived_seeds": seeds,
        "versions": {
            "rsmadeg": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "threads": n,
        "passed": passed,
        "wall_time_s": wall,
    }
    (out_dir / "manifest.json").write_text(dumps(manifest))
    log.info("%s in %.1fs", "passed" if passed else "FAILED", wall)
    return EXIT_OK if passed else EXIT_VERDICT_FAILED

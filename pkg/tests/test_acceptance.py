"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import json
import time

import numpy as np
import pytest

from rsmadeg import (
    ImpairmentProfile,
    OptimizerConfig,
    Topology,
    certify_instance,
    compute_metrics,
    evaluate_utility,
    generate_instance,
    optimize_rsma,
    power_split_oracle,
    random_search_oracle,
    sdma_metrics,
    utility_gradient,
    zero_common,
)
from rsmadeg.harness import run, spec_from_dict
from rsmadeg.optimize import Utility, mrt_directions
from rsmadeg.seeding import derive_seed
from rsmadeg.verify import VIOLATED, floor_margin_closed_form

from conftest import fd_gradient, gradient_rel_errors, random_beamformers, random_profile

MASTER = 20261015
DOMINANCE_INSTANCES = 10_000
OPERATING_POINT = {"m_t": 0.01, "m_r": 0.01, "sigma_k_sq": 1.0}


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def dominance_case(i):
    """Instance i of the 10,000-case suite; the grid of shapes and deltas is cycled."""
    K, M, N, delta = list(itertools.product((2, 3, 4), (2, 4, 8), (4, 16), (0.04, 0.1, 0.5, 1.0)))[i % 72]
    rng = np.random.default_rng(derive_seed(MASTER, 1, i))
    inst = generate_instance(Topology(M, N, K), derive_seed(MASTER, 0, i))
    return inst, random_beamformers(rng, M, K), random_profile(rng, K, delta)


@pytest.fixture(scope="module")
def dominance_runs():
    start = time.perf_counter()
    runs = []
    for i in range(DOMINANCE_INSTANCES):
        inst, B, prof = dominance_case(i)
        runs.append((inst, B, prof, certify_instance(inst, B, prof)))
    return runs, time.perf_counter() - start


def test_criterion_1_zero_common_dominance(dominance_runs, report):
    runs, elapsed = dominance_runs
    weak = strict = checked_strict = 0
    for inst, B, prof, cert in runs:
        before = np.asarray(cert.sinr_star)
        after = compute_metrics(inst, zero_common(B), prof).gamma_p
        weak += int(np.any(after - before < -1e-12 * before))
        for k in cert.strict_users:
            checked_strict += 1
            strict += int(not after[k - 1] > before[k - 1])
        weak += int(cert.verdict == VIOLATED)
    ok = weak == 0 and strict == 0 and elapsed < 60
    report(
        1,
        "zero_common dominance",
        ok,
        f"{len(runs)} instances, {checked_strict} strict users, weak violations {weak}, "
        f"strict violations {strict}, certification time {elapsed:.1f}s (target < 60s)",
    )


def test_criterion_2_certificate_algebra(dominance_runs, report):
    runs, _ = dominance_runs
    eig_bad = margin_bad = 0
    worst = 0.0
    for inst, B, prof, cert in runs:
        eig_bad += int(cert.gram_ordering_min_eig < -1e-10 * cert.gram_trace)
        closed = np.array([floor_margin_closed_form(h, B.w_c, prof) for h in inst.h])
        err = np.abs(np.asarray(cert.floor_ordering_margins) - closed) / np.maximum(closed, np.finfo(float).tiny)
        worst = max(worst, float(err.max()))
        margin_bad += int(np.any(err > 1e-10))
    ok = eig_bad == 0 and margin_bad == 0
    report(
        2,
        "certificate algebra",
        ok,
        f"{len(runs)} instances, eigenvalue failures {eig_bad}, margin failures {margin_bad}, "
        f"worst margin rel. error {worst:.2e}",
    )


def test_criterion_3_sdma_structural_equivalence(report):
    bad, worst = 0, 0.0
    for i in range(1000):
        inst, B, prof = dominance_case(i * 7 + 3)
        rsma = compute_metrics(inst, zero_common(B), prof)
        sdma = sdma_metrics(inst, B.w, prof)
        for name in ("phi_c", "phi_p", "gamma_p", "r_p_k"):
            a, b = getattr(rsma, name), getattr(sdma, name)
            err = float(np.max(np.abs(a - b) / np.abs(b)))
            worst = max(worst, err)
            bad += int(err > 1e-12)
        bad += int(abs(rsma.r_total - sdma.r_total) > 1e-12 * sdma.r_total)
    report(3, "SDMA structural equivalence", bad == 0, f"1000 instances, failures {bad}, worst rel. error {worst:.2e}")


def test_criterion_4_gradient_correctness(report):
    worst = {}
    for utility in (Utility.SUM_RATE_TOTAL, Utility.SUM_RATE_PRIVATE_ONLY):
        errs = []
        for i in range(100):
            rng = np.random.default_rng(derive_seed(MASTER, 4, i))
            K, M, N = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 17))
            inst = generate_instance(Topology(M, N, K), derive_seed(MASTER, 5, i))
            B, prof = random_beamformers(rng, M, K), random_profile(rng, K)
            gc, gw = utility_gradient(inst, B, prof, utility)
            analytic = np.column_stack([gc, gw.T])
            errs.append(gradient_rel_errors(analytic, fd_gradient(inst, B, prof, utility)).max())
        worst[utility.value] = max(errs)
    ok = all(e < 1e-4 for e in worst.values())
    detail = ", ".join(f"{u} worst {e:.2e}" for u, e in worst.items())
    report(4, "gradient vs central differences", ok, f"100 instances per utility, {detail} (limit 1e-4)")


@pytest.mark.slow
def test_criterion_5_oracle_agreement(report):
    start = time.perf_counter()
    prof = ImpairmentProfile(0.01, 0.01, (1.0, 1.0), 0.1)
    margins = []
    for i in range(20):
        inst = generate_instance(Topology(2, 16, 2), derive_seed(MASTER, 6, i))
        cfg = OptimizerConfig(seed=derive_seed(MASTER, 7, i))
        res = optimize_rsma(inst, prof, cfg)
        oracle = random_search_oracle(inst, prof, cfg.utility, 10**6, derive_seed(MASTER, 8, i))
        found = evaluate_utility(inst, oracle, prof, cfg.utility)
        margins.append((res.objective - found) / found)
    elapsed = time.perf_counter() - start
    ok = min(margins) >= -0.01 and elapsed < 600
    report(
        5,
        "optimizer vs random search",
        ok,
        f"20 instances, min relative margin {min(margins):+.4f} (limit -0.01), {elapsed:.0f}s (target < 600s)",
    )


@pytest.mark.slow
def test_criterion_6_degeneration_at_endpoint(tmp_path, report):
    spec = spec_from_dict(
        {
            "topology": {"M": 4, "N": 16, "K": 2},
            "mode": "sweep",
            "master_seed": MASTER,
            "profile_base": OPERATING_POINT,
            "trials": 100,
            "optimizer": {"utility": "sum_rate_total"},
            "verdict_rel_tol": 0.01,
        }
    )
    start = time.perf_counter()
    code = run(spec, out=tmp_path)
    elapsed = time.perf_counter() - start
    verdict = json.loads((tmp_path / "results.json").read_text())["verdict"]
    ok = code == 0 and verdict["passed"] and elapsed < 900
    report(
        6,
        "degeneration at the endpoint",
        ok,
        f"gap at delta=1 {verdict['endpoint_gap']:.2e} (limit {verdict['endpoint_gap_limit']:.2e}), "
        f"common fraction {verdict['common_power_fraction']:.4f} (limit 0.02), "
        f"spearman {verdict['spearman']} (limit -0.8), {elapsed:.0f}s (target < 900s)",
    )


def test_criterion_7_power_split_certificate(report):
    prof = ImpairmentProfile(0.01, 0.01, (1.0, 1.0), 1.0)
    fractions = []
    for i in range(50):
        inst = generate_instance(Topology(4, 16, 2), derive_seed(MASTER, 9, i))
        res = power_split_oracle(inst, prof, mrt_directions(inst.h), 51, utility=Utility.SUM_RATE_PRIVATE_ONLY)
        fractions.append(res.common_fraction)
    hits = sum(f == 0.0 for f in fractions)
    report(7, "power-split argmax", hits == 50, f"alpha_c = 0 on {hits}/50 instances")


def test_criterion_8_sinr_monotone_in_delta(report):
    grid = np.linspace(0.0, 1.0, 11)
    bad = 0
    for i in range(1000):
        inst, B, prof = dominance_case(i * 11 + 5)
        gam = np.array([compute_metrics(inst, B, prof.with_delta(d)).gamma_p for d in grid])
        bad += int(np.any(np.diff(gam, axis=0) > 0))
    report(8, "private SINR nonincreasing in delta", bad == 0, f"1000 instances, 11-point grid, violations {bad}")


def test_criterion_9_determinism(tmp_path, report):
    base = {"topology": {"M": 2, "N": 8, "K": 2}, "master_seed": 424242, "profile_base": OPERATING_POINT}
    specs = {
        "single_eval": {},
        "certify": {"trials": 20},
        "oracle_compare": {"trials": 2, "oracle_samples": 20000, "optimizer": {"restarts": 3}},
        "sweep": {"trials": 2, "delta_grid": [0.0, 0.5, 1.0], "optimizer": {"restarts": 3}},
    }
    differing = []
    for mode, extra in specs.items():
        spec = spec_from_dict({**base, "mode": mode, **extra})
        outs = [tmp_path / f"{mode}-{r}" for r in range(2)]
        for out in outs:
            run(spec, out=out)
        for name in ("results.json", "results.csv"):
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                differing.append(f"{mode}/{name}")
        manifests = [json.loads((o / "manifest.json").read_text()) for o in outs]
        for m in manifests:
            m.pop("wall_time_s")
        if manifests[0] != manifests[1]:
            differing.append(f"{mode}/manifest.json")
    report(9, "byte-identical reruns", not differing, f"4 modes rerun, differing artifacts: {differing or 'none'}")

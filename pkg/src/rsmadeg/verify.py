"""Certificates that zeroing the common beamformer never hurts private SINRs,
and delta-sweeps showing RSMA collapsing onto SDMA as SIC fails.
"""

from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy.stats import spearmanr

from .channel import generate_instance
from .errors import ValidationError
from .link import BeamformerSet, aggregate_gram, compute_metrics, distortion_forms, phi_c
from .optimize import optimize_rsma, optimize_sdma
from .seeding import derive_seed

DEFAULT_DELTA_GRID = (0.0, 0.04, 0.10, 0.25, 0.5, 0.75, 0.9, 1.0)
STRICT_REL = 1e-12
GRAM_TOL = 1e-10
FLOOR_TOL = 1e-10
SINR_TOL = 1e-12
COMMON_FRACTION_LIMIT = 0.02
SPEARMAN_LIMIT = -0.8

CERTIFIED = "certified"
DEGENERATE_NULLSPACE = "degenerate_nullspace"
VIOLATED = "violated"


def zero_common(B):
    """Drop the common stream: ``w_c -> 0``, private beamformers and budget unchanged."""
    return BeamformerSet(w_c=np.zeros_like(B.w_c), w=B.w, p_max=B.p_max)


@dataclass(frozen=True)
class DegenerationCertificate:
    """Per-instance record of every inequality in the zero-common argument.

    ``strict_users`` holds 1-based user indices.
    """

    power_feasible: bool
    gram_ordering_min_eig: float
    gram_ordering_max_eig: float
    gram_trace: float
    floor_ordering_margins: tuple
    sinr_deltas: tuple
    sinr_star: tuple
    strict_users: tuple
    verdict: str
    failures: tuple = ()

    def to_dict(self):
        return {
            "power_feasible": self.power_feasible,
            "gram_ordering_min_eig": self.gram_ordering_min_eig,
            "gram_ordering_max_eig": self.gram_ordering_max_eig,
            "gram_trace": self.gram_trace,
            "floor_ordering_margins": list(self.floor_ordering_margins),
            "sinr_deltas": list(self.sinr_deltas),
            "sinr_star": list(self.sinr_star),
            "strict_users": list(self.strict_users),
            "verdict": self.verdict,
            "failures": list(self.failures),
        }


def certify_instance(instance, B_star, profile):
    """Check feasibility, Gram ordering, floor ordering and SINR dominance.

    Intended for ``profile.delta_sic == 1`` but valid for any delta.  Violations
    are reported through ``verdict``; nothing is raised for them.
    """
    B_tilde = zero_common(B_star)
    A_star = aggregate_gram(B_star)
    D = gram_difference(B_star, B_tilde)
    eig = np.linalg.eigvalsh(D)
    trace = float(np.trace(A_star).real)

    floors_star = np.array([phi_c(h, A_star, profile, k) for k, h in enumerate(instance.h)])
    d_full, d_diag = np.array([distortion_forms(h, D) for h in instance.h]).T
    # Phi_c is affine in A with an identical noise term, so the margin is Phi_c's
    # distortion part evaluated at A* - A~
    margins = profile.m_r * d_full + profile.m_t * (1.0 + profile.m_r) * d_diag

    g_star = compute_metrics(instance, B_star, profile).gamma_p
    g_tilde = compute_metrics(instance, B_tilde, profile).gamma_p
    deltas = g_tilde - g_star

    wc_sq = B_star.common_power
    leak = np.abs(instance.h.conj() @ B_star.w_c) ** 2
    h_sq = np.sum(np.abs(instance.h) ** 2, axis=1)
    strict = tuple(int(k) + 1 for k in np.flatnonzero(leak > STRICT_REL * h_sq * wc_sq))
    signal = np.abs(np.einsum("km,km->k", instance.h.conj(), B_star.w)) ** 2

    failures = []
    feasible = B_star.is_feasible() and B_tilde.is_feasible()
    if not feasible:
        failures.append("power")
    if eig[0] < -GRAM_TOL * trace:
        failures.append("gram_ordering")
    if np.any(margins < -FLOOR_TOL * floors_star):
        failures.append("floor_ordering")
    if np.any(deltas < -SINR_TOL * g_star):
        failures.append("sinr_dominance")
    # a user with no private signal has gamma = 0 under both schemes
    if any(signal[k - 1] > 0 and not deltas[k - 1] > 0 for k in strict):
        failures.append("strictness")

    if failures:
        verdict = VIOLATED
    elif not strict and wc_sq > 0:
        verdict = DEGENERATE_NULLSPACE
    else:
        verdict = CERTIFIED
    return DegenerationCertificate(
        power_feasible=bool(feasible),
        gram_ordering_min_eig=float(eig[0]),
        gram_ordering_max_eig=float(eig[-1]),
        gram_trace=trace,
        floor_ordering_margins=tuple(float(x) for x in margins),
        sinr_deltas=tuple(float(x) for x in deltas),
        sinr_star=tuple(float(x) for x in g_star),
        strict_users=strict,
        verdict=verdict,
        failures=tuple(failures),
    )


def gram_difference(B_star, B_tilde):
    """``A* - A~`` via ``E E^H + W~ E^H + E W~^H`` with ``E = W* - W~``.

    Algebraically equal to subtracting the two Gram matrices, but free of the
    cancellation that swamps a weak common stream.
    """
    W_tilde = B_tilde.stacked()
    E = B_star.stacked() - W_tilde
    cross = W_tilde @ E.conj().T
    return E @ E.conj().T + cross + cross.conj().T


def floor_margin_closed_form(h_k, w_c, profile):
    """``m_r |h^H w_c|^2 + m_t (1 + m_r) h^H diag(w_c w_c^H) h``."""
    return profile.m_r * abs(np.vdot(h_k, w_c)) ** 2 + profile.m_t * (1.0 + profile.m_r) * float(
        np.sum(np.abs(h_k) ** 2 * np.abs(w_c) ** 2)
    )


@dataclass(frozen=True)
class SweepResult:
    delta_grid: tuple
    rsma_rate_mean: tuple
    rsma_rate_std: tuple
    sdma_rate_mean: float
    sdma_rate_std: float
    common_power_fraction: tuple
    trial_seeds: tuple
    rsma_rates: tuple = field(default=(), repr=False)
    sdma_rates: tuple = field(default=(), repr=False)
    common_fractions: tuple = field(default=(), repr=False)
    converged: tuple = field(default=(), repr=False)

    @property
    def gap(self):
        return np.asarray(self.rsma_rate_mean) - self.sdma_rate_mean

    def to_dict(self):
        return {
            "delta_grid": list(self.delta_grid),
            "rsma_rate_mean": list(self.rsma_rate_mean),
            "rsma_rate_std": list(self.rsma_rate_std),
            "sdma_rate_mean": self.sdma_rate_mean,
            "sdma_rate_std": self.sdma_rate_std,
            "common_power_fraction": list(self.common_power_fraction),
            "trial_seeds": list(self.trial_seeds),
            "rsma_rates": [list(r) for r in self.rsma_rates],
            "sdma_rates": list(self.sdma_rates),
            "common_fractions": [list(r) for r in self.common_fractions],
            "converged": [list(r) for r in self.converged],
        }

    @classmethod
    def from_dict(cls, data):
        tup = lambda rows: tuple(tuple(r) for r in rows)  # noqa: E731
        return cls(
            delta_grid=tuple(data["delta_grid"]),
            rsma_rate_mean=tuple(data["rsma_rate_mean"]),
            rsma_rate_std=tuple(data["rsma_rate_std"]),
            sdma_rate_mean=data["sdma_rate_mean"],
            sdma_rate_std=data["sdma_rate_std"],
            common_power_fraction=tuple(data["common_power_fraction"]),
            trial_seeds=tuple(data["trial_seeds"]),
            rsma_rates=tup(data.get("rsma_rates", ())),
            sdma_rates=tuple(data.get("sdma_rates", ())),
            common_fractions=tup(data.get("common_fractions", ())),
            converged=tup(data.get("converged", ())),
        )

    def csv_rows(self):
        rows = [["delta", "rsma_rate_mean", "rsma_rate_std", "sdma_rate_mean", "common_power_frac"]]
        for i, d in enumerate(self.delta_grid):
            rows.append([d, self.rsma_rate_mean[i], self.rsma_rate_std[i], self.sdma_rate_mean, self.common_power_fraction[i]])
        return rows


def _check_grid(delta_grid):
    grid = tuple(float(d) for d in delta_grid)
    if not grid:
        raise ValidationError("delta_grid must not be empty", "delta_grid")
    if any(not 0.0 <= d <= 1.0 for d in grid):
        raise ValidationError("delta_grid values must lie in [0, 1]", "delta_grid")
    return grid


def sweep_trial(topology, profile_base, delta_grid, config, p_max, master_seed, trial):
    """One trial of :func:`delta_sweep`: a fresh channel, RSMA at every delta, SDMA once.

    The instance seed is derived from ``(master_seed, trial, 0)`` and the
    optimizer seed from ``(master_seed, trial, 1)``; the optimizer seed is shared
    by every delta and by SDMA so the rate gap is a paired comparison.

    Every RSMA run is warm-started from the SDMA optimum, so RSMA never reports
    less than SDMA.  If an RSMA run finds private beamformers that SDMA missed,
    SDMA is re-polished from the zero-common versions of the RSMA optima and the
    RSMA runs are repeated from the improved SDMA point.
    """
    inst_seed = derive_seed(master_seed, trial, 0)
    opt_seed = derive_seed(master_seed, trial, 1)
    inst = generate_instance(topology, inst_seed)
    cfg = replace(config, seed=opt_seed)
    profiles = [profile_base.with_delta(d) for d in delta_grid]

    def rsma_pass(sdma):
        return [optimize_rsma(inst, prof, cfg, p_max=p_max, warm_starts=(sdma.best,)) for prof in profiles]

    sdma = optimize_sdma(inst, profile_base, cfg, p_max=p_max)
    runs = rsma_pass(sdma)
    polished = optimize_sdma(
        inst, profile_base, cfg, p_max=p_max, warm_starts=(sdma.best, *(zero_common(r.best) for r in runs))
    )
    if polished.objective > sdma.objective:
        sdma = polished
        runs = rsma_pass(sdma)

    return {
        "seed": inst_seed,
        "rsma": [compute_metrics(inst, r.best, prof).r_total for r, prof in zip(runs, profiles)],
        "sdma": compute_metrics(inst, sdma.best, profile_base).r_total,
        "fractions": [r.best.common_power / p_max for r in runs],
        "converged": [r.converged for r in runs] + [sdma.converged],
    }


def delta_sweep(topology, profile_base, delta_grid, trials, config, p_max=1.0, master_seed=None, mapper=map):
    """Optimized RSMA sum rate versus delta, against the delta-free SDMA optimum.

    ``master_seed`` defaults to ``config.seed``.  ``mapper`` may be a parallel
    ``map``; results are folded in trial order so the output never depends on it.
    """
    grid = _check_grid(delta_grid)
    if trials < 1:
        raise ValidationError("trials must be >= 1", "trials")
    master = config.seed if master_seed is None else master_seed
    job = partial(sweep_trial, topology, profile_base, grid, config, p_max, master)
    cells = list(mapper(job, range(trials)))
    return aggregate_sweep(grid, cells)


def aggregate_sweep(grid, cells):
    rsma = np.array([c["rsma"] for c in cells], dtype=float)
    sdma = np.array([c["sdma"] for c in cells], dtype=float)
    fracs = np.array([c["fractions"] for c in cells], dtype=float)
    return SweepResult(
        delta_grid=tuple(grid),
        rsma_rate_mean=tuple(float(x) for x in rsma.mean(axis=0)),
        rsma_rate_std=tuple(float(x) for x in rsma.std(axis=0)),
        sdma_rate_mean=float(sdma.mean()),
        sdma_rate_std=float(sdma.std()),
        common_power_fraction=tuple(float(x) for x in fracs.mean(axis=0)),
        trial_seeds=tuple(int(c["seed"]) for c in cells),
        rsma_rates=tuple(tuple(float(x) for x in row) for row in rsma),
        sdma_rates=tuple(float(x) for x in sdma),
        common_fractions=tuple(tuple(float(x) for x in row) for row in fracs),
        converged=tuple(tuple(bool(x) for x in c["converged"]) for c in cells),
    )


def degeneration_verdict(sweep, rel_tol=0.01):
    """Does the sweep show RSMA collapsing onto SDMA at delta = 1?

    Passes when the endpoint rate gap is within ``rel_tol`` of the SDMA rate,
    the endpoint common-power fraction is at most 2%, and the RSMA-SDMA gap
    trends down in delta (Spearman correlation at most -0.8).  A gap with no
    variation, or a grid with fewer than three points, has no trend to test and
    passes that check.
    """
    grid = np.asarray(sweep.delta_grid, dtype=float)
    hits = np.flatnonzero(grid == 1.0)
    if hits.size == 0:
        raise ValidationError("sweep must contain delta = 1", "delta_grid")
    i1 = int(hits[0])
    gap = sweep.gap
    endpoint_gap = float(abs(gap[i1]))
    endpoint_ok = endpoint_gap <= rel_tol * sweep.sdma_rate_mean
    frac = float(sweep.common_power_fraction[i1])
    frac_ok = frac <= COMMON_FRACTION_LIMIT
    if grid.size < 3 or np.ptp(gap) == 0.0:
        rho = None
        trend_ok = True
    else:
        rho = float(spearmanr(grid, gap).statistic)
        trend_ok = rho <= SPEARMAN_LIMIT
    return {
        "passed": bool(endpoint_ok and frac_ok and trend_ok),
        "endpoint_gap": endpoint_gap,
        "endpoint_gap_limit": rel_tol * sweep.sdma_rate_mean,
        "endpoint_ok": bool(endpoint_ok),
        "common_power_fraction": frac,
        "common_power_fraction_ok": bool(frac_ok),
        "spearman": rho,
        "spearman_limit": SPEARMAN_LIMIT,
        "trend_ok": bool(trend_ok),
        "gap": [float(g) for g in gap],
    }

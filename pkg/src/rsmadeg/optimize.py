"""Power-constrained utility maximization for RSMA and SDMA beamformers.

Beamformers are packed as ``W`` of shape ``(M, K + 1)`` with column 0 the
common stream.  Every SINR numerator and denominator is a sum of Hermitian
quadratic forms in the columns of ``W``, so each rate is a difference of
logs of such sums and the gradient comes out in closed form.

Gradients are returned as complex arrays ``dU/dRe(W) + 1j * dU/dIm(W)``.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations

import numpy as np

from .errors import DimensionError, ValidationError
from .link import LN2, BeamformerSet

STALL_PATIENCE = 10
MAX_BACKTRACKS = 60
ACTIVE_TOL = 1e-3
COMMON_START_FRACTION = 0.9
ORACLE_CHUNK = 1 << 15


class Utility(str, Enum):
    SUM_RATE_TOTAL = "sum_rate_total"
    SUM_RATE_PRIVATE_ONLY = "sum_rate_private_only"
    MIN_PRIVATE_SINR = "min_private_sinr"


@dataclass(frozen=True)
class OptimizerConfig:
    utility: Utility = Utility.SUM_RATE_TOTAL
    restarts: int = 8
    max_iters: int = 2000
    rel_tol: float = 1e-6
    armijo_beta: float = 0.5
    armijo_c: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "utility", Utility(self.utility))
        except ValueError:
            raise ValidationError(f"unknown utility {self.utility!r}", "utility") from None
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1", "restarts")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1", "max_iters")
        if not self.rel_tol > 0:
            raise ValidationError("rel_tol must be positive", "rel_tol")
        if not 0 < self.armijo_beta < 1:
            raise ValidationError("armijo_beta must lie in (0, 1)", "armijo_beta")
        if not 0 < self.armijo_c < 1:
            raise ValidationError("armijo_c must lie in (0, 1)", "armijo_c")

    def to_dict(self):
        return {
            "utility": self.utility.value,
            "restarts": self.restarts,
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "armijo_beta": self.armijo_beta,
            "armijo_c": self.armijo_c,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    best: BeamformerSet
    objective: float
    trace: list
    converged: bool
    restart_index: int

    def to_dict(self, thin_trace=False):
        trace = self.trace[::10] if thin_trace else self.trace
        return {
            "best": self.best.to_dict(),
            "objective": self.objective,
            "trace": [[int(i), float(v)] for i, v in trace],
            "converged": self.converged,
            "restart_index": self.restart_index,
        }


class _Problem:
    """Batched utility evaluation for one (instance, profile, utility) triple.

    All public methods accept ``W`` with shape ``(..., M, K + 1)``.
    """

    def __init__(self, h, profile, utility):
        self.h = np.asarray(h, dtype=complex)
        K, M = self.h.shape
        if profile.K != K:
            raise DimensionError("sigma_k_sq", (K,), (profile.K,))
        self.K, self.M = K, M
        self.utility = Utility(utility)
        self.hc = self.h.conj()
        self.h_abs2 = np.abs(self.h) ** 2
        self.m_r = profile.m_r
        self.m_td = profile.m_t * (1.0 + profile.m_r)
        self.noise = np.asarray(profile.sigma_sq_eff)
        d2 = profile.delta_sic**2
        ones = np.ones((K, K + 1))
        self.c_tot_c = ones.copy()
        self.c_int_c = ones.copy()
        self.c_int_c[:, 0] = 0.0
        self.c_tot_p = ones.copy()
        self.c_tot_p[:, 0] = d2
        self.c_int_p = self.c_tot_p.copy()
        self.c_int_p[np.arange(K), np.arange(K) + 1] = 0.0

    def _terms(self, W):
        Y = self.hc @ W  # (..., K, K+1): h_k^H w_j
        P = np.abs(Y) ** 2
        col_pow = np.sum(np.abs(W) ** 2, axis=-1)  # diag(A), (..., M)
        dist = self.m_r * P.sum(-1) + self.m_td * (col_pow @ self.h_abs2.T) + self.noise
        return Y, P, dist

    def _quad(self, P, dist, c):
        return (P * c).sum(-1) + dist

    def _quad_grad(self, W, Y, coef, weights):
        """Gradient of sum_k weights_k * (quadratic sum with coefficient row coef_k)."""
        Z = weights[..., :, None] * (coef + self.m_r) * Y
        diag_w = weights @ self.h_abs2  # (..., M)
        return 2.0 * (self.h.T @ Z + self.m_td * diag_w[..., :, None] * W)

    def sinr(self, W):
        _, P, dist = self._terms(W)
        gc = P[..., 0] / self._quad(P, dist, self.c_int_c)
        S = P[..., np.arange(self.K), np.arange(self.K) + 1]
        gp = S / self._quad(P, dist, self.c_int_p)
        return gc, gp

    def value(self, W):
        _, P, dist = self._terms(W)
        return self._value_from(P, dist)[0]

    def _value_from(self, P, dist):
        K = self.K
        if self.utility is Utility.MIN_PRIVATE_SINR:
            S = P[..., np.arange(K), np.arange(K) + 1]
            ip = self._quad(P, dist, self.c_int_p)
            gp = S / ip
            return gp.min(-1), (S, ip, gp)
        tp = self._quad(P, dist, self.c_tot_p)
        ip = self._quad(P, dist, self.c_int_p)
        rp = np.log(tp / ip) / LN2
        val = rp.sum(-1)
        extra = (tp, ip)
        if self.utility is Utility.SUM_RATE_TOTAL:
            tc = self._quad(P, dist, self.c_tot_c)
            ic = self._quad(P, dist, self.c_int_c)
            rc = np.log(tc / ic) / LN2
            val = val + rc.min(-1)
            extra = (tp, ip, tc, ic, rc)
        return val, extra

    def _pieces(self, W):
        """Value, gradient of the smooth part, and the min-type terms with their gradients.

        The utility is ``smooth + min_t term_t``; ``terms`` is ``None`` when the
        utility has no min (``sum_rate_private_only``).
        """
        Y, P, dist = self._terms(W)
        val, extra = self._value_from(P, dist)
        K = self.K
        eye = np.eye(K)
        Wt, Yt = W[..., None, :, :], Y[..., None, :, :]
        if self.utility is Utility.MIN_PRIVATE_SINR:
            S, ip, gp = extra
            # d(S/I) = dS/I - S dI/I^2; S carries no distortion terms
            c_sig = np.zeros((K, K + 1))
            c_sig[np.arange(K), np.arange(K) + 1] = 1.0
            Zs = (eye / ip[..., None, :])[..., None] * c_sig * Yt
            grads = 2.0 * (self.h.T @ Zs)
            grads = grads + self._quad_grad(Wt, Yt, self.c_int_p, -eye * (S / ip**2)[..., None, :])
            return val, np.zeros_like(W), gp, grads
        tp, ip = extra[0], extra[1]
        base = self._quad_grad(W, Y, self.c_tot_p, 1.0 / (LN2 * tp))
        base = base + self._quad_grad(W, Y, self.c_int_p, -1.0 / (LN2 * ip))
        if self.utility is not Utility.SUM_RATE_TOTAL:
            return val, base, None, None
        tc, ic, rc = extra[2], extra[3], extra[4]
        grads = self._quad_grad(Wt, Yt, self.c_tot_c, eye / (LN2 * tc[..., None, :]))
        grads = grads + self._quad_grad(Wt, Yt, self.c_int_c, -eye / (LN2 * ic[..., None, :]))
        return val, base, rc, grads

    def value_and_grad(self, W):
        """Gradient with min-type terms resolved to the minimal one (lowest index on ties)."""
        val, base, terms, grads = self._pieces(W)
        if terms is None:
            return val, base
        active = np.argmin(terms, axis=-1)
        pick = np.take_along_axis(grads, active[..., None, None, None], -3)[..., 0, :, :]
        return val, base + pick

    def value_and_direction(self, W, mask):
        """Steepest-ascent direction: min-norm element of the near-active gradient hull.

        Terms within ``ACTIVE_TOL`` (relative) of the minimum count as active.
        With one active term this is the plain gradient.
        """
        val, base, terms, grads = self._pieces(W)
        if terms is None:
            return val, base * mask
        G = (base[..., None, :, :] + grads) * mask
        lo = terms.min(-1, keepdims=True)
        active = terms <= lo + ACTIVE_TOL * np.abs(lo)
        flat = G.reshape(*G.shape[:-2], -1)
        Q = np.einsum("...ix,...jx->...ij", flat.conj(), flat).real
        lam = _min_norm_weights(Q, active)
        return val, np.einsum("...t,...tmj->...mj", lam, G)


def _simplex_project(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    j = np.arange(1, v.shape[-1] + 1)
    rho = np.sum(u - css / j > 0, axis=-1, keepdims=True)
    theta = np.take_along_axis(css, rho - 1, -1) / rho
    return np.maximum(v - theta, 0.0)


def _min_norm_weights(Q, active, iters=200):
    """Simplex weights ``lam`` (zero off ``active``) minimising ``lam^T Q lam``.

    One or two active terms are solved in closed form, more by projected gradient.
    """
    n = active.sum(-1)
    lam = np.where(active, 1.0 / n[..., None], 0.0)
    for idx in zip(*np.nonzero(n == 2)):
        i, j = np.flatnonzero(active[idx])
        q = Q[idx]
        curv = q[i, i] + q[j, j] - 2.0 * q[i, j]
        t = np.clip((q[j, j] - q[i, j]) / curv, 0.0, 1.0) if curv > 0 else 0.5
        lam[idx] = 0.0
        lam[idx + (i,)], lam[idx + (j,)] = t, 1.0 - t
    many = n > 2
    if np.any(many):
        Qm, am, lm = Q[many], active[many], lam[many]
        step = 1.0 / np.maximum(np.trace(Qm, axis1=-2, axis2=-1), np.finfo(float).tiny)[..., None]
        for _ in range(iters):
            v = lm - step * np.einsum("...ij,...j->...i", Qm, lm)
            lm = _simplex_project(np.where(am, v, -1e300))
        lam[many] = lm
    return lam


def _power(W):
    return np.sum(np.abs(W) ** 2, axis=(-2, -1))


def _project(W, p_max):
    power = _power(W)
    scale = np.where(power > p_max, np.sqrt(p_max / np.where(power > 0, power, 1.0)), 1.0)
    return W * scale[..., None, None]


def project_power(B, p_max=None):
    """Radial projection onto the ball ``||w_c||^2 + sum ||w_k||^2 <= p_max``."""
    p_max = B.p_max if p_max is None else float(p_max)
    if not p_max > 0:
        raise ValidationError("p_max must be positive", "p_max")
    total = B.total_power
    if total <= p_max:
        return B if p_max == B.p_max else BeamformerSet(B.w_c, B.w, p_max)
    s = math.sqrt(p_max / total)
    return BeamformerSet(w_c=B.w_c * s, w=B.w * s, p_max=p_max)


def _as_stacked(B, K, M):
    if B.w_c.shape != (M,):
        raise DimensionError("w_c", (M,), B.w_c.shape)
    if B.w.shape != (K, M):
        raise DimensionError("w", (K, M), B.w.shape)
    return B.stacked()


def evaluate_utility(instance, B, profile, utility):
    """Utility value of a single beamformer set."""
    prob = _Problem(instance.h, profile, utility)
    return float(prob.value(_as_stacked(B, prob.K, prob.M)))


def utility_gradient(instance, B, profile, utility):
    """Ascent direction of ``utility`` at ``B``.

    Returns a :class:`BeamformerSet`-shaped pair ``(g_c, g)`` where each entry
    is ``dU/dRe + 1j * dU/dIm``.  Min-type utilities use the gradient of the
    currently minimal term (ties go to the lowest user index).
    """
    prob = _Problem(instance.h, profile, utility)
    _, grad = prob.value_and_grad(_as_stacked(B, prob.K, prob.M))
    return grad[:, 0].copy(), grad[:, 1:].T.copy()


def matched_filter_start(h, p_max, common=True):
    """``w_k`` along ``h_k`` and ``w_c`` along the mean channel, equal power per stream."""
    K, M = h.shape
    W = np.zeros((M, K + 1), dtype=complex)
    streams = K + 1 if common else K
    per = p_max / streams
    for k in range(K):
        n = np.linalg.norm(h[k])
        if n > 0:
            W[:, k + 1] = h[k] / n * math.sqrt(per)
    if common:
        mean = h.sum(axis=0) / K
        n = np.linalg.norm(mean)
        if n > 0:
            W[:, 0] = mean / n * math.sqrt(per)
    return W


def common_dominant_start(h, p_max, fraction=COMMON_START_FRACTION):
    """``w_c`` along the strongest joint direction of all users carrying ``fraction`` of
    the power; each ``w_k`` along ``h_k`` with an equal share of the rest.

    Lands in the common-stream basin that random starts miss when channels are
    strongly correlated.
    """
    K, M = h.shape
    W = np.zeros((M, K + 1), dtype=complex)
    # v maximises sum_k |h_k^H v|^2
    W[:, 0] = np.linalg.svd(h.conj())[2][0].conj() * math.sqrt(fraction * p_max)
    per = (1.0 - fraction) * p_max / K
    for k in range(K):
        n = np.linalg.norm(h[k])
        if n > 0:
            W[:, k + 1] = h[k] / n * math.sqrt(per)
    return W


def _random_start(rng, M, K, p_max, common):
    W = (rng.standard_normal((M, K + 1)) + 1j * rng.standard_normal((M, K + 1))) / math.sqrt(2.0)
    if not common:
        W[:, 0] = 0.0
    return W * math.sqrt(p_max / _power(W))


def _ascend(prob, W0, p_max, config, mask, callback=None):
    """Projected gradient ascent with Armijo backtracking, run in lockstep over starts.

    ``W0`` has shape ``(R, M, K + 1)``.  Each start keeps its own step, trace and
    stopping state; the batch only shares array operations.
    """
    R = W0.shape[0]
    W = _project(W0 * mask, p_max)
    f, g = prob.value_and_direction(W, mask)
    traces = [[(0, float(v))] for v in f]
    stall = np.zeros(R, dtype=int)
    active = np.ones(R, dtype=bool)
    converged = np.zeros(R, dtype=bool)
    for it in range(1, config.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Wa, fa, ga = W[idx], f[idx], g[idx]
        step = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        W_new = Wa.copy()
        f_new = fa.copy()
        pending = np.arange(idx.size)
        for _ in range(MAX_BACKTRACKS):
            cand = _project(Wa[pending] + step[pending, None, None] * ga[pending], p_max)
            fc = prob.value(cand)
            moved = np.sum((ga[pending].conj() * (cand - Wa[pending])).real, axis=(-2, -1))
            ok = fc >= fa[pending] + config.armijo_c * moved
            good = pending[ok]
            W_new[good] = cand[ok]
            f_new[good] = fc[ok]
            accepted[good] = True
            pending = pending[~ok]
            if pending.size == 0:
                break
            step[pending] *= config.armijo_beta
        improve = (f_new - fa) / np.maximum(np.abs(fa), np.finfo(float).tiny)
        small = ~accepted | (improve < config.rel_tol)
        for j, r in enumerate(idx):
            if accepted[j]:
                traces[r].append((it, float(f_new[j])))
        stall[idx] = np.where(small, stall[idx] + 1, 0)
        if np.any(accepted):
            acc = idx[accepted]
            W[acc] = W_new[accepted]
            f[acc], g[acc] = prob.value_and_direction(W[acc], mask)
        if callback is not None:
            callback(it, W)
        done = stall[idx] >= STALL_PATIENCE
        converged[idx[done]] = True
        active[idx[done]] = False
    return W, f, traces, converged


def _optimize(instance, profile, config, p_max, common, warm_starts=(), callback=None):
    if not p_max > 0:
        raise ValidationError("p_max must be positive", "p_max")
    K, M = instance.h.shape
    prob = _Problem(instance.h, profile, config.utility)
    starts = [matched_filter_start(instance.h, p_max, common=common)]
    for r in range(1, config.restarts + 1):
        rng = np.random.default_rng([config.seed, r])
        starts.append(_random_start(rng, M, K, p_max, common))
    if common:
        starts.append(common_dominant_start(instance.h, p_max))
    for B in warm_starts:
        starts.append(_as_stacked(B, K, M))
    mask = np.ones((M, K + 1))
    if not common:
        mask[:, 0] = 0.0
    W, f, traces, converged = _ascend(prob, np.array(starts), p_max, config, mask, callback)
    best = int(np.argmax(f))  # first maximum: lowest restart index
    return OptimizationResult(
        best=BeamformerSet.from_stacked(W[best], p_max),
        objective=float(f[best]),
        trace=traces[best],
        converged=bool(converged[best]),
        restart_index=best,
    )


def optimize_rsma(instance, profile, config, p_max=1.0, warm_starts=(), callback=None):
    """Maximize the configured utility over ``w_c`` and all ``w_k``.

    Starts are the matched-filter point (restart index 0), ``config.restarts``
    random feasible points seeded from ``(config.seed, restart_index)``, the
    common-dominant point, then any ``warm_starts`` (e.g. an SDMA optimum, so
    RSMA can never end below it).  Min-type utilities ascend along the min-norm
    element of the near-active gradient hull.
    """
    return _optimize(instance, profile, config, float(p_max), True, warm_starts, callback)


def optimize_sdma(instance, profile, config, p_max=1.0, warm_starts=(), callback=None):
    """As :func:`optimize_rsma` with ``w_c`` removed from the search space.

    There is no common-dominant start, and the common column of any warm start
    is discarded.
    """
    return _optimize(instance, profile, config, float(p_max), False, warm_starts, callback)


def _oracle_chunk(rng, M, K, p_max, common):
    S = K + 1
    D = rng.standard_normal((ORACLE_CHUNK, M, S)) + 1j * rng.standard_normal((ORACLE_CHUNK, M, S))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    alpha = rng.dirichlet(np.ones(S if common else K), size=ORACLE_CHUNK)
    if not common:
        alpha = np.column_stack([np.zeros(ORACLE_CHUNK), alpha])
    return D * np.sqrt(alpha * p_max)[:, None, :]


def random_search_oracle(instance, profile, utility, samples, seed, p_max=1.0, common=True):
    """Best of ``samples`` random full-power beamformer sets.

    Directions are complex Gaussian, power fractions uniform on the simplex over
    the ``K + 1`` streams (``K`` when ``common`` is false).  Draws are generated
    in fixed-size chunks so a smaller ``samples`` sees a prefix of a larger one.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1", "samples")
    K, M = instance.h.shape
    prob = _Problem(instance.h, profile, utility)
    rng = np.random.default_rng(seed)
    best_val, best_W = -np.inf, None
    remaining = samples
    while remaining > 0:
        W = _oracle_chunk(rng, M, K, p_max, common)[: min(remaining, ORACLE_CHUNK)]
        vals = prob.value(W)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_W = float(vals[i]), W[i]
        remaining -= W.shape[0]
    return BeamformerSet.from_stacked(best_W, p_max)


def simplex_grid(parts, grid_points):
    """All fraction vectors with ``parts`` entries on ``{0, 1/(g-1), ...}`` summing to one."""
    n = grid_points - 1
    rows = []
    # stars and bars, lexicographic in the first coordinate
    for bars in combinations(range(n + parts - 1), parts - 1):
        edges = (-1, *bars, n + parts - 1)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(parts)])
    return np.array(rows, dtype=float) / n


@dataclass(frozen=True, eq=False)
class PowerSplitResult:
    fractions: np.ndarray
    objective: float
    grid: np.ndarray = field(repr=False)
    surface: np.ndarray = field(repr=False)

    @property
    def common_fraction(self):
        return float(self.fractions[0])

    def to_dict(self):
        return {
            "fractions": self.fractions.tolist(),
            "objective": self.objective,
            "grid": self.grid.tolist(),
            "surface": self.surface.tolist(),
        }


def mrt_directions(h):
    """Unit directions: ``h_k / ||h_k||`` per user and the normalized channel sum for ``w_c``."""
    K, M = h.shape
    D = np.empty((M, K + 1), dtype=complex)
    s = h.sum(axis=0)
    D[:, 0] = s / np.linalg.norm(s)
    D[:, 1:] = (h / np.linalg.norm(h, axis=1, keepdims=True)).T
    return D


def power_split_oracle(instance, profile, directions, grid_points, utility=Utility.SUM_RATE_PRIVATE_ONLY, p_max=1.0):
    """Exhaustive search over power fractions with fixed beam directions.

    ``directions`` is ``(M, K + 1)`` with unit-norm columns (column 0 for
    ``w_c``).  Returns the best fractions plus the whole evaluated surface.
    """
    if grid_points < 2:
        raise ValidationError("grid_points must be >= 2", "grid_points")
    K, M = instance.h.shape
    D = np.asarray(directions, dtype=complex)
    if D.shape != (M, K + 1):
        raise DimensionError("directions", (M, K + 1), D.shape)
    if not np.allclose(np.linalg.norm(D, axis=0), 1.0, rtol=0, atol=1e-9):
        raise ValidationError("directions must have unit-norm columns", "directions")
    grid = simplex_grid(K + 1, grid_points)
    prob = _Problem(instance.h, profile, utility)
    surface = prob.value(D[None, :, :] * np.sqrt(grid * p_max)[:, None, :])
    i = int(np.argmax(surface))
    return PowerSplitResult(fractions=grid[i], objective=float(surface[i]), grid=grid, surface=surface)


def with_utility(config, utility):
    return replace(config, utility=Utility(utility))

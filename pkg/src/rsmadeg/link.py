"""SINRs, distortion floors and rates for one beamformer set.

Hardware distortion enters only through second-order statistics: with
``A = w_c w_c^H + sum_k w_k w_k^H`` the floor seen by user ``k`` is

    Phi_c = m_r h^H A h + m_t (1 + m_r) h^H diag(A) h + (1 + m_r) sigma_k^2

and imperfect SIC leaves ``delta^2 |h^H w_c|^2`` on top of it for the
private stream.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, ValidationError
from .serialize import decode_complex, encode_complex

LN2 = math.log(2.0)
HERMITIAN_IMAG_TOL = 1e-12
POWER_REL_TOL = 1e-9


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ImpairmentProfile:
    """Hardware-impairment ratios, per-user noise and the SIC residual.

    ``m_t = 0`` / ``m_r = 0`` are accepted for ideal-hardware baselines.
    """

    m_t: float
    m_r: float
    sigma_k_sq: tuple
    delta_sic: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sigma_k_sq", tuple(float(s) for s in np.atleast_1d(self.sigma_k_sq)))
        if not 0.0 <= self.m_t < 1.0:
            raise ValidationError(f"m_t must lie in [0, 1), got {self.m_t}", "m_t")
        if not 0.0 <= self.m_r < 1.0:
            raise ValidationError(f"m_r must lie in [0, 1), got {self.m_r}", "m_r")
        if not 0.0 <= self.delta_sic <= 1.0:
            raise ValidationError(f"delta_sic must lie in [0, 1], got {self.delta_sic}", "delta_sic")
        if not self.sigma_k_sq or any(not (s > 0 and math.isfinite(s)) for s in self.sigma_k_sq):
            raise ValidationError("sigma_k_sq entries must be positive and finite", "sigma_k_sq")

    @property
    def K(self):
        return len(self.sigma_k_sq)

    @property
    def sigma_sq_eff(self):
        return tuple((1.0 + self.m_r) * s for s in self.sigma_k_sq)

    @property
    def ideal(self):
        return self.m_t == 0.0 and self.m_r == 0.0

    def with_delta(self, delta_sic):
        return replace(self, delta_sic=float(delta_sic))

    def to_dict(self):
        return {
            "m_t": self.m_t,
            "m_r": self.m_r,
            "sigma_k_sq": list(self.sigma_k_sq),
            "delta_sic": self.delta_sic,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            m_t=float(data["m_t"]),
            m_r=float(data["m_r"]),
            sigma_k_sq=tuple(data["sigma_k_sq"]),
            delta_sic=float(data.get("delta_sic", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Common beamformer ``w_c`` (shape ``(M,)``) and private ones ``w`` (``(K, M)``).

    Feasibility is not enforced on construction so that infeasible points can be
    handed to :func:`rsmadeg.optimize.project_power`; see :meth:`is_feasible`.
    """

    w_c: np.ndarray
    w: np.ndarray
    p_max: float

    def __post_init__(self):
        w_c = np.array(self.w_c, dtype=complex)
        w = np.array(self.w, dtype=complex)
        if w_c.ndim != 1:
            raise DimensionError("w_c", "(M,)", w_c.shape)
        if w.ndim != 2 or w.shape[1] != w_c.shape[0]:
            raise DimensionError("w", ("K", w_c.shape[0]), w.shape)
        if not self.p_max > 0:
            raise ValidationError(f"p_max must be positive, got {self.p_max}", "p_max")
        w_c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "w_c", w_c)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p_max", float(self.p_max))

    @property
    def M(self):
        return self.w_c.shape[0]

    @property
    def K(self):
        return self.w.shape[0]

    @property
    def total_power(self):
        return float(np.vdot(self.w_c, self.w_c).real + np.vdot(self.w, self.w).real)

    @property
    def common_power(self):
        return float(np.vdot(self.w_c, self.w_c).real)

    def is_feasible(self, rel_tol=POWER_REL_TOL):
        return self.total_power <= self.p_max * (1.0 + rel_tol)

    def stacked(self):
        """``(M, K + 1)`` matrix whose column 0 is ``w_c``."""
        return np.column_stack([self.w_c, self.w.T])

    @classmethod
    def from_stacked(cls, W, p_max):
        W = np.asarray(W)
        return cls(w_c=W[:, 0], w=W[:, 1:].T, p_max=p_max)

    def to_dict(self):
        return {"w_c": encode_complex(self.w_c), "w": encode_complex(self.w), "p_max": self.p_max}

    @classmethod
    def from_dict(cls, data):
        return cls(w_c=decode_complex(data["w_c"]), w=decode_complex(data["w"]), p_max=float(data["p_max"]))


@dataclass(frozen=True, eq=False)
class LinkMetrics:
    phi_c: np.ndarray
    phi_p: np.ndarray
    gamma_c: np.ndarray
    gamma_p: np.ndarray
    r_c_k: np.ndarray
    r_p_k: np.ndarray
    r_c: float = field(init=False)
    r_total: float = field(init=False)

    PER_USER = ("phi_c", "phi_p", "gamma_c", "gamma_p", "r_c_k", "r_p_k")

    def __post_init__(self):
        for name in self.PER_USER:
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        r_c = float(np.min(self.r_c_k))
        object.__setattr__(self, "r_c", r_c)
        object.__setattr__(self, "r_total", r_c + float(np.sum(self.r_p_k)))

    def to_dict(self):
        out = {name: getattr(self, name).tolist() for name in self.PER_USER}
        out["r_c"] = self.r_c
        out["r_total"] = self.r_total
        return out

    def csv_rows(self):
        """Header plus one row per user and a trailing summary row."""
        header = ["user", *self.PER_USER, "r_c", "r_total"]
        rows = [header]
        for k in range(len(self.phi_c)):
            rows.append([k + 1, *(float(getattr(self, n)[k]) for n in self.PER_USER), "", ""])
        rows.append(["summary", *([""] * len(self.PER_USER)), self.r_c, self.r_total])
        return rows


def _real_form(value, scale):
    """Real part of a Hermitian quadratic form; the imaginary residue must be negligible."""
    if abs(value.imag) > HERMITIAN_IMAG_TOL * max(scale, abs(value), np.finfo(float).tiny):
        raise NumericalError(f"Hermitian form has imaginary part {value.imag:.3e}")
    return float(value.real)


def rate(gamma):
    """``log2(1 + gamma)`` without losing precision for tiny ``gamma``."""
    return np.log1p(gamma) / LN2


def aggregate_gram(B):
    """``A = w_c w_c^H + sum_k w_k w_k^H`` (Hermitian, PSD)."""
    W = B.stacked()
    return W @ W.conj().T


def distortion_forms(h_k, A):
    """The two quadratic forms in the floor: ``h^H A h`` and ``h^H diag(A) h``."""
    h_k = np.asarray(h_k, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if A.shape != (h_k.shape[0],) * 2:
        raise DimensionError("A", (h_k.shape[0],) * 2, A.shape)
    scale = float(np.vdot(h_k, h_k).real) * float(np.linalg.norm(A))
    full = _real_form(np.vdot(h_k, A @ h_k), scale)
    diag = float(np.sum(np.abs(h_k) ** 2 * np.diag(A).real))
    return full, diag


def phi_c(h_k, A, profile, k):
    """Distortion-plus-noise floor for decoding the common stream at user ``k``."""
    full, diag = distortion_forms(h_k, A)
    return profile.m_r * full + profile.m_t * (1.0 + profile.m_r) * diag + profile.sigma_sq_eff[k]


def phi_p(h_k, w_c, phi_c_val, delta_sic):
    """Private-stream floor: the common-stream SIC residue added to ``phi_c_val``."""
    leak = abs(np.vdot(h_k, w_c)) ** 2
    return delta_sic**2 * leak + phi_c_val


def _private_leakage(h_k, B):
    return np.abs(B.w.conj() @ h_k) ** 2


def sinr_common(h_k, B, profile, k):
    """Common-stream SINR; every private stream (including user k's own) interferes."""
    h_k = np.asarray(h_k, dtype=complex)
    floor = phi_c(h_k, aggregate_gram(B), profile, k)
    return abs(np.vdot(h_k, B.w_c)) ** 2 / (float(np.sum(_private_leakage(h_k, B))) + floor)


def sinr_private(h_k, B, profile, k):
    """Private-stream SINR of user ``k`` after imperfect SIC of the common stream."""
    h_k = np.asarray(h_k, dtype=complex)
    leak = _private_leakage(h_k, B)
    floor = phi_c(h_k, aggregate_gram(B), profile, k)
    interference = float(np.sum(leak)) - leak[k]
    return leak[k] / (interference + phi_p(h_k, B.w_c, floor, profile.delta_sic))


def _check_consistent(instance, B, profile):
    K, M = instance.h.shape
    if B.w_c.shape != (M,):
        raise DimensionError("w_c", (M,), B.w_c.shape)
    if B.w.shape != (K, M):
        raise DimensionError("w", (K, M), B.w.shape)
    if profile.K != K:
        raise DimensionError("sigma_k_sq", (K,), (profile.K,))


def compute_metrics(instance, B, profile):
    """Per-user floors, SINRs and rates plus the common rate and sum rate."""
    _check_consistent(instance, B, profile)
    A = aggregate_gram(B)
    cols = {name: [] for name in LinkMetrics.PER_USER}
    for k, h_k in enumerate(instance.h):
        floor_c = phi_c(h_k, A, profile, k)
        floor_p = phi_p(h_k, B.w_c, floor_c, profile.delta_sic)
        leak = _private_leakage(h_k, B)
        total_private = float(np.sum(leak))
        g_c = abs(np.vdot(h_k, B.w_c)) ** 2 / (total_private + floor_c)
        g_p = leak[k] / (total_private - leak[k] + floor_p)
        cols["phi_c"].append(floor_c)
        cols["phi_p"].append(floor_p)
        cols["gamma_c"].append(g_c)
        cols["gamma_p"].append(g_p)
        cols["r_c_k"].append(rate(g_c))
        cols["r_p_k"].append(rate(g_p))
    return LinkMetrics(**cols)


def sdma_metrics(instance, w, profile):
    """Conventional SDMA evaluation: private streams only, no common stream at all."""
    w = np.asarray(w, dtype=complex)
    K, M = instance.h.shape
    if w.shape != (K, M):
        raise DimensionError("w", (K, M), w.shape)
    A = w.T @ w.conj()
    floors, gammas = [], []
    for k, h_k in enumerate(instance.h):
        gains = np.abs(w.conj() @ h_k) ** 2
        floor = phi_c(h_k, A, profile, k)
        floors.append(floor)
        gammas.append(gains[k] / (float(np.sum(np.delete(gains, k))) + floor))
    gammas = np.array(gammas)
    r_p = rate(gammas)
    return LinkMetrics(
        phi_c=floors,
        phi_p=floors,
        gamma_c=np.zeros(K),
        gamma_p=gammas,
        r_c_k=np.zeros(K),
        r_p_k=r_p,
    )

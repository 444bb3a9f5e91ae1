"""RIS-cascaded channel model.

The BS reaches user ``k`` only through the RIS (direct links are blocked), so
the effective channel obeys ``h_k^H = f_k^H diag(conj(phi)) G``.  The phase
matrix is never built; ``conj(phi)`` is applied elementwise.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .serialize import decode_complex, encode_complex

UNIT_MODULUS_TOL = 1e-12


@dataclass(frozen=True)
class Topology:
    """Antenna, RIS-element and user counts."""

    M: int
    N: int
    K: int

    def __post_init__(self):
        for name in ("M", "N", "K"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValidationError(f"{name} must be an integer, got {value!r}", name)
            if value < 1:
                raise ValidationError(f"{name} must be >= 1, got {value}", name)

    def to_dict(self):
        return {"M": int(self.M), "N": int(self.N), "K": int(self.K)}


def _check_unit_modulus(phi):
    if not np.all(np.abs(np.abs(phi) - 1.0) <= UNIT_MODULUS_TOL):
        raise ValidationError("RIS coefficients phi must have unit modulus", "phi")


def cascaded_channel(G, f_k, phi):
    """Effective BS-to-user channel through the RIS.

    Args:
        G: BS-to-RIS channel, shape ``(N, M)``.
        f_k: RIS-to-user channel, shape ``(N,)``.
        phi: unit-modulus RIS reflection coefficients, shape ``(N,)``.

    Returns:
        ``h_k`` of shape ``(M,)`` such that ``h_k.conj() == f_k^H diag(conj(phi)) G``.
    """
    G = np.asarray(G, dtype=complex)
    f_k = np.asarray(f_k, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    if G.ndim != 2:
        raise DimensionError("G", "2-D array (N, M)", G.shape)
    N = G.shape[0]
    if f_k.shape != (N,):
        raise DimensionError("f_k", (N,), f_k.shape)
    if phi.shape != (N,):
        raise DimensionError("phi", (N,), phi.shape)
    _check_unit_modulus(phi)
    # h = G^H diag(phi) f  <=>  h^H = f^H diag(conj(phi)) G
    return G.conj().T @ (phi * f_k)


@dataclass(frozen=True)
class RayleighModel:
    """i.i.d. CN(0, 1) entries for G and every f_k."""

    name: str = "rayleigh"

    def sample(self, rng, topology):
        def cn(shape):
            return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

        G = cn((topology.N, topology.M))
        f = cn((topology.K, topology.N))
        return G, f


@dataclass(frozen=True, eq=False)
class ChannelInstance:
    """One channel realization.  ``h`` is derived on construction.

    ``f`` has shape ``(K, N)`` and ``h`` has shape ``(K, M)``; row ``k`` holds
    the column vector ``h_k``.
    """

    G: np.ndarray
    f: np.ndarray
    phi: np.ndarray
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        G = np.array(self.G, dtype=complex)
        f = np.array(self.f, dtype=complex)
        phi = np.array(self.phi, dtype=complex)
        if G.ndim != 2:
            raise DimensionError("G", "2-D array (N, M)", G.shape)
        if f.ndim != 2 or f.shape[1] != G.shape[0]:
            raise DimensionError("f", ("K", G.shape[0]), f.shape)
        h = np.array([cascaded_channel(G, f_k, phi) for f_k in f])
        for name, arr in (("G", G), ("f", f), ("phi", phi), ("h", h)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def topology(self):
        return Topology(M=self.G.shape[1], N=self.G.shape[0], K=self.f.shape[0])

    def to_dict(self):
        return {"G": encode_complex(self.G), "f": encode_complex(self.f), "phi": encode_complex(self.phi)}

    @classmethod
    def from_dict(cls, data):
        # h is recomputed, never read back
        return cls(G=decode_complex(data["G"]), f=decode_complex(data["f"]), phi=decode_complex(data["phi"]))


def generate_instance(topology, seed, model=RayleighModel()):
    """Draw a reproducible channel instance.

    The same ``seed`` always yields a bit-identical instance; ``phi`` is uniform
    on the unit circle.
    """
    rng = np.random.default_rng(seed)
    G, f = model.sample(rng, topology)
    phi = np.exp(2j * np.pi * rng.random(topology.N))
    return ChannelInstance(G=G, f=f, phi=phi)

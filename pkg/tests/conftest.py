import numpy as np
import pytest

from rsmadeg import BeamformerSet, ImpairmentProfile, Topology, evaluate_utility, generate_instance


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_beamformers(rng, M, K, p_max=1.0, fill=None):
    """Feasible beamformers: Gaussian directions, random simplex split, total power fill * p_max."""
    D = crandn(rng, M, K + 1)
    D /= np.linalg.norm(D, axis=0)
    alpha = rng.dirichlet(np.ones(K + 1))
    fill = rng.uniform(0.2, 1.0) if fill is None else fill
    return BeamformerSet.from_stacked(D * np.sqrt(alpha * p_max * fill), p_max)


def random_profile(rng, K, delta=None):
    return ImpairmentProfile(
        m_t=float(rng.uniform(0, 0.2)),
        m_r=float(rng.uniform(0, 0.2)),
        sigma_k_sq=tuple(rng.uniform(0.1, 2.0, K)),
        delta_sic=float(rng.uniform(0, 1)) if delta is None else delta,
    )


def random_case(rng, K=None, M=None, N=None, delta=None):
    K = K or int(rng.integers(1, 4))
    M = M or int(rng.integers(1, 5))
    N = N or int(rng.integers(1, 9))
    inst = generate_instance(Topology(M, N, K), int(rng.integers(2**63)))
    return inst, random_beamformers(rng, M, K), random_profile(rng, K, delta)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def fd_gradient(instance, B, profile, utility, step=1e-6):
    """Central finite differences of the utility over Re/Im of every beamformer entry."""
    W = B.stacked()
    G = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        parts = []
        for d in (1.0, 1j):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += step * d
            Wm[idx] -= step * d
            fp = evaluate_utility(instance, BeamformerSet.from_stacked(Wp, B.p_max), profile, utility)
            fm = evaluate_utility(instance, BeamformerSet.from_stacked(Wm, B.p_max), profile, utility)
            parts.append((fp - fm) / (2 * step))
        G[idx] = parts[0] + 1j * parts[1]
    return G


def gradient_rel_errors(analytic, numeric, floor=1e-6):
    """Per-coordinate relative error over Re and Im parts.

    Coordinates whose true derivative is below ``floor`` times the largest one
    are compared against that floor instead of their own magnitude.
    """
    a = np.concatenate([analytic.real.ravel(), analytic.imag.ravel()])
    n = np.concatenate([numeric.real.ravel(), numeric.imag.ravel()])
    scale = np.maximum(np.abs(a), floor * np.abs(a).max())
    return np.abs(a - n) / scale

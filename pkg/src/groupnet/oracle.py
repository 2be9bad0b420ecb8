"""Brute-force references for tiny instances.

These enumerate the latent indicators outright, so they are exponential in
N*K and capped accordingly.  They exist to check the analytic code paths:
the marginal network likelihood, its expectation-of-log lower bound, and
the polynomial stand-in for the non-edge log term.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .datatypes import Dataset, ModelState
from .errors import UsageError
from .model import pair_expectation

__all__ = ["oracle_exact_loglik", "jensen_bound", "exact_nonedge_term",
           "taylor_nonedge_term"]

_ENUM_BITS = 16
_CHUNK = 4096


def _all_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def oracle_exact_loglik(state: ModelState, data: Dataset,
                        pairs: Optional[list] = None) -> float:
    """log of the exact marginal network likelihood, sum over every
    indicator assignment of P(A | Z, affinities) * P(Z | memberships).

    pairs optionally restricts which ordered pairs' likelihood factors are
    scored (default: all off-diagonal pairs).  Non-edges use the exact
    log(1-p), no surrogate.
    """
    phi = state.memberships.phi
    theta = state.affinities.theta
    n, k_groups = phi.shape
    bits = n * k_groups
    if bits > _ENUM_BITS:
        raise UsageError(
            f"enumeration needs N*K <= {_ENUM_BITS}, got {bits}")
    if pairs is None:
        pairs = _all_pairs(n)

    log_phi = np.log(phi).ravel()
    log_del = np.log(1.0 - phi).ravel()
    shifts = np.arange(bits, dtype=np.uint32)
    total = 1 << bits
    parts = []
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.uint32)
        z_flat = ((codes[:, None] >> shifts) & 1).astype(np.int64)
        logp = z_flat @ log_phi + (1 - z_flat) @ log_del
        z = z_flat.reshape(-1, n, k_groups)
        for i, j in pairs:
            p = np.ones(len(codes))
            for k in range(k_groups):
                p *= theta[k][z[:, i, k], z[:, j, k]]
            logp += np.log(p) if data.adjacency[i, j] else np.log1p(-p)
        parts.append(logsumexp(logp))
    return float(logsumexp(parts))


def _pair_combos(phi_i: np.ndarray, phi_j: np.ndarray, theta: np.ndarray):
    """All 4^K joint indicator outcomes of one ordered pair: their
    probabilities and the resulting edge probability."""
    k_groups = phi_i.shape[0]
    codes = np.arange(1 << k_groups)
    zbits = (codes[:, None] >> np.arange(k_groups)) & 1   # (2^K, K)
    w_i = np.prod(np.where(zbits == 1, phi_i, 1.0 - phi_i), axis=1)
    w_j = np.prod(np.where(zbits == 1, phi_j, 1.0 - phi_j), axis=1)
    weights = np.outer(w_i, w_j).ravel()
    src = np.repeat(codes, len(codes))
    dst = np.tile(codes, len(codes))
    probs = np.ones(len(codes) ** 2)
    for k in range(k_groups):
        probs *= theta[k][zbits[src, k], zbits[dst, k]]
    return weights, probs


def exact_nonedge_term(state: ModelState, i: int, j: int) -> float:
    """E[log(1 - p_ij)] by joint enumeration of the pair's indicators."""
    phi = state.memberships.phi
    weights, probs = _pair_combos(phi[i], phi[j], state.affinities.theta)
    return float(weights @ np.log1p(-probs))


def taylor_nonedge_term(state: ModelState, i: int, j: int) -> float:
    """The polynomial surrogate -E[p] - E[p^2]/2 for the same quantity."""
    phi = state.memberships.phi
    weights, probs = _pair_combos(phi[i], phi[j], state.affinities.theta)
    return float(-(weights @ probs) - 0.5 * (weights @ probs ** 2))


def jensen_bound(state: ModelState, data: Dataset,
                 pairs: Optional[list] = None) -> float:
    """E[log P(A | Z)] under independent indicators: the expectation-of-log
    lower bound on the marginal likelihood, with exact non-edge terms."""
    phi = state.memberships.phi
    theta = state.affinities.theta
    n, k_groups = phi.shape
    if pairs is None:
        pairs = _all_pairs(n)
    log_theta = np.log(theta)
    total = 0.0
    for i, j in pairs:
        if data.adjacency[i, j]:
            total += sum(pair_expectation(phi[i, k], phi[j, k], log_theta[k])
                         for k in range(k_groups))
        else:
            total += exact_nonedge_term(state, i, j)
    return float(total)

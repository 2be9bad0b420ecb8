"""Link and feature probability algebra plus the surrogate objective.

The edge probability of an ordered pair (i, j) is the product over groups of
a 2 x 2 affinity entry selected by the endpoints' latent binary indicators.
With indicators marginalized against independent Bernoulli memberships, every
expectation over a per-group table f reduces to the four-term form

    E f(z_i, z_j) = phi_i phi_j f[1,1] + phi_i (1-phi_j) f[1,0]
                    + (1-phi_i) phi_j f[0,1] + (1-phi_i)(1-phi_j) f[0,0]

and products/sums across groups factorize by independence.

Non-edge terms use the small-p surrogate log(1-p) ~ -p - 0.5 p^2 everywhere
(objective and gradients), so the optimizer ascends one consistent function
and finite differences of the reported objective match the analytic
gradients.  The exact non-edge expectation is only available through the
enumeration oracle at tiny scale (see oracle.py).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .datatypes import Dataset, ModelState, pair_mask

# feature probabilities are kept strictly inside (0, 1)
_PROB_FLOOR = 1e-300
_PROB_CEIL = 1.0 - 1e-16


def pair_expectation(phi_i: float, phi_j: float, f) -> float:
    """Expectation of f(z_i, z_j) over independent Bernoulli indicators
    with success probabilities phi_i (first argument of f) and phi_j."""
    f = np.asarray(f, dtype=np.float64)
    return float(
        phi_i * phi_j * f[1, 1]
        + phi_i * (1.0 - phi_j) * f[1, 0]
        + (1.0 - phi_i) * phi_j * f[0, 1]
        + (1.0 - phi_i) * (1.0 - phi_j) * f[0, 0]
    )


def expected_edge_prob(state: ModelState, i: int, j: int, power: int = 1) -> float:
    """E[p_ij] (power=1) or E[p_ij^2] (power=2) for the ordered pair i -> j.

    Independence across groups factorizes the expectation into a product of
    per-group four-term expectations; power=2 squares each table elementwise.
    """
    if i == j:
        raise ValueError("self-pairs are excluded from the model")
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    phi = state.memberships.phi
    theta = state.affinities.theta
    out = 1.0
    for k in range(state.k_groups):
        table = theta[k] if power == 1 else theta[k] ** 2
        out *= pair_expectation(phi[i, k], phi[j, k], table)
    return out


def feature_prob(state: ModelState, i: int, l: int) -> float:
    """Probability that feature l of node i takes value 1 under the logistic
    model driven by node i's membership row."""
    w = state.weights.w
    phi = state.memberships.phi
    x = float(phi[i] @ w[l, :-1] + w[l, -1])
    return float(np.clip(expit(x), _PROB_FLOOR, _PROB_CEIL))


def feature_logits(state: ModelState) -> np.ndarray:
    """N x L matrix of logistic-model logits for all (node, feature) cells."""
    phi = state.memberships.phi
    w = state.weights.w
    return phi @ w[:, :-1].T + w[:, -1][None, :]


def feature_probs(state: ModelState) -> np.ndarray:
    """N x L matrix of feature probabilities, clipped inside (0, 1)."""
    return np.clip(expit(feature_logits(state)), _PROB_FLOOR, _PROB_CEIL)


def group_pair_tables(phi: np.ndarray, theta: np.ndarray):
    """All-pairs per-group expectations of theta, theta^2 and log theta.

    Returns (P1, P2, EL): P1[i, j] = E[p_ij], P2[i, j] = E[p_ij^2] and
    EL[i, j] = E[log p_ij], each N x N (diagonal entries are meaningless and
    must be masked by the caller).
    """
    n, k_groups = phi.shape
    p1 = np.ones((n, n))
    p2 = np.ones((n, n))
    el = np.zeros((n, n))
    for k in range(k_groups):
        pk = phi[:, k]
        w11 = np.outer(pk, pk)
        w10 = np.outer(pk, 1.0 - pk)
        w01 = np.outer(1.0 - pk, pk)
        w00 = np.outer(1.0 - pk, 1.0 - pk)
        t = theta[k]
        lt = np.log(t)
        p1 *= w11 * t[1, 1] + w10 * t[1, 0] + w01 * t[0, 1] + w00 * t[0, 0]
        p2 *= (w11 * t[1, 1] ** 2 + w10 * t[1, 0] ** 2
               + w01 * t[0, 1] ** 2 + w00 * t[0, 0] ** 2)
        el += w11 * lt[1, 1] + w10 * lt[1, 0] + w01 * lt[0, 1] + w00 * lt[0, 0]
    return p1, p2, el


@dataclass
class ObjectiveBreakdown:
    """The surrogate objective and its components.  total is the quantity
    the optimizer ascends; the L1 penalty enters with a minus sign."""

    l_phi: float
    l_f: float
    l_a_surrogate: float
    l1_penalty: float

    @property
    def total(self) -> float:
        return self.l_phi + self.l_f + self.l_a_surrogate - self.l1_penalty

    def is_finite(self) -> bool:
        return np.isfinite([self.l_phi, self.l_f, self.l_a_surrogate,
                            self.l1_penalty]).all()


def prior_term(state: ModelState) -> float:
    """Beta prior log-density of the memberships (up to its constant)."""
    phi = state.memberships.phi
    alpha = state.hyper.alpha_for(state.k_groups)
    a1 = alpha[:, 0] - 1.0
    a2 = alpha[:, 1] - 1.0
    if not a1.any() and not a2.any():
        return 0.0
    return float(np.sum(a1 * np.log(phi).sum(axis=0))
                 + np.sum(a2 * np.log1p(-phi).sum(axis=0)))


def feature_term(state: ModelState, data: Dataset) -> float:
    """Bernoulli log-likelihood of the observed feature cells (missing cells
    contribute nothing)."""
    x = feature_logits(state)
    obs = data.observed
    if not obs.any():
        return 0.0
    f = data.features
    # F*log y + (1-F)*log(1-y) = F*x - log(1 + e^x), stable at large |x|
    cell = np.where(obs, np.nan_to_num(f) * x - np.logaddexp(0.0, x), 0.0)
    return float(cell.sum())


def network_term(state: ModelState, data: Dataset) -> float:
    """Expected network log-likelihood: exact expectation of log p on edges,
    the Taylor surrogate -E[p] - 0.5 E[p^2] on non-edges."""
    p1, p2, el = group_pair_tables(state.memberships.phi,
                                   state.affinities.theta)
    mask = pair_mask(data.n_nodes, state.holdout_node)
    edges = mask & (data.adjacency == 1)
    nonedges = mask & (data.adjacency == 0)
    return float(el[edges].sum() + (-p1[nonedges] - 0.5 * p2[nonedges]).sum())


def l1_term(state: ModelState) -> float:
    """L1 penalty on the non-intercept weight block."""
    return float(state.hyper.lam * np.abs(state.weights.group_weights).sum())


def objective(state: ModelState, data: Dataset) -> ObjectiveBreakdown:
    """Full surrogate objective breakdown for a model state on a dataset."""
    return ObjectiveBreakdown(
        l_phi=prior_term(state),
        l_f=feature_term(state, data),
        l_a_surrogate=network_term(state, data),
        l1_penalty=l1_term(state),
    )


def permute_groups(state: ModelState, perm) -> ModelState:
    """Apply one permutation to the group axis of every parameter block
    (phi columns, the first K weight columns, the theta stack, and the
    per-group Beta parameters).  The model is invariant under this."""
    perm = np.asarray(perm, dtype=int)
    out = state.copy()
    out.memberships.phi = out.memberships.phi[:, perm]
    k = state.k_groups
    w = out.weights.w
    w[:, :k] = w[:, :k][:, perm]
    out.affinities.theta = out.affinities.theta[perm]
    if out.hyper.alpha is not None:
        out.hyper.alpha = out.hyper.alpha[perm]
    return out


__all__ = [
    "pair_expectation", "expected_edge_prob", "feature_prob",
    "feature_logits", "feature_probs", "group_pair_tables",
    "ObjectiveBreakdown", "objective", "prior_term", "feature_term",
    "network_term", "l1_term", "permute_groups",
]

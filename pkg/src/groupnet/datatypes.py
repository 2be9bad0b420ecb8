"""Core data containers: the observed data and the model parameter blocks.

Conventions used throughout the package:

- adjacency is a dense binary N x N array, row = source, column =
  destination.  The diagonal is ignored everywhere (no self-pairs).
- features is a dense N x L float array with cells in {0.0, 1.0, nan};
  nan marks a missing (unobserved) cell.
- memberships phi (N x K) and affinity entries theta (K x 2 x 2) are
  probabilities kept inside [clamp_eps, 1 - clamp_eps] so their logs stay
  finite.
- feature weights w are L x (K+1); the last column is the unregularized
  intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DataFormatError


@dataclass
class Dataset:
    """A directed binary graph plus binary node features with missing cells."""

    adjacency: np.ndarray          # (N, N) uint8, diagonal ignored
    features: np.ndarray           # (N, L) float64 with nan = missing
    node_ids: list[str]

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.uint8)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.adjacency.shape[0]
        if self.adjacency.ndim != 2 or self.adjacency.shape[1] != n:
            raise DataFormatError("adjacency must be a square matrix")
        if n < 1:
            raise DataFormatError("dataset needs at least one node")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DataFormatError(
                f"features has {self.features.shape[0]} rows for {n} nodes")
        if len(self.node_ids) != n:
            raise DataFormatError("node_ids length does not match adjacency")
        if len(set(self.node_ids)) != n:
            raise DataFormatError("node_ids contains duplicates")
        vals = self.features[~np.isnan(self.features)]
        if vals.size and not np.isin(vals, (0.0, 1.0)).all():
            raise DataFormatError("feature cells must be 0, 1 or missing")
        # self-pairs are excluded from every likelihood sum
        np.fill_diagonal(self.adjacency, 0)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Boolean N x L mask of observed feature cells."""
        return ~np.isnan(self.features)

    def index_of(self, node_id: str) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise DataFormatError(f"unknown node id {node_id!r}") from None

    def copy(self) -> "Dataset":
        return Dataset(self.adjacency.copy(), self.features.copy(),
                       list(self.node_ids))


@dataclass
class Memberships:
    """Per-node, per-group membership probabilities phi (N x K)."""

    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.ndim != 2:
            raise ValueError("phi must be 2-d (nodes x groups)")

    @property
    def n_nodes(self) -> int:
        return self.phi.shape[0]

    @property
    def k_groups(self) -> int:
        return self.phi.shape[1]


@dataclass
class FeatureWeights:
    """Logistic feature model weights, L x (K+1); last column = intercept."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 2 or self.w.shape[1] < 1:
            raise ValueError("w must be 2-d with at least the intercept column")

    @property
    def n_features(self) -> int:
        return self.w.shape[0]

    @property
    def k_groups(self) -> int:
        return self.w.shape[1] - 1

    @property
    def group_weights(self) -> np.ndarray:
        """The L x K block subject to the L1 penalty."""
        return self.w[:, :-1]

    @property
    def intercepts(self) -> np.ndarray:
        return self.w[:, -1]


@dataclass
class AffinityTensor:
    """Per-group 2 x 2 link-affinity tables theta (K x 2 x 2).

    theta[k, x1, x2] is group k's multiplicative edge factor when the source
    indicator is x1 and the destination indicator is x2.
    """

    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 3 or self.theta.shape[1:] != (2, 2):
            raise ValueError("theta must have shape (K, 2, 2)")

    @property
    def k_groups(self) -> int:
        return self.theta.shape[0]


@dataclass
class Hyperparams:
    """Priors, penalties, learning rates and iteration controls.

    alpha is a (K, 2) array of Beta prior parameters per group; None means
    the flat (1, 1) prior for every group (the membership prior term then
    vanishes).
    """

    alpha: Optional[np.ndarray] = None
    lam: float = 0.01              # L1 strength on the non-intercept weights
    gamma_phi: float = 0.005
    gamma_f: float = 0.005
    gamma_a: float = 0.005
    clamp_eps: float = 1e-4
    max_outer_iters: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    backtrack: bool = True
    inner_passes: int = 1
    threads: int = 1
    phi_update: str = "gauss-seidel"   # or "frozen"
    foldin_max_iters: int = 200

    def __post_init__(self):
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
            if self.alpha.ndim != 2 or self.alpha.shape[1] != 2:
                raise ValueError("alpha must have shape (K, 2)")
            if not (self.alpha > 0).all():
                raise ValueError("alpha entries must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        for name in ("gamma_phi", "gamma_f", "gamma_a"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")
        if self.phi_update not in ("gauss-seidel", "frozen"):
            raise ValueError("phi_update must be 'gauss-seidel' or 'frozen'")

    def alpha_for(self, k_groups: int) -> np.ndarray:
        """The (K, 2) Beta parameters, materializing the flat default."""
        if self.alpha is None:
            return np.ones((k_groups, 2))
        if self.alpha.shape[0] != k_groups:
            raise ValueError(
                f"alpha has {self.alpha.shape[0]} rows for K={k_groups}")
        return self.alpha


@dataclass
class ModelState:
    """Bundle of all parameter blocks plus the hyperparameters they were
    fitted under.  holdout_node records a node whose links were excluded
    from every network sum during fitting (link-prediction protocol)."""

    memberships: Memberships
    weights: FeatureWeights
    affinities: AffinityTensor
    hyper: Hyperparams
    holdout_node: Optional[int] = None

    def __post_init__(self):
        k = self.memberships.k_groups
        if self.weights.k_groups != k or self.affinities.k_groups != k:
            raise ValueError("inconsistent group count across parameter blocks")
        self.hyper.alpha_for(k)   # raises if alpha shape is off

    @property
    def k_groups(self) -> int:
        return self.memberships.k_groups

    def copy(self) -> "ModelState":
        return ModelState(
            Memberships(self.memberships.phi.copy()),
            FeatureWeights(self.weights.w.copy()),
            AffinityTensor(self.affinities.theta.copy()),
            replace(self.hyper),
            self.holdout_node,
        )


def pair_mask(n_nodes: int, holdout_node: Optional[int] = None) -> np.ndarray:
    """Boolean N x N mask of the ordered pairs that enter network sums:
    off-diagonal, minus any row/column of a held-out node."""
    mask = ~np.eye(n_nodes, dtype=bool)
    if holdout_node is not None:
        mask[holdout_node, :] = False
        mask[:, holdout_node] = False
    return mask


__all__ = [
    "Dataset", "Memberships", "FeatureWeights", "AffinityTensor",
    "Hyperparams", "ModelState", "pair_mask",
]

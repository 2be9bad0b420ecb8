"""Synthetic data sampled from the generative model.

Draw order is fixed (memberships, indicators, adjacency, features) so a
seed pins the whole dataset.  Presets give two classic planted regimes:
assortative groups and a core-periphery split.
"""

from __future__ import annotations

import warnings
from typing import Union

import numpy as np
from scipy.special import expit

from .datatypes import (AffinityTensor, Dataset, FeatureWeights, Hyperparams,
                        Memberships, ModelState)
from .errors import UsageError

__all__ = ["PRESETS", "preset_state", "synth_generate"]

PRESETS = ("homophily", "core-periphery")


def _preset_theta(name: str, k_groups: int) -> np.ndarray:
    if name == "homophily":
        table = [[0.45, 0.10], [0.10, 0.70]]
    elif name == "core-periphery":
        table = [[0.05, 0.25], [0.25, 0.75]]
    else:
        raise UsageError(f"unknown preset {name!r}; choose from {PRESETS}")
    return np.tile(np.asarray(table, dtype=np.float64), (k_groups, 1, 1))


def preset_state(name: str, n_nodes: int, n_features: int,
                 k_groups: int) -> ModelState:
    """Planted parameters for a named regime: per-group feature blocks with
    weight 4 against intercept -2, bimodal Beta(0.3, 0.3) memberships, and
    the preset's affinity table in every group."""
    theta = _preset_theta(name, k_groups)
    w = np.zeros((n_features, k_groups + 1))
    w[:, -1] = -2.0
    for l in range(n_features):
        w[l, l % k_groups] = 4.0
    alpha = np.full((k_groups, 2), 0.3)
    hyper = Hyperparams(alpha=alpha)
    phi = np.full((n_nodes, k_groups), 0.5)
    return ModelState(Memberships(phi), FeatureWeights(w),
                      AffinityTensor(theta), hyper)


def synth_generate(n_nodes: int, n_features: int, k_groups: int,
                   planted: Union[str, ModelState] = "homophily",
                   seed: int = 0,
                   feature_input: str = "phi") -> tuple[Dataset, np.ndarray]:
    """Sample a dataset from planted parameters.

    Memberships come from the planted Beta prior, indicators from the
    memberships, edges from the per-pair affinity products of the sampled
    indicators, and features from the logistic model.  feature_input picks
    whether the logistic layer sees the real-valued membership rows
    ("phi", the form the fit assumes) or the sampled indicators ("z").
    Returns the dataset and the planted indicator matrix.
    """
    if isinstance(planted, str):
        state = preset_state(planted, n_nodes, n_features, k_groups)
        preset_name = planted
    else:
        state = planted
        preset_name = None
        if state.k_groups != k_groups or state.weights.n_features != n_features:
            raise UsageError("planted state shape disagrees with n/l/k arguments")
    if feature_input not in ("phi", "z"):
        raise UsageError("feature_input must be 'phi' or 'z'")

    rng = np.random.default_rng(seed)
    alpha = state.hyper.alpha_for(k_groups)
    phi = rng.beta(alpha[:, 0], alpha[:, 1], size=(n_nodes, k_groups))
    z = (rng.random((n_nodes, k_groups)) < phi).astype(np.uint8)

    theta = state.affinities.theta
    edge_p = np.ones((n_nodes, n_nodes))
    for k in range(k_groups):
        edge_p *= theta[k][np.ix_(z[:, k], z[:, k])]
    np.fill_diagonal(edge_p, 0.0)
    adjacency = (rng.random((n_nodes, n_nodes)) < edge_p).astype(np.uint8)
    np.fill_diagonal(adjacency, 0)

    if preset_name is not None and edge_p.sum() > 0.5 * n_nodes * (n_nodes - 1):
        warnings.warn(f"{preset_name} preset is in a dense regime: expected "
                      "edge count exceeds half of all ordered pairs")

    w = state.weights.w
    design = phi if feature_input == "phi" else z.astype(np.float64)
    logits = design @ w[:, :-1].T + w[:, -1][None, :]
    features = (rng.random((n_nodes, n_features)) < expit(logits)).astype(np.float64)

    ids = [f"n{i:04d}" for i in range(n_nodes)]
    return Dataset(adjacency, features, ids), z

"""Shared builders for the test suite: random model instances, tiny
hand-specified states, and a central finite-difference probe of the
surrogate objective."""

import os

import numpy as np
import pytest

from groupnet.datatypes import (AffinityTensor, Dataset, FeatureWeights,
                                Hyperparams, Memberships, ModelState)
from groupnet.model import objective

ASSETS = os.path.join(os.path.dirname(__file__), "assets")


def asset(name):
    return os.path.join(ASSETS, name)


def make_state(phi, theta, w=None, alpha=None, holdout=None, **hyper_kw):
    """Assemble a ModelState from plain arrays; w defaults to zeros."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 2:
        theta = theta[None, :, :]
    k = phi.shape[1]
    if w is None:
        w = np.zeros((0, k + 1))
    w = np.asarray(w, dtype=np.float64)
    hyper = Hyperparams(alpha=alpha, **hyper_kw)
    return ModelState(Memberships(phi), FeatureWeights(w),
                      AffinityTensor(theta), hyper, holdout)


def random_instance(seed, n, k, l, missing=0.0, edge_p=0.3,
                    theta_lo=0.05, theta_hi=0.95, w_floor=0.05,
                    alpha=None, **hyper_kw):
    """A random model state plus a random dataset of matching shape.

    Weight magnitudes stay above w_floor so finite differences never probe
    the L1 kink; phi and theta live strictly inside the unit interval.
    """
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.05, 0.95, size=(n, k))
    theta = rng.uniform(theta_lo, theta_hi, size=(k, 2, 2))
    w = rng.uniform(w_floor, 1.0, size=(l, k + 1)) * rng.choice([-1.0, 1.0],
                                                                size=(l, k + 1))
    adjacency = (rng.random((n, n)) < edge_p).astype(np.uint8)
    np.fill_diagonal(adjacency, 0)
    features = rng.integers(0, 2, size=(n, l)).astype(np.float64)
    if missing > 0:
        features[rng.random((n, l)) < missing] = np.nan
    ids = [f"v{i}" for i in range(n)]
    data = Dataset(adjacency, features, ids)
    state = make_state(phi, theta, w, alpha=alpha, **hyper_kw)
    return state, data


def fd_total(state, data, array, index, h=1e-5):
    """Central finite difference of the surrogate total objective in one
    coordinate of a parameter array."""
    orig = array[index]
    array[index] = orig + h
    hi = objective(state, data).total
    array[index] = orig - h
    lo = objective(state, data).total
    array[index] = orig
    return (hi - lo) / (2.0 * h)


def close(a, b, rel=1e-4, abs_near_zero=1e-7):
    """True when two values agree to the relative tolerance, with an
    absolute fallback for values near zero."""
    gap = abs(a - b)
    return gap <= max(rel * max(abs(a), abs(b)), abs_near_zero)


@pytest.fixture
def theta_table():
    """The 2x2 affinity table used by the worked arithmetic checks."""
    return np.array([[0.1, 0.3], [0.3, 0.8]])

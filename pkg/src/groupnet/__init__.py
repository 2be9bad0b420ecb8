"""Latent multi-group membership graph model.

Fits a directed binary graph together with binary node features through a
shared set of per-node group memberships, then predicts missing features,
missing links of held-out nodes, and node labels.  See the README for the
model and the CLI surface.
"""

from .baselines import Metrics, baseline_avg, baseline_ccl, baseline_ccn, evaluate
from .dataio import load_dataset, load_model, load_scores, save_dataset, save_model
from .datatypes import (AffinityTensor, Dataset, FeatureWeights, Hyperparams,
                        Memberships, ModelState, pair_mask)
from .errors import DataFormatError, GroupnetError, NumericError, UsageError
from .fitting import FitReport, fit, init_svd, init_theta
from .gradients import PhiGradient, grad_phi, grad_theta, grad_w, lasso_step
from .model import (ObjectiveBreakdown, expected_edge_prob, feature_prob,
                    objective, pair_expectation, permute_groups)
from .oracle import (exact_nonedge_term, jensen_bound, oracle_exact_loglik,
                     taylor_nonedge_term)
from .prediction import (PredictionResult, classify_nodes, fold_in_node,
                         predict_links, predict_missing_features)
from .selection import KSelectionReport, select_k
from .synth import preset_state, synth_generate

__version__ = "0.1.0"

__all__ = [
    "AffinityTensor", "DataFormatError", "Dataset", "FeatureWeights",
    "FitReport", "GroupnetError", "Hyperparams", "KSelectionReport",
    "Memberships", "Metrics", "ModelState", "NumericError",
    "ObjectiveBreakdown", "PhiGradient", "PredictionResult", "UsageError",
    "baseline_avg", "baseline_ccl", "baseline_ccn", "classify_nodes",
    "evaluate", "exact_nonedge_term", "expected_edge_prob", "feature_prob",
    "fit", "fold_in_node", "grad_phi", "grad_theta", "grad_w",
    "init_svd", "init_theta", "jensen_bound", "lasso_step", "load_dataset",
    "load_model", "load_scores", "objective", "oracle_exact_loglik",
    "pair_expectation", "pair_mask", "permute_groups", "predict_links",
    "predict_missing_features", "preset_state", "save_dataset", "save_model",
    "select_k", "synth_generate", "taylor_nonedge_term", "__version__",
]

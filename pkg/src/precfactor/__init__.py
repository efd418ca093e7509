"""Bayesian low-rank-plus-diagonal precision matrix estimation with
Dirichlet-Laplace shrinkage, Dirichlet-process residual clustering, and
posterior-FDR-controlled graph selection."""

from .graphsel import EdgePosterior, GraphEstimate, fdr_curve, select_graph
from .model import (
    DlLocals,
    DpState,
    Hyperparams,
    LatentBlock,
    ModelState,
    assemble_precision,
    partial_correlation,
    select_q,
    woodbury_covariance,
)
from .rvgen import GigParams, RngStream
from .sampler import ChainConfig, ChainResult, run_chain, validate_geweke
from .synthbench import EvalReport, TruthSpec, credible_bands, evaluate, gen_truth, sample_data

__version__ = "0.1.0"

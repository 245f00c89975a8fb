import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from src.Dataset import GraphModel, NodewiseFit, SubjectPrediction
from src.Errors import DimensionMismatch
from src.GraphAssembly import predict_subject

logger = logging.getLogger(__name__)


class EdgeScope(Enum):
    ALL = "all"
    POP = "pop"
    COV = "cov"


class BetaScale(Enum):
    # beta_hat against -B * sigma2, the scale the regressions are solved in
    REGRESSION = "regression"
    # -beta_hat / sigma2_hat against B
    PRECISION = "precision"


@dataclass(frozen=True)
class EvalReport:
    tpr: float
    tpr_pop: float
    fpr_pop: float
    tpr_cov: float
    fpr_overall: float
    beta_err: float
    gamma_err: float
    omega_err: float
    omega_tpr: float
    omega_fpr: float
    mu_err: float
    ridge_repairs: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _support_rates(est: np.ndarray, truth: np.ndarray) -> tuple:
    est, truth = np.asarray(est, dtype=bool), np.asarray(truth, dtype=bool)
    positives = int(truth.sum())
    negatives = int((~truth).sum())
    tpr = float((est & truth).sum()) / positives if positives else 1.0
    fpr = float((est & ~truth).sum()) / negatives if negatives else 0.0
    return tpr, fpr


def edge_rates(est: Sequence[np.ndarray], truth: Sequence[np.ndarray], scope: EdgeScope = EdgeScope.ALL) -> tuple:
    """
    (TPR, FPR) of the estimated edges over the upper triangles of the components
    selected by scope. An edge is any strictly nonzero entry.
    """
    if len(est) != len(truth):
        raise DimensionMismatch(f"{len(est)} estimated components against {len(truth)} true ones")
    p = np.shape(truth[0])[0]
    if any(np.shape(e) != (p, p) for e in est) or any(np.shape(t) != (p, p) for t in truth):
        raise DimensionMismatch("Component matrices must all be p x p")

    if scope is EdgeScope.POP:
        components = [0]
    elif scope is EdgeScope.COV:
        components = list(range(1, len(truth)))
    else:
        components = list(range(len(truth)))
    if not components:
        return 1.0, 0.0

    upper = np.triu_indices(p, 1)
    est_support = np.concatenate([np.asarray(est[h])[upper] != 0.0 for h in components])
    true_support = np.concatenate([np.asarray(truth[h])[upper] != 0.0 for h in components])
    return _support_rates(est_support, true_support)


def true_nodewise_beta(b: Sequence[np.ndarray], j: int, scale: BetaScale = BetaScale.REGRESSION) -> np.ndarray:
    """
    Coefficients of node j implied by the true components, concatenated over h.
    """
    others = np.delete(np.arange(b[0].shape[0]), j)
    sigma2 = 1.0 / b[0][j, j]
    if scale is BetaScale.PRECISION:
        return np.concatenate([component[j, others] for component in b])
    return np.concatenate([-component[j, others] * sigma2 for component in b])


def beta_error(fits: Sequence[NodewiseFit], truth_b: Sequence[np.ndarray], scale: BetaScale = BetaScale.REGRESSION) -> float:
    """
    Sum over nodes of the l2 distance between estimated and true nodewise coefficients.
    """
    if len(fits) != truth_b[0].shape[0]:
        raise DimensionMismatch(f"{len(fits)} fits for {truth_b[0].shape[0]} nodes")
    total = 0.0
    for fit in fits:
        if len(fit.beta_blocks) != len(truth_b):
            raise DimensionMismatch(f"Node {fit.node} has {len(fit.beta_blocks)} blocks, truth has {len(truth_b)}")
        estimate = fit.beta if scale is BetaScale.REGRESSION else -fit.beta / fit.sigma2
        target = true_nodewise_beta(truth_b, fit.node, scale)
        if estimate.shape != target.shape:
            raise DimensionMismatch(f"Node {fit.node}: coefficient length {estimate.shape} vs {target.shape}")
        total += float(np.linalg.norm(estimate - target))
    return total


def gamma_error(gamma_hat: np.ndarray, truth_gamma: np.ndarray) -> float:
    gamma_hat, truth_gamma = np.asarray(gamma_hat, dtype=float), np.asarray(truth_gamma, dtype=float)
    if gamma_hat.shape != truth_gamma.shape:
        raise DimensionMismatch(f"Gamma shapes differ: {gamma_hat.shape} vs {truth_gamma.shape}")
    return float(np.linalg.norm(gamma_hat - truth_gamma, axis=1).sum())


def omega_error_from_matrices(est_omegas: np.ndarray, true_omegas: np.ndarray) -> float:
    """
    Mean over subjects of the squared Frobenius norm of the off-diagonal difference.
    """
    diff = np.asarray(est_omegas, dtype=float) - np.asarray(true_omegas, dtype=float)
    if diff.ndim != 3:
        raise DimensionMismatch("Expected stacks of matrices with shape (n, p, p)")
    off = ~np.eye(diff.shape[1], dtype=bool)
    return float(np.mean(np.sum(diff[:, off] ** 2, axis=1)))


def omega_error(est_model: GraphModel, truth) -> float:
    return omega_error_from_matrices(est_model.subject_omegas(truth.dataset.U), truth.omega_per_subject)


def omega_support_rates(est_model: GraphModel, truth) -> tuple:
    """
    Per-subject TPR/FPR of the off-diagonal support of the precision matrix,
    averaged over subjects.
    """
    est_omegas = est_model.subject_omegas(truth.dataset.U)
    upper = np.triu_indices(est_model.p, 1)
    rates = np.array([
        _support_rates(est[upper] != 0.0, true[upper] != 0.0)
        for est, true in zip(est_omegas, truth.omega_per_subject)
    ])
    return float(rates[:, 0].mean()), float(rates[:, 1].mean())


def mu_error(est_model: GraphModel, truth, predictions: Optional[Sequence[SubjectPrediction]] = None) -> float:
    if predictions is None:
        predictions = [predict_subject(est_model, u) for u in truth.dataset.U]
    mu_hat = np.array([prediction.mu for prediction in predictions])
    return float(np.mean(np.sum((mu_hat - truth.mu_per_subject) ** 2, axis=1)))


class SingleEvaluator:
    """
    Scores one fitted model against the truth it was simulated from.
    """
    def __init__(self, model: GraphModel, truth, beta_scale: BetaScale = BetaScale.REGRESSION):
        if model.p != truth.dataset.p or model.q != truth.dataset.q:
            raise DimensionMismatch(f"Model is {model.p} x {model.q}, truth is {truth.dataset.p} x {truth.dataset.q}")
        self.model = model
        self.truth = truth
        self.beta_scale = beta_scale

    def get_edge_rates(self) -> dict:
        tpr, fpr = edge_rates(self.model.b_tilde, self.truth.b, EdgeScope.ALL)
        tpr_pop, fpr_pop = edge_rates(self.model.b_tilde, self.truth.b, EdgeScope.POP)
        tpr_cov, _ = edge_rates(self.model.b_tilde, self.truth.b, EdgeScope.COV)
        return {"tpr": tpr, "tpr_pop": tpr_pop, "fpr_pop": fpr_pop, "tpr_cov": tpr_cov, "fpr_overall": fpr}

    def get_beta_error(self) -> float:
        if self.model.fits:
            return beta_error(self.model.fits, self.truth.b, self.beta_scale)
        # a model without nodewise fits is compared through its symmetrized components
        total = 0.0
        for j in range(self.model.p):
            others = np.delete(np.arange(self.model.p), j)
            sigma2 = self.model.sigma2[j]
            if self.beta_scale is BetaScale.PRECISION:
                estimate = np.concatenate([c[j, others] for c in self.model.b_tilde])
            else:
                estimate = np.concatenate([-c[j, others] * sigma2 for c in self.model.b_tilde])
            total += float(np.linalg.norm(estimate - true_nodewise_beta(self.truth.b, j, self.beta_scale)))
        return total

    def get_evaluation_metrics(self) -> EvalReport:
        omega_tpr, omega_fpr = omega_support_rates(self.model, self.truth)
        predictions = [predict_subject(self.model, u) for u in self.truth.dataset.U]
        return EvalReport(
            **self.get_edge_rates(),
            beta_err=self.get_beta_error(),
            gamma_err=gamma_error(self.model.gamma_hat, self.truth.gamma),
            omega_err=omega_error(self.model, self.truth),
            omega_tpr=omega_tpr,
            omega_fpr=omega_fpr,
            mu_err=mu_error(self.model, self.truth, predictions),
            ridge_repairs=sum(prediction.ridge_added > 0.0 for prediction in predictions),
        )


def evaluate(model: GraphModel, truth, beta_scale: BetaScale = BetaScale.REGRESSION) -> EvalReport:
    return SingleEvaluator(model, truth, beta_scale).get_evaluation_metrics()

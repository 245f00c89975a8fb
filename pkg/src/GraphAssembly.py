"""
Turns the p nodewise regressions into a symmetric covariate-dependent precision
model and evaluates it for individual subjects.
"""
import logging
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from src.Dataset import GraphModel, NodewiseFit, SubjectPrediction, SymmetrizationRule
from src.Errors import DimensionMismatch, SingularAfterRidge
from src.NodewiseRegression import rescale_to_theta

logger = logging.getLogger(__name__)

RIDGE_MARGIN = 1e-6


def _node_matrices(beta_tilde: Sequence, p: int) -> np.ndarray:
    """
    Stacks per-node blocks into T with T[h, j, k] = beta_tilde_jkh (zero diagonal).
    """
    if len(beta_tilde) != p:
        raise DimensionMismatch(f"Expected {p} nodewise results, got {len(beta_tilde)}")
    n_components = len(beta_tilde[0])
    T = np.zeros((n_components, p, p))
    for j, blocks in enumerate(beta_tilde):
        if len(blocks) != n_components:
            raise DimensionMismatch(f"Node {j} has {len(blocks)} blocks, expected {n_components}")
        others = np.delete(np.arange(p), j)
        for h, block in enumerate(blocks):
            T[h, j, others] = block
    return T


def symmetrize(beta_tilde: Sequence, sigma2, rule: SymmetrizationRule = SymmetrizationRule.AND) -> tuple:
    """
    Combines the (j, k) and (k, j) nodewise estimates of every component.

    The and-rule keeps the smaller magnitude, so an entry survives only when both
    nodes select it. The or-rule keeps the larger magnitude. When both magnitudes
    are equal and nonzero the value estimated by the lower-indexed node is kept.

    Parameters:
    -----------
    beta_tilde : sequence of length p
        Per node, the q + 1 rescaled blocks of length p - 1 (see rescale_to_theta).
    sigma2 : array of length p
    rule : SymmetrizationRule

    Returns:
    --------
    tuple of q + 1 symmetric p x p matrices with diag B_0 = 1 / sigma2 and diag B_h = 0.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    p = sigma2.shape[0]
    T = _node_matrices(beta_tilde, p)
    upper = np.triu(np.ones((p, p), dtype=bool), 1)

    components = []
    ties = 0
    for h in range(T.shape[0]):
        a = T[h]
        b = T[h].T
        abs_a, abs_b = np.abs(a), np.abs(b)
        if rule is SymmetrizationRule.AND:
            value = np.where(abs_a < abs_b, a, np.where(abs_a > abs_b, b, 0.0))
        else:
            value = np.where(abs_a > abs_b, a, np.where(abs_a < abs_b, b, 0.0))
        tie = upper & (abs_a == abs_b) & (a != 0.0)
        value = np.where(tie, a, value)
        ties += int(tie.sum())

        component = np.triu(value, 1)
        component = component + component.T
        np.fill_diagonal(component, 1.0 / sigma2 if h == 0 else 0.0)
        components.append(component)

    if ties:
        logger.warning("%d magnitude ties between nodewise estimates, kept the lower-indexed node's value", ties)
    return tuple(components)


def assemble_model(fits: Sequence[NodewiseFit], rule: SymmetrizationRule = SymmetrizationRule.AND,
                   response_names: tuple = (), covariate_names: tuple = (), settings: dict = None) -> GraphModel:
    fits = sorted(fits, key=lambda fit: fit.node)
    if [fit.node for fit in fits] != list(range(len(fits))):
        raise DimensionMismatch("Nodewise fits must cover every node exactly once")
    sigma2 = np.array([fit.sigma2 for fit in fits])
    b_tilde = symmetrize([rescale_to_theta(fit) for fit in fits], sigma2, rule)
    return GraphModel(
        gamma_hat=np.vstack([fit.gamma for fit in fits]),
        b_tilde=b_tilde,
        sigma2=sigma2,
        symmetrization_rule=rule,
        fits=tuple(fits),
        response_names=tuple(response_names),
        covariate_names=tuple(covariate_names),
        settings=dict(settings or {}),
    )


def predict_subject(m: GraphModel, u) -> SubjectPrediction:
    """
    Precision matrix and mean of one subject:

        Omega(u) = B_0 + sum_h B_h u_h
        mu(u)    = Omega(u)^-1 diag(1 / sigma2) Gamma u

    A non positive definite Omega(u) is shifted by (|lambda_min| + 1e-6) I.
    """
    u = np.asarray(u, dtype=float)
    omega = m.omega(u)
    rhs = (m.gamma_hat @ u) / m.sigma2

    ridge = 0.0
    min_eigenvalue = float(eigh(omega, eigvals_only=True, subset_by_index=[0, 0])[0])
    if not min_eigenvalue > 0.0:
        ridge = abs(min_eigenvalue) + RIDGE_MARGIN
        omega = omega + ridge * np.eye(m.p)
        logger.warning("Precision matrix not positive definite (min eigenvalue %.3e), added ridge %.3e",
                       min_eigenvalue, ridge)

    try:
        mu = cho_solve(cho_factor(omega), rhs)
    except LinAlgError as e:
        raise SingularAfterRidge(f"Cholesky factorization failed after adding ridge {ridge:.3e}: {e}") from e
    if not np.all(np.isfinite(mu)):
        raise SingularAfterRidge(f"Non-finite mean after adding ridge {ridge:.3e}")
    return SubjectPrediction(omega, mu, ridge)


def predict_all(m: GraphModel, U) -> list:
    U = np.asarray(U, dtype=float)
    return [predict_subject(m, u) for u in U]


def edge_sets(m: GraphModel, threshold: float = 0.0) -> dict:
    """
    Per component h, the pairs (j, k) with j < k and |B_h[j, k]| > threshold.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    edges = {}
    for h, component in enumerate(m.b_tilde):
        rows, cols = np.nonzero(np.triu(np.abs(component) > threshold, 1))
        edges[h] = [(int(j), int(k)) for j, k in zip(rows, cols)]
    return edges


def edge_table(m: GraphModel, threshold: float = 0.0) -> pd.DataFrame:
    rows = [
        {"h": h, "j": j, "k": k, "weight": float(m.b_tilde[h][j, k])}
        for h, pairs in edge_sets(m, threshold).items()
        for j, k in pairs
    ]
    return pd.DataFrame(rows, columns=["h", "j", "k", "weight"])

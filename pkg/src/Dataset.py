from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from src.Errors import BinaryViolation, DegenerateColumn, DimensionMismatch, NonFinite


class CovariateKind(Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"

    def __str__(self):
        return self.value

    @staticmethod
    def parse(value) -> "CovariateKind":
        if isinstance(value, CovariateKind):
            return value
        return CovariateKind(str(value).strip().lower())


class SymmetrizationRule(Enum):
    AND = "and"
    OR = "or"

    def __str__(self):
        return self.value


class Sigma2Estimator(Enum):
    S1 = "s1"
    S2 = "s2"

    def __str__(self):
        return self.value


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Responses X (n x p) and covariates U (n x q) of one study.

    Attributes:
    -----------
    X : np.ndarray
        Response matrix, one column per response (gene).
    U : np.ndarray
        Covariate matrix, one column per covariate (SNP or clinical variable).
    covariate_kinds : tuple[CovariateKind, ...]
        Kind of every column of U.
    response_names, covariate_names : tuple[str, ...]
        Column names, taken from the CSV headers when loaded from disk.
    """
    X: np.ndarray
    U: np.ndarray
    covariate_kinds: tuple
    response_names: tuple = ()
    covariate_names: tuple = ()

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.U.shape[1]

    def subset(self, rows) -> "Dataset":
        """
        Returns the dataset restricted to the given row indices.
        """
        return Dataset(
            X=_frozen(self.X[rows]),
            U=_frozen(self.U[rows]),
            covariate_kinds=self.covariate_kinds,
            response_names=self.response_names,
            covariate_names=self.covariate_names,
        )

    def with_centered_responses(self) -> "Dataset":
        return Dataset(
            X=_frozen(self.X - self.X.mean(axis=0)),
            U=self.U,
            covariate_kinds=self.covariate_kinds,
            response_names=self.response_names,
            covariate_names=self.covariate_names,
        )


def validate_dataset(X, U, kinds: Sequence, response_names: Optional[Sequence[str]] = None,
                     covariate_names: Optional[Sequence[str]] = None) -> Dataset:
    """
    Checks the dataset invariants and returns an immutable Dataset.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if X.ndim != 2 or U.ndim != 2:
        raise DimensionMismatch("X and U must be two-dimensional matrices")
    if X.shape[0] != U.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but U has {U.shape[0]}")
    if X.shape[0] < 1:
        raise DimensionMismatch("At least one observation is required")
    if X.shape[1] < 2:
        raise DimensionMismatch(f"At least two responses are required, got p={X.shape[1]}")
    if U.shape[1] < 1:
        raise DimensionMismatch("At least one covariate is required")

    kinds = tuple(CovariateKind.parse(k) for k in kinds)
    if len(kinds) != U.shape[1]:
        raise DimensionMismatch(f"Got {len(kinds)} covariate kinds for {U.shape[1]} covariates")

    if not np.all(np.isfinite(X)):
        raise NonFinite("X contains NaN or infinite entries")
    if not np.all(np.isfinite(U)):
        raise NonFinite("U contains NaN or infinite entries")

    for h, kind in enumerate(kinds):
        if kind is CovariateKind.BINARY and not np.all((U[:, h] == 0.0) | (U[:, h] == 1.0)):
            raise BinaryViolation(f"Covariate {h} is marked binary but has values outside {{0, 1}}")

    response_names = tuple(response_names) if response_names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    covariate_names = tuple(covariate_names) if covariate_names is not None else tuple(f"u{h}" for h in range(U.shape[1]))
    if len(response_names) != X.shape[1] or len(covariate_names) != U.shape[1]:
        raise DimensionMismatch("Column names do not match the matrix widths")

    return Dataset(_frozen(X), _frozen(U), kinds, response_names, covariate_names)


def infer_covariate_kinds(U) -> list:
    """
    A column with only {0, 1} values is binary, everything else continuous.
    """
    U = np.asarray(U, dtype=float)
    return [
        CovariateKind.BINARY if np.all((U[:, h] == 0.0) | (U[:, h] == 1.0)) else CovariateKind.CONTINUOUS
        for h in range(U.shape[1])
    ]


@dataclass(frozen=True, eq=False)
class ScalingRecord:
    """
    Per-column (mean, sd) used to standardize U. Binary columns store (0, 1).
    """
    means: np.ndarray
    sds: np.ndarray

    def apply(self, U) -> np.ndarray:
        return (np.asarray(U, dtype=float) - self.means) / self.sds

    def inverse(self, U) -> np.ndarray:
        return np.asarray(U, dtype=float) * self.sds + self.means


def standardize_columns(U, kinds: Sequence) -> tuple[np.ndarray, ScalingRecord]:
    """
    Centers and scales the continuous columns of U to mean 0 and sample variance 1.
    Binary columns are left as they are.
    """
    U = np.asarray(U, dtype=float)
    means = np.zeros(U.shape[1])
    sds = np.ones(U.shape[1])
    for h, kind in enumerate(kinds):
        if CovariateKind.parse(kind) is not CovariateKind.CONTINUOUS:
            continue
        column = U[:, h]
        sd = column.std(ddof=1) if U.shape[0] > 1 else 0.0
        if not sd > 0.0:
            raise DegenerateColumn(f"Continuous covariate {h} has zero variance")
        means[h] = column.mean()
        sds[h] = sd
    record = ScalingRecord(_frozen(means), _frozen(sds))
    return record.apply(U), record


def standardize_covariates(d: Dataset) -> tuple[Dataset, ScalingRecord]:
    """
    Standardizes the continuous covariates of a dataset, see standardize_columns.
    """
    _, record = standardize_columns(d.U, d.covariate_kinds)
    standardized = Dataset(
        X=d.X,
        U=_frozen(record.apply(d.U)),
        covariate_kinds=d.covariate_kinds,
        response_names=d.response_names,
        covariate_names=d.covariate_names,
    )
    return standardized, record


@dataclass(frozen=True)
class PenaltyConfig:
    """
    Sparse-group lasso weights: lam on the l1 norm, lam_g on the group norms.
    When built from the mixture parametrization the (alpha_s, lambda0) pair is
    kept so it can be read back without rounding.
    """
    lam: float
    lam_g: float
    mixture: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.lam >= 0.0 and self.lam_g >= 0.0):
            raise ValueError(f"Penalty weights must be nonnegative, got lam={self.lam}, lam_g={self.lam_g}")

    @classmethod
    def from_mixture(cls, alpha_s: float, lambda0: float) -> "PenaltyConfig":
        if not 0.0 <= alpha_s <= 1.0:
            raise ValueError(f"alpha_s must lie in [0, 1], got {alpha_s}")
        if lambda0 < 0.0:
            raise ValueError(f"lambda0 must be nonnegative, got {lambda0}")
        return cls(alpha_s * lambda0, (1.0 - alpha_s) * lambda0, (float(alpha_s), float(lambda0)))

    @property
    def lambda0(self) -> float:
        if self.mixture is not None:
            return self.mixture[1]
        return self.lam + self.lam_g

    @property
    def alpha_s(self) -> float:
        if self.mixture is not None:
            return self.mixture[0]
        total = self.lam + self.lam_g
        return self.lam / total if total > 0 else 1.0


@dataclass(frozen=True, eq=False)
class NodewiseFit:
    """
    Estimate of one nodewise regression (regression scale, before rescaling).
    """
    node: int
    gamma: np.ndarray
    beta_blocks: tuple
    sigma2: float
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool = True
    penalty: Optional[PenaltyConfig] = None
    n_dropped: int = 0

    def __post_init__(self):
        if len(self.beta_blocks) != len(self.gamma) + 1:
            raise DimensionMismatch(f"Expected q + 1 = {len(self.gamma) + 1} beta blocks, got {len(self.beta_blocks)}")
        widths = {len(block) for block in self.beta_blocks}
        if len(widths) > 1:
            raise DimensionMismatch("All beta blocks must have the same length")
        if not self.sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.isfinite(self.objective):
            raise ValueError("objective must be finite")

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate(self.beta_blocks)

    @property
    def s_beta(self) -> int:
        return int(np.count_nonzero(self.beta))

    @property
    def s_gamma(self) -> int:
        return int(np.count_nonzero(self.gamma))


@dataclass(frozen=True, eq=False)
class GraphModel:
    """
    Fitted covariate-adjusted graphical model.

    Attributes:
    -----------
    gamma_hat : np.ndarray
        p x q matrix whose rows are the nodewise gamma estimates.
    b_tilde : tuple[np.ndarray, ...]
        q + 1 symmetric p x p component matrices.
    sigma2 : np.ndarray
        Nodewise noise variances.
    symmetrization_rule : SymmetrizationRule
    fits : tuple[NodewiseFit, ...]
        The nodewise fits the model was assembled from (empty for a truth model).
    response_names, covariate_names : tuple[str, ...]
    settings : dict
        Fit settings (standardization, centering, estimator, solver tolerance) needed
        to re-check the nodewise problems later.
    """
    gamma_hat: np.ndarray
    b_tilde: tuple
    sigma2: np.ndarray
    symmetrization_rule: SymmetrizationRule = SymmetrizationRule.AND
    fits: tuple = ()
    response_names: tuple = ()
    covariate_names: tuple = ()
    settings: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.gamma_hat.shape[0]

    @property
    def q(self) -> int:
        return self.gamma_hat.shape[1]

    def omega(self, u) -> np.ndarray:
        """
        Returns B0 + sum_h B_h u_h without any repair.
        """
        u = np.asarray(u, dtype=float)
        if u.shape != (self.q,):
            raise DimensionMismatch(f"Covariate vector must have length {self.q}, got {u.shape}")
        omega = self.b_tilde[0] + np.tensordot(u, np.stack(self.b_tilde[1:]), axes=1)
        return (omega + omega.T) / 2.0

    def subject_omegas(self, U) -> np.ndarray:
        """
        Stack of omega(u) for every row of U, shape (n, p, p).
        """
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.shape[1] != self.q:
            raise DimensionMismatch(f"U must have {self.q} columns")
        omegas = self.b_tilde[0] + np.einsum("ih,hjk->ijk", U, np.stack(self.b_tilde[1:]))
        return (omegas + omegas.transpose(0, 2, 1)) / 2.0


@dataclass(frozen=True, eq=False)
class SubjectPrediction:
    omega: np.ndarray
    mu: np.ndarray
    ridge_added: float = 0.0

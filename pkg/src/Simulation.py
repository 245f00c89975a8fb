"""
Synthetic data with a known covariate-dependent graph.

Every random component (population graph, covariate graphs, edge values, Gamma,
covariates, per-subject noise) draws from its own Philox stream spawned from the
configured seed, so changing one component leaves the others untouched.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import networkx as nx
import numpy as np
from scipy.linalg import cholesky

from src.Dataset import CovariateKind, Dataset, GraphModel, standardize_columns, validate_dataset
from src.Errors import AllZeroGamma, ConfigError, NonPdOmega

logger = logging.getLogger(__name__)

DEFAULT_ACTIVE_COVARIATES = 5


class SimulationModel(Enum):
    NATURAL = "natural"
    ORIGINAL = "original"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SimulationConfig:
    """
    Parameters of the data generating process.

    graph_seed and gamma_seed pin the graph (support and edge values) or Gamma
    independently of seed; by default both follow seed.
    """
    n: int = 200
    p: int = 25
    q: int = 50
    q_e: Optional[int] = None
    edge_prob: float = 0.01
    gamma_density: float = 0.3
    entry_range: tuple = (0.35, 0.5)
    row_divisor_factor: float = 1.5
    pa_power: float = 1.0
    pa_edges_per_node: int = 1
    model: SimulationModel = SimulationModel.NATURAL
    seed: int = 0
    snr: float = 1.0
    pd_threshold: float = 0.05
    repair_factor: float = 0.9
    max_repairs: int = 20
    graph_seed: Optional[int] = None
    gamma_seed: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or self.p < 2 or self.q < 1:
            raise ConfigError(f"Need n >= 1, p >= 2 and q >= 1, got n={self.n}, p={self.p}, q={self.q}")
        if self.q_e is None:
            object.__setattr__(self, "q_e", min(DEFAULT_ACTIVE_COVARIATES, self.q))
        elif not 0 <= self.q_e <= self.q:
            raise ConfigError(f"q_e must lie in [0, q], got {self.q_e}")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ConfigError(f"edge_prob must lie in [0, 1], got {self.edge_prob}")
        if not 0.0 <= self.gamma_density <= 1.0:
            raise ConfigError(f"gamma_density must lie in [0, 1], got {self.gamma_density}")
        lo, hi = self.entry_range
        if not 0.0 <= lo <= hi:
            raise ConfigError(f"entry_range must satisfy 0 <= low <= high, got {self.entry_range}")
        if self.row_divisor_factor <= 1.0:
            raise ConfigError("row_divisor_factor must exceed 1")
        if self.pa_edges_per_node < 0:
            raise ConfigError("pa_edges_per_node must be nonnegative")
        if self.snr <= 0.0:
            raise ConfigError("snr must be positive")
        if not isinstance(self.model, SimulationModel):
            object.__setattr__(self, "model", SimulationModel(str(self.model).lower()))
        object.__setattr__(self, "entry_range", (float(lo), float(hi)))


@dataclass(frozen=True, eq=False)
class SimulationTruth:
    """
    A simulated dataset together with everything that generated it.

    Attributes:
    -----------
    gamma : np.ndarray
        p x q mean effect matrix.
    b : tuple[np.ndarray, ...]
        q + 1 symmetric component matrices B_0, ..., B_q.
    omega_per_subject : np.ndarray
        (n, p, p) precision matrices.
    mu_per_subject : np.ndarray
        (n, p) means.
    dataset : Dataset
    pd_repairs : int
        Number of times the covariate components were shrunk to keep every
        precision matrix positive definite.
    active_covariates : tuple[int, ...]
    config : SimulationConfig
    """
    gamma: np.ndarray
    b: tuple
    omega_per_subject: np.ndarray
    mu_per_subject: np.ndarray
    dataset: Dataset
    pd_repairs: int = 0
    active_covariates: tuple = ()
    config: SimulationConfig = field(default_factory=SimulationConfig)

    def as_model(self) -> GraphModel:
        """
        The truth as a GraphModel, with sigma2_j = 1 / [B_0]_jj.
        """
        return GraphModel(
            gamma_hat=self.gamma,
            b_tilde=self.b,
            sigma2=1.0 / np.diag(self.b[0]),
            response_names=self.dataset.response_names,
            covariate_names=self.dataset.covariate_names,
        )


def _generator(seed_sequence: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence))


@dataclass(frozen=True)
class _Streams:
    graph: np.random.Generator
    covariate_graphs: np.random.Generator
    entries: np.random.Generator
    gamma: np.random.Generator
    covariates: np.random.Generator
    noise: tuple


def _streams(cfg: SimulationConfig) -> _Streams:
    graph_ss, cov_graph_ss, entries_ss, gamma_ss, covariates_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(6)
    if cfg.graph_seed is not None:
        graph_ss, cov_graph_ss, entries_ss = np.random.SeedSequence(cfg.graph_seed).spawn(3)
    if cfg.gamma_seed is not None:
        gamma_ss = np.random.SeedSequence(cfg.gamma_seed)
    return _Streams(
        graph=_generator(graph_ss),
        covariate_graphs=_generator(cov_graph_ss),
        entries=_generator(entries_ss),
        gamma=_generator(gamma_ss),
        covariates=_generator(covariates_ss),
        noise=tuple(noise_ss.spawn(cfg.n)),
    )


def subject_omegas(b: Sequence[np.ndarray], U) -> np.ndarray:
    omegas = b[0] + np.einsum("ih,hjk->ijk", np.asarray(U, dtype=float), np.stack(b[1:]))
    return (omegas + omegas.transpose(0, 2, 1)) / 2.0


def subject_means(gamma: np.ndarray, U, sigmas: Optional[np.ndarray] = None) -> np.ndarray:
    """
    mu_i = Sigma_i Gamma u_i when sigmas are given, Gamma u_i otherwise.
    """
    linear = np.asarray(U, dtype=float) @ gamma.T
    if sigmas is None:
        return linear
    return np.einsum("ijk,ik->ij", sigmas, linear)


def generate_gamma(cfg: SimulationConfig, rng: np.random.Generator, covariates=None,
                   sigmas: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Sparse Gamma with standard normal nonzeros. When covariates are given the matrix
    is rescaled so that the mean of ||mu_i||^2 / p over subjects equals cfg.snr.
    """
    if cfg.gamma_density == 0.0:
        return np.zeros((cfg.p, cfg.q))

    def draw():
        mask = rng.random((cfg.p, cfg.q)) < cfg.gamma_density
        return np.where(mask, rng.standard_normal((cfg.p, cfg.q)), 0.0)

    gamma = draw()
    if not gamma.any():
        logger.info("Gamma draw was all zero, drawing again")
        gamma = draw()
        if not gamma.any():
            raise AllZeroGamma(f"Gamma is all zero twice at density {cfg.gamma_density}")

    if covariates is None:
        return gamma
    means = subject_means(gamma, covariates, sigmas)
    signal = float(np.mean(np.sum(means ** 2, axis=1))) / cfg.p
    if signal == 0.0:
        logger.warning("Mean signal is zero for these covariates, Gamma left unscaled")
        return gamma
    return gamma * math.sqrt(cfg.snr / signal)


def generate_population_graph(cfg: SimulationConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Preferential attachment: starting from one node, every new node connects to
    min(m, #existing) distinct existing nodes chosen with probability proportional
    to (degree + 1) ** pa_power.
    """
    graph = nx.empty_graph(1)
    for new in range(1, cfg.p):
        existing = np.arange(new)
        graph.add_node(new)
        k = min(cfg.pa_edges_per_node, new)
        if k == 0:
            continue
        weights = (np.array([graph.degree(int(v)) for v in existing], dtype=float) + 1.0) ** cfg.pa_power
        targets = rng.choice(existing, size=k, replace=False, p=weights / weights.sum())
        graph.add_edges_from((new, int(t)) for t in targets)
    return nx.to_numpy_array(graph, nodelist=list(range(cfg.p))) != 0.0


def generate_covariate_graphs(cfg: SimulationConfig, rng: np.random.Generator) -> tuple:
    """
    Returns (supports, active): q boolean supports, Erdos-Renyi graphs on the
    q_e active covariates and empty elsewhere.
    """
    active = np.sort(rng.choice(cfg.q, size=cfg.q_e, replace=False)) if cfg.q_e else np.array([], dtype=int)
    supports = [np.zeros((cfg.p, cfg.p), dtype=bool) for _ in range(cfg.q)]
    for h in active:
        graph = nx.gnp_random_graph(cfg.p, cfg.edge_prob, seed=int(rng.integers(2 ** 32)))
        supports[h] = nx.to_numpy_array(graph, nodelist=list(range(cfg.p))) != 0.0
    return supports, tuple(int(h) for h in active)


def fill_and_stabilize(cfg: SimulationConfig, supports: Sequence[np.ndarray], rng: np.random.Generator) -> tuple:
    """
    Fills the supports [population, covariate_1, ..., covariate_q] with values
    from +-[low, high], one independent draw per ordered pair (j, k), divides
    every row j of the stacked components by row_divisor_factor times its
    absolute sum, then averages each component with its transpose.
    diag B_0 = 1 and diag B_h = 0.
    """
    S = np.stack([np.asarray(s, dtype=bool) for s in supports])
    lo, hi = cfg.entry_range
    magnitudes = rng.uniform(lo, hi, size=S.shape)
    signs = np.where(rng.random(S.shape) < 0.5, -1.0, 1.0)
    V = np.where(S, signs * magnitudes, 0.0)
    for h in range(V.shape[0]):
        np.fill_diagonal(V[h], 0.0)

    divisor = np.abs(V).sum(axis=(0, 2)) * cfg.row_divisor_factor
    divisor[divisor == 0.0] = 1.0
    V = V / divisor[None, :, None]
    B = (V + V.transpose(0, 2, 1)) / 2.0

    np.fill_diagonal(B[0], 1.0)
    return tuple(B[h] for h in range(B.shape[0]))


def stabilize_for_covariates(cfg: SimulationConfig, b: Sequence[np.ndarray], U) -> tuple:
    """
    Shrinks B_1..B_q by repair_factor until every subject's precision matrix has
    smallest eigenvalue above pd_threshold, at most max_repairs times.

    Returns (b, repairs). Raises NonPdOmega if a smallest eigenvalue is still at
    most pd_threshold afterwards.
    """
    b = tuple(b)
    repairs = 0
    while True:
        min_eigenvalues = np.linalg.eigvalsh(subject_omegas(b, U))[:, 0]
        if min_eigenvalues.min() > cfg.pd_threshold or repairs == cfg.max_repairs:
            break
        b = (b[0],) + tuple(cfg.repair_factor * component for component in b[1:])
        repairs += 1

    worst = int(np.argmin(min_eigenvalues))
    if min_eigenvalues[worst] <= cfg.pd_threshold:
        raise NonPdOmega(worst, float(min_eigenvalues[worst]))
    if repairs:
        logger.info("Shrunk covariate components %d times to keep precision matrices positive definite", repairs)
    return b, repairs


def generate_covariates(cfg: SimulationConfig, rng: np.random.Generator) -> tuple:
    """
    ceil(q / 2) fair Bernoulli columns followed by standardized Unif(0, 1) columns.
    """
    n_binary = math.ceil(cfg.q / 2)
    binary = rng.integers(0, 2, size=(cfg.n, n_binary)).astype(float)
    continuous = rng.uniform(0.0, 1.0, size=(cfg.n, cfg.q - n_binary))
    kinds = [CovariateKind.BINARY] * n_binary + [CovariateKind.CONTINUOUS] * (cfg.q - n_binary)
    U, _ = standardize_columns(np.hstack((binary, continuous)), kinds)
    return U, kinds


def generate_dataset(cfg: SimulationConfig) -> SimulationTruth:
    streams = _streams(cfg)
    U, kinds = generate_covariates(cfg, streams.covariates)

    population = generate_population_graph(cfg, streams.graph)
    covariate_supports, active = generate_covariate_graphs(cfg, streams.covariate_graphs)
    b = fill_and_stabilize(cfg, [population, *covariate_supports], streams.entries)
    b, repairs = stabilize_for_covariates(cfg, b, U)

    omegas = subject_omegas(b, U)
    sigmas = np.linalg.inv(omegas)
    sigmas = (sigmas + sigmas.transpose(0, 2, 1)) / 2.0
    natural = cfg.model is SimulationModel.NATURAL
    gamma = generate_gamma(cfg, streams.gamma, U, sigmas if natural else None)
    mu = subject_means(gamma, U, sigmas if natural else None)

    X = np.empty((cfg.n, cfg.p))
    for i, noise_ss in enumerate(streams.noise):
        z = _generator(noise_ss).standard_normal(cfg.p)
        X[i] = mu[i] + cholesky(sigmas[i], lower=True) @ z

    dataset = validate_dataset(X, U, kinds)
    return SimulationTruth(
        gamma=gamma,
        b=b,
        omega_per_subject=omegas,
        mu_per_subject=mu,
        dataset=dataset,
        pd_repairs=repairs,
        active_covariates=active,
        config=cfg,
    )


def rebuild_truth(cfg: SimulationConfig, gamma: np.ndarray, b: Sequence[np.ndarray], dataset: Dataset,
                  pd_repairs: int = 0, active_covariates: tuple = ()) -> SimulationTruth:
    """
    Recomputes the per-subject quantities of a stored truth bundle.
    """
    omegas = subject_omegas(b, dataset.U)
    sigmas = None
    if cfg.model is SimulationModel.NATURAL:
        sigmas = np.linalg.inv(omegas)
        sigmas = (sigmas + sigmas.transpose(0, 2, 1)) / 2.0
    return SimulationTruth(
        gamma=np.asarray(gamma, dtype=float),
        b=tuple(np.asarray(component, dtype=float) for component in b),
        omega_per_subject=omegas,
        mu_per_subject=subject_means(np.asarray(gamma, dtype=float), dataset.U, sigmas),
        dataset=dataset,
        pd_repairs=pd_repairs,
        active_covariates=tuple(active_covariates),
        config=cfg,
    )

"""
Block coordinate descent for the sparse-group lasso least-squares problem

    (1/2n)||y - A_gamma gamma - sum_h A_h beta_h||^2
        + lam (||gamma||_1 + sum_h ||beta_h||_1) + lam_g sum_{h>=1} ||beta_h||_2

with blocks {gamma, beta_0, beta_1, ..., beta_q}. The gamma and beta_0 blocks carry
only the l1 penalty and are updated by cyclic coordinate descent; the grouped blocks
use the group-zero test followed by proximal gradient steps.

Penalties act on the coefficients of the internally standardized columns. The
reported objective therefore weights every coefficient by its column scale, which
reduces to the plain objective when standardization is switched off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from numba import njit

from src.Dataset import PenaltyConfig
from src.Errors import DimensionMismatch, NonFinite

logger = logging.getLogger(__name__)

# Columns whose standard deviation is below this (relative to their magnitude) are dropped.
DEGENERATE_SCALE = 1e-12
MONOTONE_SLACK = 1e-12
DENSE_EIGEN_LIMIT = 512


def soft_threshold(z, t):
    """
    sign(z) * max(|z| - t, 0), elementwise for arrays.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("Threshold must be nonnegative")
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_outer_iters: int = 10000
    inner_tol: float = 1e-8
    inner_max_iters: int = 1000
    standardize_columns: bool = True
    active_set: bool = True

    def __post_init__(self):
        if not (self.tol > 0 and self.inner_tol > 0):
            raise ValueError("tol and inner_tol must be positive")
        if self.max_outer_iters < 1 or self.inner_max_iters < 1:
            raise ValueError("Iteration limits must be at least 1")


@dataclass(frozen=True, eq=False)
class SglSolution:
    gamma: np.ndarray
    beta_blocks: tuple
    objective: float
    outer_iters: int
    converged: bool
    objective_path: tuple = ()


@dataclass(frozen=True, eq=False)
class ScaledDesign:
    """
    Standardized, column-major copy of the full design with block bookkeeping.
    Block 0 is gamma, block h + 1 is beta_h.
    """
    A: np.ndarray
    starts: np.ndarray
    stops: np.ndarray
    grouped: np.ndarray
    colsq: np.ndarray
    lipschitz: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.starts)

    def active_blocks(self, coef: np.ndarray) -> np.ndarray:
        return np.array([np.any(coef[s:e] != 0.0) for s, e in zip(self.starts, self.stops)], dtype=np.bool_)


def _largest_eigenvalue(gram: np.ndarray, tol: float = 1e-13, max_iter: int = 2000) -> float:
    """
    Top eigenvalue of a symmetric PSD matrix: dense for small blocks, power iteration otherwise.
    """
    m = gram.shape[0]
    if m == 0 or not np.any(gram):
        return 0.0
    if m <= DENSE_EIGEN_LIMIT:
        return float(np.linalg.eigvalsh(gram)[-1]) * (1.0 + 1e-9)
    v = np.random.default_rng(0).standard_normal(m)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        new_value = float(v @ w)
        v = w / norm
        if abs(new_value - value) <= tol * new_value:
            # Rayleigh quotients approach the top eigenvalue from below
            return new_value * (1.0 + 1e-9)
        value = new_value
    logger.debug("Power iteration did not settle, falling back to a dense eigensolver")
    return float(np.linalg.eigvalsh(gram)[-1])


@dataclass(frozen=True, eq=False)
class SglProblem:
    """
    One sparse-group lasso problem.

    Attributes:
    -----------
    y : np.ndarray
        Response vector of length n.
    A_gamma : np.ndarray
        n x q design of the l1-only gamma block.
    A_beta_blocks : tuple[np.ndarray, ...]
        Designs of beta_0 (l1 only) and beta_1..beta_q (sparse group).
    penalty : PenaltyConfig
    column_scales : np.ndarray
        Positive scale per column of [A_gamma | A_beta_0 | ... ]; ones when not standardizing.
    dropped : np.ndarray
        Columns without variance; their coefficients are pinned at zero.
    """
    y: np.ndarray
    A_gamma: np.ndarray
    A_beta_blocks: tuple
    penalty: PenaltyConfig
    column_scales: np.ndarray
    dropped: np.ndarray

    @classmethod
    def build(cls, y, A_gamma, A_beta_blocks: Sequence, penalty: PenaltyConfig, standardize: bool = True) -> "SglProblem":
        y = np.ascontiguousarray(y, dtype=float)
        A_gamma = np.asarray(A_gamma, dtype=float)
        blocks = tuple(np.asarray(block, dtype=float) for block in A_beta_blocks)
        n = y.shape[0]
        if A_gamma.ndim != 2 or A_gamma.shape[0] != n:
            raise DimensionMismatch(f"A_gamma must have {n} rows")
        if len(blocks) == 0:
            raise DimensionMismatch("At least the beta_0 block is required")
        for h, block in enumerate(blocks):
            if block.ndim != 2 or block.shape[0] != n:
                raise DimensionMismatch(f"Beta block {h} must have {n} rows")

        full = np.hstack((A_gamma, *blocks))
        magnitude = np.maximum(1.0, np.abs(full).max(axis=0, initial=0.0))
        if standardize:
            sd = full.std(axis=0, ddof=1) if n > 1 else np.zeros(full.shape[1])
            dropped = sd <= DEGENERATE_SCALE * magnitude
            scales = np.where(dropped, 1.0, sd)
        else:
            dropped = ~np.any(full != 0.0, axis=0)
            scales = np.ones(full.shape[1])
        if dropped.any():
            logger.debug("Dropping %d zero-variance columns", int(dropped.sum()))
        return cls(y, A_gamma, blocks, penalty, scales, dropped)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.A_gamma.shape[1]

    @property
    def block_widths(self) -> list:
        return [self.A_gamma.shape[1]] + [block.shape[1] for block in self.A_beta_blocks]

    @property
    def n_coef(self) -> int:
        return int(sum(self.block_widths))

    def with_penalty(self, penalty: PenaltyConfig) -> "SglProblem":
        other = SglProblem(self.y, self.A_gamma, self.A_beta_blocks, penalty, self.column_scales, self.dropped)
        if "design" in self.__dict__:
            other.__dict__["design"] = self.__dict__["design"]
        return other

    @cached_property
    def design(self) -> ScaledDesign:
        full = np.hstack((self.A_gamma, *self.A_beta_blocks)) / self.column_scales
        full[:, self.dropped] = 0.0
        A = np.asfortranarray(full)
        widths = self.block_widths
        stops = np.cumsum(widths).astype(np.int64)
        starts = (stops - np.asarray(widths, dtype=np.int64)).astype(np.int64)
        grouped = np.array([False, False] + [True] * (len(widths) - 2), dtype=np.bool_)
        colsq = np.einsum("ij,ij->j", A, A) / self.n
        lipschitz = np.zeros(len(widths))
        for b in np.flatnonzero(grouped):
            block = A[:, starts[b]:stops[b]]
            lipschitz[b] = _largest_eigenvalue(block.T @ block / self.n)
        return ScaledDesign(A, starts, stops, grouped, colsq, lipschitz)

    def pack(self, gamma, beta_blocks) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.q,) or len(beta_blocks) != len(self.A_beta_blocks):
            raise DimensionMismatch("Coefficient blocks do not match the problem")
        for block, design in zip(beta_blocks, self.A_beta_blocks):
            if np.shape(block) != (design.shape[1],):
                raise DimensionMismatch("Coefficient blocks do not match the problem")
        return np.concatenate([gamma, *[np.asarray(block, dtype=float) for block in beta_blocks]])

    def unpack(self, coef: np.ndarray) -> tuple:
        bounds = np.cumsum(self.block_widths)[:-1]
        parts = np.split(np.asarray(coef, dtype=float), bounds)
        return parts[0], tuple(parts[1:])

    def to_scaled(self, coef: np.ndarray) -> np.ndarray:
        scaled = np.asarray(coef, dtype=float) * self.column_scales
        scaled[self.dropped] = 0.0
        return scaled

    def from_scaled(self, coef: np.ndarray) -> np.ndarray:
        original = coef / self.column_scales
        original[self.dropped] = 0.0
        return original

    def fitted(self, gamma, beta_blocks) -> np.ndarray:
        out = self.A_gamma @ np.asarray(gamma, dtype=float)
        for block, beta in zip(self.A_beta_blocks, beta_blocks):
            out = out + block @ np.asarray(beta, dtype=float)
        return out


def objective(problem: SglProblem, gamma, beta_blocks) -> float:
    """
    Penalized least-squares objective at (gamma, beta_blocks) in original coordinates.
    Penalty weights are the column scales (all ones without standardization).
    """
    coef = problem.pack(gamma, beta_blocks)
    residual = problem.y - problem.fitted(gamma, beta_blocks)
    weighted = coef * problem.column_scales
    value = 0.5 * float(residual @ residual) / problem.n
    value += problem.penalty.lam * float(np.abs(weighted).sum())
    _, weighted_blocks = problem.unpack(weighted)
    value += problem.penalty.lam_g * float(sum(np.linalg.norm(block) for block in weighted_blocks[1:]))
    return value


def _scaled_objective(problem: SglProblem, coef: np.ndarray, residual: np.ndarray) -> float:
    design = problem.design
    value = 0.5 * float(residual @ residual) / problem.n + problem.penalty.lam * float(np.abs(coef).sum())
    for b in np.flatnonzero(design.grouped):
        value += problem.penalty.lam_g * float(np.linalg.norm(coef[design.starts[b]:design.stops[b]]))
    return value


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _column_dot(A, col, v):
    acc = 0.0
    for i in range(A.shape[0]):
        acc += A[i, col] * v[i]
    return acc


@njit(cache=True)
def _add_column(A, col, alpha, v):
    for i in range(A.shape[0]):
        v[i] += alpha * A[i, col]


@njit(cache=True)
def _lasso_block(A, r, coef, start, stop, colsq, lam, inner_tol, inner_max_iters):
    n = A.shape[0]
    before = coef[start:stop].copy()
    for _ in range(inner_max_iters):
        max_delta = 0.0
        for l in range(start, stop):
            if colsq[l] == 0.0:
                continue
            old = coef[l]
            z = _column_dot(A, l, r) / n + colsq[l] * old
            new = _soft(z, lam) / colsq[l]
            delta = new - old
            if delta != 0.0:
                _add_column(A, l, -delta, r)
                coef[l] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < inner_tol:
            break
    change = 0.0
    for l in range(start, stop):
        d = abs(coef[l] - before[l - start])
        if d > change:
            change = d
    return change


@njit(cache=True)
def _group_block(A, r, coef, start, stop, lipschitz, lam, lam_g, inner_tol, inner_max_iters):
    n = A.shape[0]
    m = stop - start
    before = coef[start:stop].copy()
    # r becomes the partial residual without this block
    for k in range(m):
        if before[k] != 0.0:
            _add_column(A, start + k, before[k], r)

    norm2 = 0.0
    for k in range(m):
        s = _soft(_column_dot(A, start + k, r) / n, lam)
        norm2 += s * s

    x = np.zeros(m)
    if lipschitz > 0.0 and np.sqrt(norm2) > lam_g:
        for k in range(m):
            x[k] = before[k]
        fit = np.zeros(n)
        for k in range(m):
            if x[k] != 0.0:
                _add_column(A, start + k, x[k], fit)
        step = 1.0 / lipschitz
        v = np.empty(m)
        resid = np.empty(n)
        for _ in range(inner_max_iters):
            for i in range(n):
                resid[i] = r[i] - fit[i]
            vnorm2 = 0.0
            for k in range(m):
                v[k] = _soft(x[k] + step * _column_dot(A, start + k, resid) / n, step * lam)
                vnorm2 += v[k] * v[k]
            vnorm = np.sqrt(vnorm2)
            shrink = 0.0
            if vnorm > 0.0:
                shrink = max(0.0, 1.0 - step * lam_g / vnorm)
            max_delta = 0.0
            for k in range(m):
                d = shrink * v[k] - x[k]
                if d != 0.0:
                    _add_column(A, start + k, d, fit)
                    x[k] += d
                    if abs(d) > max_delta:
                        max_delta = abs(d)
            if max_delta < inner_tol:
                break

    change = 0.0
    for k in range(m):
        coef[start + k] = x[k]
        if x[k] != 0.0:
            _add_column(A, start + k, -x[k], r)
        d = abs(x[k] - before[k])
        if d > change:
            change = d
    return change


@njit(cache=True)
def _sweep(A, r, coef, starts, stops, grouped, visit, colsq, lipschitz, lam, lam_g, inner_tol, inner_max_iters):
    change = 0.0
    for b in range(starts.shape[0]):
        if not visit[b]:
            continue
        if grouped[b]:
            c = _group_block(A, r, coef, starts[b], stops[b], lipschitz[b], lam, lam_g, inner_tol, inner_max_iters)
        else:
            c = _lasso_block(A, r, coef, starts[b], stops[b], colsq, lam, inner_tol, inner_max_iters)
        if c > change:
            change = c
    return change


@dataclass
class SolverState:
    """
    Coefficients in the standardized scale and the matching residual y - A coef.
    """
    coef: np.ndarray
    residual: np.ndarray

    @classmethod
    def initial(cls, problem: SglProblem, gamma=None, beta_blocks=None) -> "SolverState":
        if gamma is None:
            coef = np.zeros(problem.n_coef)
        else:
            coef = problem.to_scaled(problem.pack(gamma, beta_blocks))
        residual = np.ascontiguousarray(problem.y - problem.design.A @ coef)
        return cls(coef, residual)

    def copy(self) -> "SolverState":
        return SolverState(self.coef.copy(), self.residual.copy())

    def coefficients(self, problem: SglProblem) -> tuple:
        return problem.unpack(problem.from_scaled(self.coef))


def _update_block(problem: SglProblem, block: int, state: SolverState, opts: SolverOptions) -> SolverState:
    design = problem.design
    state = state.copy()
    start, stop = int(design.starts[block]), int(design.stops[block])
    lam, lam_g = problem.penalty.lam, problem.penalty.lam_g
    if design.grouped[block]:
        _group_block(design.A, state.residual, state.coef, start, stop, design.lipschitz[block],
                     lam, lam_g, opts.inner_tol, opts.inner_max_iters)
    else:
        _lasso_block(design.A, state.residual, state.coef, start, stop, design.colsq,
                     lam, opts.inner_tol, opts.inner_max_iters)
    return state


def block_update_gamma(problem: SglProblem, state: SolverState, opts: SolverOptions = SolverOptions()) -> SolverState:
    """
    Cyclic coordinate descent on the l1-only gamma block.
    """
    return _update_block(problem, 0, state, opts)


def block_update_beta(problem: SglProblem, h: int, state: SolverState, opts: SolverOptions = SolverOptions()) -> SolverState:
    """
    Updates beta_h: coordinate descent for h = 0, group-zero test plus proximal
    gradient for h >= 1.
    """
    if not 0 <= h < len(problem.A_beta_blocks):
        raise IndexError(f"Block index {h} out of range")
    return _update_block(problem, h + 1, state, opts)


def solve(problem: SglProblem, opts: SolverOptions = SolverOptions(), warm_start: Optional[SglSolution] = None) -> SglSolution:
    """
    Cycles the blocks {gamma, beta_0, ..., beta_q} until the largest coefficient change
    of a full cycle drops below tol * max(1, max |coef|).
    """
    design = problem.design
    lam, lam_g = problem.penalty.lam, problem.penalty.lam_g
    if warm_start is None:
        state = SolverState.initial(problem)
    else:
        state = SolverState.initial(problem, warm_start.gamma, warm_start.beta_blocks)
    coef, residual = state.coef, state.residual

    every_block = np.ones(design.n_blocks, dtype=np.bool_)
    history = [_scaled_objective(problem, coef, residual)]
    converged = False
    outer = 0
    for outer in range(1, opts.max_outer_iters + 1):
        change = _sweep(design.A, residual, coef, design.starts, design.stops, design.grouped, every_block,
                        design.colsq, design.lipschitz, lam, lam_g, opts.inner_tol, opts.inner_max_iters)
        value = _scaled_objective(problem, coef, residual)
        if not np.isfinite(value):
            raise NonFinite(f"Objective became {value} after {outer} cycles")
        if value > history[-1] + MONOTONE_SLACK * max(1.0, abs(history[-1])):
            logger.debug("Objective increased from %.17g to %.17g", history[-1], value)
        history.append(value)

        threshold = opts.tol * max(1.0, float(np.abs(coef).max(initial=0.0)))
        if change < threshold:
            converged = True
            break

        if opts.active_set:
            active = design.active_blocks(coef)
            if active.any():
                for _ in range(opts.max_outer_iters):
                    active_change = _sweep(design.A, residual, coef, design.starts, design.stops, design.grouped, active,
                                           design.colsq, design.lipschitz, lam, lam_g, opts.inner_tol, opts.inner_max_iters)
                    if active_change < opts.tol * max(1.0, float(np.abs(coef).max(initial=0.0))):
                        break

    if not converged:
        logger.warning("Solver stopped after %d cycles without reaching tol=%g", outer, opts.tol)

    gamma, beta_blocks = problem.unpack(problem.from_scaled(coef))
    value = objective(problem, gamma, beta_blocks)
    if not np.isfinite(value):
        raise NonFinite("Objective is not finite at the returned point")
    return SglSolution(gamma, beta_blocks, value, outer, converged, tuple(history))


def kkt_residual(problem: SglProblem, sol: SglSolution) -> float:
    """
    Largest violation of the first-order optimality conditions, measured in the
    standardized scale the penalties act on.
    """
    design = problem.design
    lam, lam_g = problem.penalty.lam, problem.penalty.lam_g
    coef = problem.to_scaled(problem.pack(sol.gamma, sol.beta_blocks))
    residual = problem.y - design.A @ coef
    grad = design.A.T @ residual / problem.n
    keep = ~problem.dropped

    violation = 0.0
    for b in range(design.n_blocks):
        s, e = design.starts[b], design.stops[b]
        c, g, k = coef[s:e], grad[s:e], keep[s:e]
        if e == s:
            continue
        active = (c != 0.0) & k
        inactive = (c == 0.0) & k
        if design.grouped[b] and np.any(active):
            norm = np.linalg.norm(c)
            if active.any():
                violation = max(violation, float(np.abs(g[active] - lam * np.sign(c[active]) - lam_g * c[active] / norm).max()))
            if inactive.any():
                violation = max(violation, float(np.maximum(np.abs(g[inactive]) - lam, 0.0).max()))
        elif design.grouped[b]:
            violation = max(violation, max(0.0, float(np.linalg.norm(soft_threshold(g[k], lam))) - lam_g))
        else:
            if active.any():
                violation = max(violation, float(np.abs(g[active] - lam * np.sign(c[active])).max()))
            if inactive.any():
                violation = max(violation, float(np.maximum(np.abs(g[inactive]) - lam, 0.0).max()))
    return violation

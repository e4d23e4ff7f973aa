"""Simultaneous orthogonal matching pursuit (SOMP) for the MMV model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .frontend import DenseOperator

log = logging.getLogger(__name__)

RIDGE = 1e-10


@dataclass(frozen=True)
class GreedyConfig:
    max_support: int             # columns of F
    tol: float = 0.0             # relative Frobenius residual
    block: int = 1               # columns per selectable atom (N_BS for user blocks)

    def __post_init__(self):
        if self.max_support < 0:
            raise ValueError("max_support must be non-negative")
        if self.block < 1:
            raise ValueError("block size must be >= 1")
        if self.tol < 0:
            raise ValueError("tolerance must be non-negative")


@dataclass
class SompResult:
    h: np.ndarray
    support: np.ndarray
    residual_norms: list = field(default_factory=list)
    ridge: bool = False


def _refit(a: np.ndarray, y: np.ndarray):
    x, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank >= a.shape[1]:
        return x, False
    gram = a.conj().T @ a + RIDGE * np.eye(a.shape[1])
    return np.linalg.solve(gram, a.conj().T @ y), True


def somp(y: np.ndarray, op, cfg: GreedyConfig) -> SompResult:
    """Greedy joint-support recovery of ``H`` from ``Y = F H + N``.

    ``op`` is a dense ``Q x J`` array or any object offering ``shape``,
    ``apply_adjoint`` and ``columns``.  Each step adds the atom (block of
    ``cfg.block`` consecutive columns) whose correlation with the residual,
    summed in magnitude over subcarriers, is largest, then refits every
    subcarrier by least squares on the whole support.
    """
    if isinstance(op, np.ndarray):
        op = DenseOperator(op)
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    q, j = op.shape
    if cfg.max_support > q:
        raise ValueError(f"max_support={cfg.max_support} exceeds Q={q}")
    if j % cfg.block:
        raise ValueError(f"J={j} is not a multiple of the block size {cfg.block}")
    n_atoms = j // cfg.block

    h = np.zeros((j, y.shape[1]), dtype=complex)
    total = np.linalg.norm(y)
    result = SompResult(h, np.zeros(0, dtype=int), [float(total)])
    if total == 0:
        return result

    chosen: list[int] = []
    resid = y
    while (len(chosen) + 1) * cfg.block <= cfg.max_support:
        corr = np.abs(op.apply_adjoint(resid)).sum(axis=1).reshape(n_atoms, cfg.block).sum(axis=1)
        corr[chosen] = -np.inf
        chosen.append(int(np.argmax(corr)))
        cols = (np.array(chosen)[:, None] * cfg.block + np.arange(cfg.block)).ravel()
        a = op.columns(cols)
        x, ridged = _refit(a, y)
        if ridged and not result.ridge:
            log.warning("rank-deficient support of %d columns; using ridge %.0e", len(cols), RIDGE)
        result.ridge |= ridged
        resid = y - a @ x
        norm = float(np.linalg.norm(resid))
        result.residual_norms.append(norm)
        result.support = np.sort(cols)
        h[:] = 0
        h[cols] = x
        if norm <= cfg.tol * total:
            break
    return result

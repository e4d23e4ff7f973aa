"""Activity detectors and experiment metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NMSE_FLOOR_DB = -300.0
NMSE_CEIL_DB = 300.0


@dataclass(frozen=True)
class DetectorConfig:
    cg_rel: float = 0.01       # eps_cg = cg_rel * max |h|
    cg_frac: float = 0.9
    bi_eps: float = 0.5
    bi_frac: float = 0.5

    def __post_init__(self):
        for name in ("cg_rel", "cg_frac", "bi_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.bi_eps < 1.0:
            raise ValueError(f"bi_eps must lie in (0, 1), got {self.bi_eps}")


@dataclass(frozen=True)
class DetectionResult:
    active: np.ndarray      # int8 flags, length K
    scores: np.ndarray      # fraction of a user's entries above threshold


def threshold_fn(x, eps: float):
    """1 where ``|x| > eps`` (strict), else 0."""
    if eps < 0:
        raise ValueError("threshold must be non-negative")
    return (np.abs(x) > eps).astype(np.int8)


def user_slice(column: np.ndarray, n_bs: int) -> np.ndarray:
    """Reshape one length-``J`` column into the ``N_BS x K`` per-user layout."""
    column = np.asarray(column)
    if column.ndim != 1 or column.size % n_bs:
        raise ValueError(f"column of length {column.size} is not a multiple of N_BS={n_bs}")
    return column.reshape(-1, n_bs).T


def _decide(hits: np.ndarray, frac: float) -> DetectionResult:
    scores = hits.mean(axis=0)
    return DetectionResult((scores >= frac).astype(np.int8), scores)


def cg_ad(h1: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> DetectionResult:
    """Channel-gain detector on the ``N_BS x K`` first-subcarrier estimate.

    An all-zero estimate gives ``eps_cg = 0``; nothing exceeds it, so every
    user is declared inactive.
    """
    h1 = np.asarray(h1)
    eps = cfg.cg_rel * float(np.max(np.abs(h1), initial=0.0))
    return _decide(threshold_fn(h1, eps), cfg.cg_frac)


def bi_ad(eta1: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> DetectionResult:
    """Belief-indicator detector on the ``N_BS x K`` first-subcarrier beliefs."""
    return _decide(threshold_fn(np.asarray(eta1), cfg.bi_eps), cfg.bi_frac)


DETECTORS = {"cg": cg_ad, "bi": bi_ad}


def aud_error_prob(est, truth) -> float:
    est = np.asarray(est).astype(int)
    truth = np.asarray(truth).astype(int)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    if est.size == 0:
        raise ValueError("empty activity vectors")
    return float(np.mean(np.abs(est - truth)))


def _to_db(ratio):
    with np.errstate(divide="ignore"):
        return np.clip(10 * np.log10(ratio), NMSE_FLOOR_DB, NMSE_CEIL_DB)


def nmse(h_est, h_true, activity, n_bs: int, mode: str = "active", per_subcarrier: bool = False):
    """NMSE in dB, clipped to [-300, 300] dB.

    ``mode='active'`` keeps only rows of truly active users, ``'full'`` uses
    the whole matrix.  ``per_subcarrier`` returns one value per column.
    """
    h_est = np.asarray(h_est)
    h_true = np.asarray(h_true)
    if h_est.shape != h_true.shape:
        raise ValueError(f"shape mismatch: {h_est.shape} vs {h_true.shape}")
    if h_true.ndim == 1:
        h_est, h_true = h_est[:, None], h_true[:, None]
    if mode == "active":
        rows = np.repeat(np.asarray(activity).astype(bool), n_bs)
        if rows.size != h_true.shape[0]:
            raise ValueError("activity pattern does not match the channel rows")
        h_est, h_true = h_est[rows], h_true[rows]
    elif mode != "full":
        raise ValueError(f"unknown NMSE mode {mode!r}")
    axis = 0 if per_subcarrier else None
    ref = np.sum(np.abs(h_true) ** 2, axis=axis)
    if np.any(ref == 0):
        raise ValueError("reference channel of the active users is zero")
    err = np.sum(np.abs(h_est - h_true) ** 2, axis=axis)
    out = _to_db(err / ref)
    return out if per_subcarrier else float(out)

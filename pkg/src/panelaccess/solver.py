"""OAMP with EM-learned Bernoulli-Gaussian prior for multiple measurement vectors.

Every quantity indexed by ``p`` is processed for all subcarriers at once:
per-entry arrays have shape ``(J, P)``.  The linear step assumes a
row-orthonormal sensing operator (``F F^H = I``).

Variances are tracked per *group*.  An operator may expose ``groups()``
returning column and row labels under which it is block diagonal (the
multi-panel sensing map is block diagonal over panels); each block then gets
its own ``tau^2`` and ``v^2``.  Operators without it form a single group.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit
from scipy.stats import norm

log = logging.getLogger(__name__)

TAU_FLOOR = 1e-12
NOISE_FLOOR = 1e-12
LAMBDA_CLIP = 1e-12
OMEGA_CLAMP = 1 - 1e-6

SPARSITY_RULES = ("mmv", "entry", "user")
NOISE_RULES = ("le", "posterior")
VARIANCE_SOURCES = ("residual", "extrinsic")
GROUPINGS = ("auto", "global")


class SolverDivergence(FloatingPointError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class SolverConfig:
    n_iter: int = 100
    snr0: float = 100.0
    # 'mmv': one lambda per row shared by all subcarriers; 'entry': lambda = eta.
    sparsity_rule: str = "mmv"
    # 'le': EM on the linear-step side; 'posterior': residual of xi plus (J/Q) omega_bar.
    noise_rule: str = "le"
    learn_signal_var: bool = False
    # 'residual': v^2 from ||y - F u||^2; 'extrinsic': v^2 from the NLE output.
    variance_source: str = "residual"
    grouping: str = "auto"

    def __post_init__(self):
        for name, allowed in (("sparsity_rule", SPARSITY_RULES), ("noise_rule", NOISE_RULES),
                              ("variance_source", VARIANCE_SOURCES), ("grouping", GROUPINGS)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.n_iter < 1:
            raise ValueError("need at least one iteration")
        if self.snr0 <= -1:
            raise ValueError("snr0 must exceed -1")


@dataclass
class Prior:
    sparsity: np.ndarray      # (J, 1) or (J, P)
    signal_var: float


class Groups:
    """Column/row partition; per-group means via sparse indicator products."""

    def __init__(self, cols, rows):
        self.cols = np.asarray(cols, dtype=int)
        self.rows = np.asarray(rows, dtype=int)
        self.n = int(max(self.cols.max(), self.rows.max())) + 1
        self.n_cols = np.bincount(self.cols, minlength=self.n)
        self.n_rows = np.bincount(self.rows, minlength=self.n)
        if np.any(self.n_cols == 0) or np.any(self.n_rows == 0):
            raise ValueError("every group needs at least one row and one column")
        self.gain = self.n_cols / self.n_rows      # J_g / Q_g
        self._cind = self._indicator(self.cols)
        self._rind = self._indicator(self.rows)
        self.period = self._find_period()
        self.base = self.cols[:self.period]

    def _indicator(self, labels):
        m = len(labels)
        return sparse.csr_matrix((np.ones(m), (labels, np.arange(m))), shape=(self.n, m))

    @classmethod
    def single(cls, q: int, j: int) -> "Groups":
        return cls(np.zeros(j, dtype=int), np.zeros(q, dtype=int))

    @classmethod
    def for_operator(cls, op, grouping: str = "auto") -> "Groups":
        q, j = op.shape
        if grouping == "auto" and hasattr(op, "groups"):
            return cls(*op.groups())
        return cls.single(q, j)

    def _find_period(self) -> int:
        j = len(self.cols)
        for n in range(1, j + 1):
            if j % n == 0 and np.array_equal(self.cols.reshape(-1, n), np.broadcast_to(self.cols[:n], (j // n, n))):
                return n
        return j

    def col_mean(self, x):
        return (self._cind @ x) / self.n_cols[:, None]

    def row_mean(self, x):
        return (self._rind @ x) / self.n_rows[:, None]

    def spread(self, x):
        """Per-group ``(n, P)`` values expanded to the ``(J, P)`` columns."""
        return x[self.cols]

    def folded(self, x):
        """View of a ``(J, ...)`` array as ``(J / period, period, ...)``."""
        return x.reshape((-1, self.period) + x.shape[1:])

    def pattern(self, x):
        """Per-group values laid out to broadcast against :meth:`folded` arrays."""
        return x[self.base]


@dataclass
class SolverState:
    r: np.ndarray
    tau2: np.ndarray          # (n_groups, P)
    u: np.ndarray
    v2: np.ndarray            # (n_groups, P)
    noise_var: float
    xi: np.ndarray | None = None
    omega: np.ndarray | None = None
    eta: np.ndarray | None = None
    omega_bar: np.ndarray | None = None
    psi2: np.ndarray | None = None
    kappa: np.ndarray | None = None
    resid: np.ndarray | None = None     # y - F u for the current u, if known
    iteration: int = 0
    clamped: int = 0


@dataclass
class SolverOutput:
    h: np.ndarray
    eta: np.ndarray
    noise_var: float
    prior: Prior
    trace: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)


def _excess(c):
    return (1 + c**2) * norm.cdf(-c) - c * norm.pdf(c)


def initial_sparsity(undersampling: float, grid=None) -> float:
    """Sparsity-ratio initialiser for measurement ratio ``Q/J``.

    Maximises ``(1 - 2 psi(c) J/Q) / (1 + c^2 - 2 psi(c))`` over ``c`` on a
    grid ``(0, 10]`` with step 1e-4, where
    ``psi(c) = (1 + c^2) Phi(-c) - c phi(c)``.
    """
    if not 0 < undersampling <= 1:
        raise ValueError(f"Q/J must lie in (0, 1], got {undersampling}")
    if grid is None:
        grid = np.arange(1, 100_001) * 1e-4
    psi = _excess(grid)
    ratio = (1 - 2 * psi / undersampling) / (1 + grid**2 - 2 * psi)
    return float(undersampling * ratio.max())


def init_params(y: np.ndarray, op, cfg: SolverConfig | None = None, groups: Groups | None = None):
    """Initial prior, noise variance and state (LE inputs zero, ``v^2 = 1``).

    Returns ``(prior, noise_var0, state)``.  ``noise_var0`` is reported
    unfloored; the state carries the floored value.
    """
    cfg = cfg or SolverConfig()
    q, j = op.shape
    groups = groups or Groups.for_operator(op, cfg.grouping)
    n_sub = y.shape[1]
    energy = np.sum(np.abs(y) ** 2, axis=0)               # ||y_p||^2
    noise0 = float(np.mean(energy / ((cfg.snr0 + 1) * q)))
    lam0 = initial_sparsity(q / j)
    fro = op.frobenius_sq() / q
    sig = (np.mean(energy) - q * noise0) / (q * lam0 * fro)
    prior = Prior(np.full((j, 1), lam0), max(float(sig), TAU_FLOOR))
    shape = (groups.n, n_sub)
    state = SolverState(
        r=np.zeros((j, n_sub), dtype=complex),
        tau2=np.ones(shape),
        u=np.zeros((j, n_sub), dtype=complex),
        v2=np.ones(shape),
        noise_var=max(noise0, NOISE_FLOOR),
    )
    return prior, noise0, state


def le_variance(v2, noise_var, gain):
    """``tau^2 = (J/Q - 1) v^2 + (J/Q) sigma^2``."""
    return np.maximum((gain - 1) * v2 + gain * noise_var, TAU_FLOOR)


def le_step(state: SolverState, op, y: np.ndarray, groups: Groups,
            variance_source: str = "residual") -> SolverState:
    """De-correlated linear step ``r = u + (J/Q) F^H (y - F u)``, ratio taken per group."""
    resid = state.resid if state.resid is not None else y - op.apply(state.u)
    if variance_source == "residual":
        seen = groups.row_mean(np.abs(resid) ** 2)
        state.v2 = np.maximum(seen - state.noise_var, TAU_FLOOR)
    gain = groups.gain[:, None]
    step = groups.folded(op.apply_adjoint(resid)) * groups.pattern(gain)
    state.r = state.u + step.reshape(state.u.shape)
    state.tau2 = le_variance(state.v2, state.noise_var, gain)
    return state


def posterior_moments(r, tau2, sparsity, signal_var):
    """Bernoulli-Gaussian posterior of ``h`` from ``r = h + tau z``.

    Returns ``(eta, xi, omega, kappa, psi2)``; ``eta`` is the posterior
    probability that ``h != 0``.
    """
    lam = np.clip(sparsity, LAMBDA_CLIP, 1 - LAMBDA_CLIP)
    tau2 = np.maximum(tau2, TAU_FLOOR)
    total = signal_var + tau2
    mag2 = np.abs(r) ** 2
    # log b - log a without forming either term
    prior_odds = np.log(lam) - np.log1p(-lam)
    log_ratio = prior_odds + np.log(tau2 / total) + mag2 * (1 / tau2 - 1 / total)
    eta = expit(log_ratio)
    kappa = r * (signal_var / total)
    psi2 = signal_var * tau2 / total
    xi = eta * kappa
    omega = eta * psi2 + eta * (1 - eta) * np.abs(kappa) ** 2
    return eta, xi, omega, kappa, psi2


def extrinsic_variance(omega_bar, tau2):
    """``v^2 = (1/omega_bar - 1/tau^2)^-1``."""
    return 1.0 / (1.0 / omega_bar - 1.0 / tau2)


def nle_step(state: SolverState, prior: Prior, groups: Groups) -> SolverState:
    tau2 = state.tau2
    fold, pat = groups.folded, groups.pattern
    eta, xi, omega, kappa, psi2 = posterior_moments(fold(state.r), pat(tau2),
                                                    fold(prior.sparsity), prior.signal_var)
    eta, xi, omega, kappa = (a.reshape(state.r.shape) for a in (eta, xi, omega, kappa))
    omega_bar = groups.col_mean(omega)
    limit = OMEGA_CLAMP * tau2
    over = omega_bar >= limit
    if over.any():
        state.clamped += int(over.sum())
        log.debug("iteration %d: clamped mean posterior variance in %d cells",
                  state.iteration, int(over.sum()))
    omega_bar = np.clip(omega_bar, TAU_FLOOR * tau2, limit)
    v2 = extrinsic_variance(omega_bar, tau2)
    u = pat(v2) * (fold(xi) / pat(omega_bar) - fold(state.r) / pat(tau2))
    state.u = u.reshape(state.r.shape)
    state.resid = None
    state.v2 = v2
    state.xi, state.omega, state.eta = xi, omega, eta
    state.omega_bar, state.kappa = omega_bar, kappa
    state.psi2 = psi2         # per group, laid out by Groups.pattern
    return state


def em_update(state: SolverState, prior: Prior, op, y: np.ndarray, groups: Groups,
              cfg: SolverConfig | None = None) -> Prior:
    """Refresh sparsity ratios, noise variance (in place on state) and signal variance."""
    cfg = cfg or SolverConfig()
    q, j = op.shape
    if cfg.sparsity_rule == "mmv":
        prior.sparsity = state.eta.mean(axis=1, keepdims=True)
    elif cfg.sparsity_rule == "user":
        per_user = state.eta.reshape(-1, op.n_bs * state.eta.shape[1]).mean(axis=1)
        prior.sparsity = np.repeat(per_user, op.n_bs)[:, None]
    else:
        prior.sparsity = state.eta.copy()
    if cfg.noise_rule == "le":
        s2, v2 = state.noise_var, state.v2
        state.resid = y - op.apply(state.u)
        seen = groups.row_mean(np.abs(state.resid) ** 2)
        shrink = s2 / (v2 + s2)
        cell = shrink**2 * seen + v2 * shrink
        new = np.sum(groups.n_rows[:, None] * cell) / (q * cell.shape[1])
    else:
        resid = np.sum(np.abs(y - op.apply(state.xi)) ** 2, axis=0) / q
        new = np.mean(resid + (j / q) * state.omega_bar.mean(axis=0))
    state.noise_var = max(float(new), NOISE_FLOOR)
    if cfg.learn_signal_var:
        mass = state.eta.sum()
        if mass > 0:
            second = groups.folded(np.abs(state.kappa) ** 2) + state.psi2
            weighted = np.sum(groups.folded(state.eta) * second)
            prior.signal_var = max(float(weighted / mass), TAU_FLOOR)
    return prior


def run(y: np.ndarray, op, n_iter: int | None = None, cfg: SolverConfig | None = None,
        callback=None) -> SolverOutput:
    """Run the OAMP-EM-MMV iterations on ``Y`` (shape ``(Q, P)``).

    ``callback(t, state)`` is invoked after the NLE step of every iteration,
    before the parameters are refreshed.
    """
    cfg = cfg or SolverConfig()
    n_iter = cfg.n_iter if n_iter is None else n_iter
    if n_iter < 1:
        raise ValueError("need at least one iteration")
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    q, j = op.shape
    if y.shape[0] != q:
        raise ValueError(f"measurements have {y.shape[0]} rows, operator expects {q}")

    groups = Groups.for_operator(op, cfg.grouping)
    prior, noise0, state = init_params(y, op, cfg, groups)
    flags = {"zero_input": False, "clamped": 0}
    if noise0 == 0.0:
        flags["zero_input"] = True
        zeros = np.zeros((j, y.shape[1]), dtype=complex)
        return SolverOutput(zeros, np.zeros(zeros.shape), 0.0, prior, [], flags)

    trace = []
    for t in range(1, n_iter + 1):
        state.iteration = t
        le_step(state, op, y, groups, cfg.variance_source)
        if not np.all(np.isfinite(state.r)):
            raise SolverDivergence(t, "LE output")
        nle_step(state, prior, groups)
        if not np.all(np.isfinite(state.u)):
            raise SolverDivergence(t, "NLE output")
        if callback is not None:
            callback(t, state)
        em_update(state, prior, op, y, groups, cfg)
        if not np.isfinite(state.noise_var):
            raise SolverDivergence(t, "noise variance")
        trace.append({
            "iteration": t,
            "tau2": state.tau2.mean(axis=0),
            "v2": state.v2.mean(axis=0),
            "noise_var": state.noise_var,
            "mean_sparsity": float(np.mean(prior.sparsity)),
        })
    flags["clamped"] = state.clamped
    return SolverOutput(state.xi, state.eta, state.noise_var, prior, trace, flags)


def write_trace(path, trace) -> None:
    """One CSV row per (iteration, subcarrier); variances averaged over groups."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "p", "tau2", "v2", "noise_var", "mean_sparsity"])
        for row in trace:
            for p, (tau2, v2) in enumerate(zip(row["tau2"], row["v2"])):
                w.writerow([row["iteration"], p + 1, repr(float(tau2)), repr(float(v2)),
                            repr(row["noise_var"]), repr(row["mean_sparsity"])])

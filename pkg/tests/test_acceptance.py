"""Acceptance criteria 1-11; each test records a PASS/FAIL line for the summary."""

import time

import numpy as np
import pytest

from conftest import DESK_SEED, desk_run, full_rows
from panelaccess.array import ArrayGeometry, OfdmConfig
from panelaccess.frontend import build_sensing
from panelaccess.harness import ExperimentConfig, run_trial, symbol_latency
from panelaccess.solver import extrinsic_variance, le_variance, posterior_moments


def _mean(rows, key):
    return float(np.mean([r[key] for r in rows]))


# 1 ---------------------------------------------------------------------------

def _random_geometry(rng):
    while True:
        g = ArrayGeometry(*(int(v) for v in rng.integers(1, 5, 4)), int(rng.integers(2, 8)))
        if g.n_bs <= 64:
            return g


def test_c01_operator_unitarity(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_unit = worst_apply = 0.0
    for _ in range(50):
        geom = _random_geometry(rng)
        k = int(rng.integers(1, 65))
        g = int(rng.integers(1, min(8, k) + 1))
        op = build_sensing(geom, k, g, rng)
        f = op.to_dense()
        worst_unit = max(worst_unit, np.max(np.abs(f @ f.conj().T - np.eye(f.shape[0]))))
        x = rng.standard_normal((f.shape[1], 2)) + 1j * rng.standard_normal((f.shape[1], 2))
        y = rng.standard_normal((f.shape[0], 2)) + 1j * rng.standard_normal((f.shape[0], 2))
        worst_apply = max(worst_apply, np.max(np.abs(op.apply(x) - f @ x)),
                          np.max(np.abs(op.apply_adjoint(y) - f.conj().T @ y)))
    elapsed = time.perf_counter() - t0
    ok = worst_unit < 1e-10 and worst_apply < 1e-10 and elapsed < 10
    verdict(1, ok, f"max|FF^H-I|={worst_unit:.1e} max apply diff={worst_apply:.1e} {elapsed:.1f}s")
    assert ok


# 2 ---------------------------------------------------------------------------

_X, _W = np.polynomial.hermite.hermgauss(80)
NODES = (_X[:, None] + 1j * _X[None, :]).ravel()
WEIGHTS = (_W[:, None] * _W[None, :]).ravel() / np.pi


def _cn(z, var):
    return np.exp(-np.abs(z) ** 2 / var) / (np.pi * var)


def quadrature_posterior(lam, rho2, tau2, r):
    """Bernoulli-Gaussian posterior moments by 2-D Gauss-Hermite quadrature.

    The slab integral is weighted by the narrower of likelihood and prior;
    the spike contributes a point mass at zero.
    """
    if rho2 >= tau2:
        h = r + np.sqrt(tau2) * NODES
        f = _cn(h, rho2)
    else:
        h = np.sqrt(rho2) * NODES
        f = _cn(r - h, tau2)
    z1 = np.sum(WEIGHTS * f)
    m1 = np.sum(WEIGHTS * f * h) / z1
    c1 = np.sum(WEIGHTS * f * np.abs(h - m1) ** 2) / z1
    eta = lam * z1 / (lam * z1 + (1 - lam) * _cn(r, tau2))
    return eta, eta * m1, eta * c1 + eta * (1 - eta) * abs(m1) ** 2


def test_c02_scalar_posterior_oracle(verdict):
    rng = np.random.default_rng(2)
    worst = np.zeros(3)
    for _ in range(1000):
        lam = rng.uniform(0.01, 0.99)
        rho2 = 10 ** rng.uniform(-1, 1)
        tau2 = 10 ** rng.uniform(-2, 1)
        h = np.sqrt(rho2 / 2) * complex(*rng.standard_normal(2)) * (rng.random() < lam)
        r = h + np.sqrt(tau2 / 2) * complex(*rng.standard_normal(2))
        eta, xi, omega, *_ = posterior_moments(np.array([r]), tau2, lam, rho2)
        ref = quadrature_posterior(lam, rho2, tau2, r)
        for i, (got, want) in enumerate(zip((eta[0], xi[0], omega[0]), ref)):
            worst[i] = max(worst[i], abs(got - want) / abs(want))
    ok = np.all(worst < 1e-8)
    verdict(2, ok, "max rel err eta={:.1e} xi={:.1e} omega={:.1e}".format(*worst))
    assert ok


# 3 ---------------------------------------------------------------------------

def test_c03_arithmetic_anchors(verdict):
    tau2 = le_variance(1.0, 0.1, 8 / 4)
    v2 = extrinsic_variance(0.5, 1.0)
    eta = posterior_moments(np.array([0j]), 1.0, 0.5, 1.0)[0][0]
    errs = (abs(tau2 - 1.2), abs(v2 - 1.0), abs(eta - 1 / 3))
    ok = max(errs) <= 1e-12
    verdict(3, ok, f"tau2={float(tau2)!r} v2={float(v2)!r} eta={float(eta)!r}")
    assert ok


# 4, 10 -----------------------------------------------------------------------

DESK_TRIALS = 20


def test_c04_variance_tracking(verdict):
    t0 = time.perf_counter()
    ratios = np.mean([desk_run(t)[2] for t in range(DESK_TRIALS)], axis=0)   # (10, P)
    elapsed = time.perf_counter() - t0
    dev = float(np.max(np.abs(ratios - 1)))
    ok = dev <= 0.2 and elapsed < 300
    per_iter = " ".join(f"{v:.3f}" for v in ratios.mean(axis=1))
    verdict(4, ok, f"MSE/tau2 by iteration [{per_iter}] max dev={dev:.3f} {elapsed:.0f}s")
    assert ok


def test_c10_em_learning(verdict):
    noise, on, off = [], [], []
    for t in range(DESK_TRIALS):
        inst, out, _ = desk_run(t)
        noise.append(out.noise_var / inst.noise_var)
        nz = inst.h != 0
        on.append(out.eta[nz].mean())
        off.append(out.eta[~nz].mean())
    ratio, eta_on, eta_off = float(np.mean(noise)), float(np.mean(on)), float(np.mean(off))
    ok = 0.5 <= ratio <= 2 and eta_on > 0.9 and eta_off < 0.1
    verdict(10, ok, f"sigma2 ratio={ratio:.3f} (range {min(noise):.3f}-{max(noise):.3f}) "
                    f"eta on support={eta_on:.3f} (min {min(on):.3f}) off={eta_off:.4f} (max {max(off):.4f})")
    assert ok


# 5, 6, 7 ---------------------------------------------------------------------

def _full(g, trials, det, key="aud_error"):
    return _mean([full_rows(500, 50, g, 16, t)[det] for t in range(trials)], key)


@pytest.mark.slow
def test_c05_error_floor_at_g250(verdict):
    t0 = time.perf_counter()
    err = _full(250, 20, "bi")
    elapsed = time.perf_counter() - t0
    ok = err < 1e-3 and elapsed <= 3600
    verdict(5, ok, f"BI-AD error at G=250 over 20 trials={err:.2e} ({elapsed / 60:.1f} min)")
    assert ok


@pytest.mark.slow
def test_c06_detector_ordering(verdict):
    pairs = {g: (_full(g, 50, "bi"), _full(g, 50, "cg")) for g in (150, 200)}
    ok = all(bi <= cg for bi, cg in pairs.values())
    verdict(6, ok, " ".join(f"G={g}: BI={bi:.4f} CG={cg:.4f}" for g, (bi, cg) in pairs.items()))
    assert ok


@pytest.mark.slow
def test_c07_monotone_in_g(verdict):
    grid = (150, 200, 250, 300)
    curves = {key: [_full(g, 20, det, col) for g in grid]
              for key, det, col in (("BI", "bi", "aud_error"), ("CG", "cg", "aud_error"),
                                    ("NMSE", "bi", "nmse_db"))}
    ok = all(np.all(np.diff(c) <= 0) for c in curves.values())
    verdict(7, ok, " ".join(f"{k}=[{', '.join(f'{v:.4g}' for v in c)}]" for k, c in curves.items()))
    assert ok


# 8 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_c08_sparsity_robustness(verdict):
    parts, ok = [], True
    for g in (200, 250):
        for det in ("bi", "cg"):
            errs = [_mean([full_rows(400, ka, g, 16, t)[det] for t in range(20)], "aud_error")
                    for ka in (40, 60, 80)]
            ok &= errs[0] <= errs[1] <= errs[2]
            parts.append(f"G={g} {det.upper()}=[{', '.join(f'{e:.4f}' for e in errs)}]")
    verdict(8, ok, " ".join(parts))
    assert ok


# 9 ---------------------------------------------------------------------------

def test_c09_baseline_dominance(verdict):
    cfg = ExperimentConfig(seed=DESK_SEED, algorithms=["oamp", "somp"], detectors=["cg"])
    parts, ok = [], True
    for g in (40, 60):
        rows = [r for t in range(20) for r in run_trial(cfg, (10, g, 8, 30.0), t)]
        oamp = _mean([r for r in rows if r["algorithm"] == "oamp"], "nmse_db")
        base = _mean([r for r in rows if r["algorithm"] == "somp"], "nmse_db")
        ok &= oamp <= base - 3
        parts.append(f"G={g}: OAMP={oamp:.2f} dB SOMP={base:.2f} dB")
    verdict(9, ok, " ".join(parts))
    assert ok


# 11 --------------------------------------------------------------------------

def test_c11_latency(verdict):
    ofdm = OfdmConfig()
    got = [symbol_latency(g, ofdm) for g in (1, 250, 275)]
    ok = got == [0.288e-6, 72e-6, 79.2e-6]
    verdict(11, ok, "latencies " + ", ".join(f"{v * 1e6!r} us" for v in got))
    assert ok

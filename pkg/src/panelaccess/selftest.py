"""Fast invariant checks runnable from the CLI without the test suite."""

from __future__ import annotations

import numpy as np

from .array import ArrayGeometry, OfdmConfig, multi_panel_response
from .frontend import build_combiner, build_sensing
from .harness import symbol_latency
from .solver import extrinsic_variance, le_variance, posterior_moments


def _unitarity(rng):
    worst = 0.0
    for _ in range(10):
        geom = ArrayGeometry(int(rng.integers(1, 3)), int(rng.integers(1, 3)),
                             int(rng.integers(1, 3)), int(rng.integers(1, 3)), 2)
        k = int(rng.integers(2, 17))
        op = build_sensing(geom, k, int(rng.integers(1, min(k, 4) + 1)), rng)
        f = op.to_dense()
        worst = max(worst, np.abs(f @ f.conj().T - np.eye(f.shape[0])).max())
        x = rng.standard_normal(f.shape[1]) + 1j * rng.standard_normal(f.shape[1])
        y = rng.standard_normal(f.shape[0]) + 1j * rng.standard_normal(f.shape[0])
        worst = max(worst, np.abs(op.apply(x) - f @ x).max(),
                    np.abs(op.apply_adjoint(y) - f.conj().T @ y).max())
    return worst < 1e-10, f"max deviation {worst:.2e}"


def _combiner(rng):
    w = build_combiner(ArrayGeometry(), rng).matrix
    dev = np.abs(w.conj().T @ w - np.eye(w.shape[1])).max()
    return dev < 1e-10, f"max deviation {dev:.2e}"


def _steering(rng):
    geom = ArrayGeometry(2, 1, 2, 1, 6)
    mu = rng.uniform(-np.pi, np.pi)
    expect = np.exp(1j * mu * np.array([0, 1, 7, 8]))
    dev = np.abs(multi_panel_response(mu, 0.0, geom) - expect).max()
    return dev < 1e-12, f"max deviation {dev:.2e}"


def _posterior(rng):
    lam, rho2, tau2 = rng.uniform(0.05, 0.95, 50), rng.uniform(0.1, 5, 50), rng.uniform(0.1, 5, 50)
    r = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    eta, xi, omega, _, _ = posterior_moments(r, tau2, lam, rho2)
    a = (1 - lam) / (np.pi * tau2) * np.exp(-np.abs(r) ** 2 / tau2)
    b = lam / (np.pi * (rho2 + tau2)) * np.exp(-np.abs(r) ** 2 / (rho2 + tau2))
    kappa = r * rho2 / (rho2 + tau2)
    psi2 = rho2 * tau2 / (rho2 + tau2)
    ref_omega = b * psi2 / (a + b) + a * b * np.abs(kappa) ** 2 / (a + b) ** 2
    dev = max(np.abs(eta - b / (a + b)).max(), np.abs(xi - b / (a + b) * kappa).max(),
              np.abs(omega - ref_omega).max())
    return dev < 1e-10, f"max deviation {dev:.2e}"


def _anchors(rng):
    tau2 = le_variance(1.0, 0.1, 8 / 4)
    v2 = extrinsic_variance(0.5, 1.0)
    eta = posterior_moments(np.array([0j]), 1.0, 0.5, 1.0)[0][0]
    ok = abs(tau2 - 1.2) < 1e-12 and abs(v2 - 1) < 1e-12 and abs(eta - 1 / 3) < 1e-12
    return ok, f"tau2={tau2!r} v2={v2!r} eta={eta!r}"


def _latency(rng):
    ofdm = OfdmConfig()
    got = [symbol_latency(g, ofdm) for g in (1, 250, 275)]
    return got == [0.288e-6, 72e-6, 79.2e-6], f"{got}"


CHECKS = [("sensing operator unitarity and structured products", _unitarity),
          ("combiner orthonormal columns", _combiner),
          ("multi-panel element positions", _steering),
          ("Bernoulli-Gaussian posterior closed form", _posterior),
          ("LE/NLE arithmetic anchors", _anchors),
          ("symbol latency", _latency)]


def main(verbose: bool = True, seed: int = 2024) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, check in CHECKS:
        ok, detail = check(rng)
        all_ok &= bool(ok)
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return all_ok

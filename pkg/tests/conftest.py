import functools

import numpy as np
import pytest

from panelaccess import solver
from panelaccess.array import ArrayGeometry
from panelaccess.harness import ExperimentConfig, make_instance, run_trial

_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; printed in the terminal summary."""
    def record(number, ok, detail):
        _VERDICTS[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_geom():
    # 2x2 panels of 2x1 elements: N_BS = 8, N_P = 4
    return ArrayGeometry(panels_h=2, panels_v=2, elems_h=2, elems_v=1, gap=2)


FULL_SEED = 20240
DESK_SEED = 777


@functools.lru_cache(maxsize=None)
def full_rows(n_users, n_active, n_symbols, n_pilots, trial):
    """OAMP rows (cg and bi) of one full-scale trial; cached across tests."""
    cfg = ExperimentConfig(n_users=n_users, seed=FULL_SEED)
    rows = run_trial(cfg, (n_active, n_symbols, n_pilots, 30.0), trial)
    return {r["detector"]: r for r in rows}


@functools.lru_cache(maxsize=None)
def desk_run(trial):
    """Desk-scale trial with the per-iteration tracking ratios and final state."""
    cfg = ExperimentConfig(seed=DESK_SEED)
    inst = make_instance(cfg, 10, 60, 8, 30.0, trial)
    ratios = []

    def watch(t, state):
        if t <= 10:
            mse = np.mean(np.abs(state.r - inst.h) ** 2, axis=0)
            ratios.append(mse / state.tau2.mean(axis=0))
    out = solver.run(inst.y, inst.op, cfg=cfg.solver, callback=watch)
    return inst, out, np.array(ratios)

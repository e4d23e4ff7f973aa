"""Monte Carlo sweeps: config loading, per-trial simulation and CSV output."""

from __future__ import annotations

import configparser
import csv
import io
import itertools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import detect, solver
from .array import ArrayGeometry, OfdmConfig, draw_activity, draw_channels
from .baseline import GreedyConfig, somp
from .frontend import build_sensing, simulate_received

log = logging.getLogger(__name__)

ALGORITHMS = ("oamp", "somp")
CP_SAMPLES = 32

CSV_FIELDS = ["row", "n_users", "n_active", "n_symbols", "n_pilots", "snr_db", "trial",
              "master_seed", "algorithm", "detector", "aud_error", "nmse_db", "noise_var_ratio",
              "wall_ms", "note"]


def symbol_latency(n_symbols: int, ofdm: OfdmConfig, cp: int = CP_SAMPLES) -> float:
    """Seconds spent on ``G`` pilot OFDM symbols of ``N_c + CP`` samples each."""
    if n_symbols < 0:
        raise ValueError("symbol count must be non-negative")
    return n_symbols * (ofdm.n_subcarriers + cp) / ofdm.bandwidth


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _words(text):
    return [t for t in text.replace(",", " ").split()]


@dataclass
class ExperimentConfig:
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    bandwidth: float = 1e9
    n_subcarriers: int = 256
    carrier: float = 30e9
    n_paths: int = 4
    max_delay_samples: float = 32.0
    n_users: int = 100
    n_active: list = field(default_factory=lambda: [10])
    n_symbols: list = field(default_factory=lambda: [60])
    n_pilots: list = field(default_factory=lambda: [8])
    snr_db: list = field(default_factory=lambda: [30.0])
    trials: int = 1
    seed: int = 0
    algorithms: list = field(default_factory=lambda: ["oamp"])
    detectors: list = field(default_factory=lambda: ["cg", "bi"])
    solver: solver.SolverConfig = field(default_factory=solver.SolverConfig)
    output: str = "results.csv"
    timing: bool = False

    def __post_init__(self):
        for name in ("n_active", "n_symbols", "n_pilots", "snr_db", "algorithms", "detectors"):
            if not getattr(self, name):
                raise ValueError(f"sweep list {name!r} is empty")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}; choose from {ALGORITHMS}")
        bad = set(self.detectors) - set(detect.DETECTORS)
        if bad:
            raise ValueError(f"unknown detectors {sorted(bad)}; choose from {sorted(detect.DETECTORS)}")
        if self.n_paths < 1:
            raise ValueError("need at least one path")

    def ofdm(self, n_pilots: int) -> OfdmConfig:
        return OfdmConfig(self.bandwidth, self.n_subcarriers, n_pilots, self.carrier)

    def points(self):
        """Grid points ``(K_a, G, P, snr)`` in a fixed order."""
        return list(itertools.product(self.n_active, self.n_symbols, self.n_pilots, self.snr_db))


def load_config(path) -> ExperimentConfig:
    """Read an INI file; see ``README.md`` for the recognised keys."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return config_from_parser(cp)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    return config_from_parser(cp)


def config_from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    known = {"geometry", "ofdm", "channel", "population", "sweep", "run", "solver"}
    extra = set(cp.sections()) - known
    if extra:
        raise ValueError(f"unknown config sections {sorted(extra)}")
    kw = {}
    if cp.has_section("geometry"):
        g = cp["geometry"]
        kw["geometry"] = ArrayGeometry(**{k: g.getint(k) for k in g})
    o = cp["ofdm"] if cp.has_section("ofdm") else {}
    for key, conv in (("bandwidth", float), ("n_subcarriers", int), ("carrier", float)):
        if key in o:
            kw[key] = conv(o[key])
    c = cp["channel"] if cp.has_section("channel") else {}
    if "n_paths" in c:
        kw["n_paths"] = int(c["n_paths"])
    if "max_delay_samples" in c:
        kw["max_delay_samples"] = float(c["max_delay_samples"])
    p = cp["population"] if cp.has_section("population") else {}
    if "n_users" in p:
        kw["n_users"] = int(p["n_users"])
    if "n_active" in p:
        kw["n_active"] = _ints(p["n_active"])
    s = cp["sweep"] if cp.has_section("sweep") else {}
    for key, conv in (("n_symbols", _ints), ("n_pilots", _ints), ("snr_db", _floats)):
        if key in s:
            kw[key] = conv(s[key])
    for key in ("trials", "seed"):
        if key in s:
            kw[key] = int(s[key])
    r = cp["run"] if cp.has_section("run") else {}
    for key in ("algorithms", "detectors"):
        if key in r:
            kw[key] = _words(r[key])
    if "output" in r:
        kw["output"] = r["output"]
    if "timing" in r:
        kw["timing"] = cp.getboolean("run", "timing")
    if cp.has_section("solver"):
        sec = cp["solver"]
        types = {f.name: f.type for f in fields(solver.SolverConfig)}
        opts = {}
        for key in sec:
            if key not in types:
                raise ValueError(f"unknown solver option {key!r}")
            if key == "learn_signal_var":
                opts[key] = sec.getboolean(key)
            elif key == "n_iter":
                opts[key] = sec.getint(key)
            elif key == "snr0":
                opts[key] = sec.getfloat(key)
            else:
                opts[key] = sec[key]
        kw["solver"] = solver.SolverConfig(**opts)
    return ExperimentConfig(**kw)


def trial_streams(master: int, trial: int):
    """Independent generators for (scene, sensing, noise) of one trial.

    They depend only on the master seed and the trial index, so every grid
    point sees the same random inputs for a given trial.
    """
    seq = np.random.SeedSequence([master, trial])
    return [np.random.default_rng(s) for s in seq.spawn(3)]


@dataclass
class TrialInstance:
    activity: np.ndarray
    h: np.ndarray
    op: object
    y: np.ndarray
    noise_var: float


def make_instance(cfg: ExperimentConfig, n_active: int, n_symbols: int, n_pilots: int,
                  snr_db: float, trial: int) -> TrialInstance:
    scene, sensing, noise = trial_streams(cfg.seed, trial)
    ofdm = cfg.ofdm(n_pilots)
    act = draw_activity(cfg.n_users, n_active, scene)
    h, _ = draw_channels(act, cfg.geometry, ofdm, cfg.n_paths, scene,
                         max_delay=cfg.max_delay_samples / cfg.bandwidth)
    op = build_sensing(cfg.geometry, cfg.n_users, n_symbols, sensing)
    meas = simulate_received(op, h, snr_db, noise)
    return TrialInstance(act.flags, h, op, meas.y, meas.noise_var)


def _clock(timing):
    return time.perf_counter() if timing else 0.0


def _elapsed(t0, timing):
    return (time.perf_counter() - t0) * 1e3 if timing else None


def run_trial(cfg: ExperimentConfig, point, trial: int, trace_path=None) -> list[dict]:
    """Simulate one trial at one grid point; one row per (algorithm, detector).

    ``trace_path`` receives the solver's per-iteration trace as CSV.
    """
    n_active, n_symbols, n_pilots, snr_db = point
    base = dict(n_users=cfg.n_users, n_active=n_active, n_symbols=n_symbols, n_pilots=n_pilots,
                snr_db=snr_db, trial=trial, master_seed=cfg.seed)
    inst = make_instance(cfg, n_active, n_symbols, n_pilots, snr_db, trial)
    n_bs = cfg.geometry.n_bs
    rows = []
    for algo in cfg.algorithms:
        t0 = _clock(cfg.timing)
        note = ""
        ratio = None
        eta = None
        if algo == "oamp":
            try:
                out = solver.run(inst.y, inst.op, cfg=cfg.solver)
                if trace_path is not None:
                    solver.write_trace(trace_path, out.trace)
                h_est, eta = out.h, out.eta
                if inst.noise_var > 0:
                    ratio = out.noise_var / inst.noise_var
                if out.flags["clamped"]:
                    note = f"clamped={out.flags['clamped']}"
            except solver.SolverDivergence as exc:
                log.warning("trial %d at %s diverged: %s", trial, point, exc)
                h_est = np.zeros_like(inst.h)
                eta = np.zeros(inst.h.shape)
                note = f"diverged@{exc.iteration}"
        else:
            q = inst.op.shape[0]
            budget = min(n_active * n_bs, (q // n_bs) * n_bs)
            res = somp(inst.y, inst.op, GreedyConfig(budget, block=n_bs))
            h_est = res.h
            if res.ridge:
                note = "ridge"
        wall = _elapsed(t0, cfg.timing)
        err_db = detect.nmse(h_est, inst.h, inst.activity, n_bs) if n_active else None
        for det in cfg.detectors:
            if det == "bi" and eta is None:
                continue
            src = eta if det == "bi" else h_est
            res = detect.DETECTORS[det](detect.user_slice(src[:, 0], n_bs))
            rows.append(dict(base, row="trial", algorithm=algo, detector=det,
                             aud_error=detect.aud_error_prob(res.active, inst.activity),
                             nmse_db=err_db, noise_var_ratio=ratio, wall_ms=wall, note=note))
    return rows


def _skip_rows(cfg, point):
    n_active, n_symbols, n_pilots, snr_db = point
    return [dict(row="skip", n_users=cfg.n_users, n_active=n_active, n_symbols=n_symbols,
                 n_pilots=n_pilots, snr_db=snr_db, master_seed=cfg.seed,
                 note=f"G={n_symbols} > K={cfg.n_users}")]


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and population-std rows per (point, algorithm, detector), in first-seen order."""
    groups: dict = {}
    for r in rows:
        if r["row"] != "trial":
            continue
        key = tuple(r[k] for k in ("n_active", "n_symbols", "n_pilots", "snr_db", "algorithm", "detector"))
        groups.setdefault(key, []).append(r)
    out = []
    for members in groups.values():
        first = members[0]
        for stat, fn in (("mean", np.mean), ("std", np.std)):
            agg = {k: first[k] for k in ("n_users", "n_active", "n_symbols", "n_pilots", "snr_db",
                                          "master_seed", "algorithm", "detector")}
            agg["row"] = stat
            agg["trial"] = len(members)
            for col in ("aud_error", "nmse_db", "noise_var_ratio", "wall_ms"):
                vals = [m[col] for m in members if m[col] is not None]
                agg[col] = float(fn(vals)) if vals else None
            out.append(agg)
    return out


def _work(args):
    cfg, point, trial = args
    return run_trial(cfg, point, trial)


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """All trial rows in (grid point, trial) order, then the aggregate rows."""
    jobs = []
    rows_by_job: dict = {}
    for i, point in enumerate(cfg.points()):
        if point[1] > cfg.n_users:
            log.warning("skipping infeasible point %s: G > K", point)
            rows_by_job[(i, -1)] = _skip_rows(cfg, point)
            continue
        for t in range(cfg.trials):
            jobs.append(((i, t), (cfg, point, t)))
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for (key, _), rows in zip(jobs, pool.map(_work, [a for _, a in jobs])):
                rows_by_job[key] = rows
    else:
        for key, args in jobs:
            rows_by_job[key] = _work(args)
    rows = [r for key in sorted(rows_by_job) for r in rows_by_job[key]]
    return rows + aggregate(rows)


def fmt_value(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([fmt_value(r.get(k)) for k in CSV_FIELDS])
    return buf.getvalue()


def write_csv(rows: list[dict], path) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise FileNotFoundError(f"output directory {path.parent} does not exist")
    if path.exists() and not os.access(path, os.W_OK):
        raise PermissionError(f"cannot write {path}")
    path.write_text(rows_to_csv(rows))


def config_summary(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["geometry"] = asdict(cfg.geometry)
    d["solver"] = asdict(cfg.solver)
    return d

"""Multi-panel array response and frequency-domain uplink channels.

Antenna indexing is frozen as ``n = n_v * N_h + n_h`` (horizontal index
fastest), which is what ``vec[a_h a_v^T] = a_v (x) a_h`` produces.  The
combiner panel index sets in :mod:`panelaccess.frontend` rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEERING_KINDS = ("h-panel", "h-element", "v-panel", "v-element")


@dataclass(frozen=True)
class ArrayGeometry:
    """Rectangular array of ``panels_v x panels_h`` uniform planar panels.

    Each panel holds ``elems_v x elems_h`` half-wavelength spaced antennas and
    adjacent panels are separated by ``gap`` element spacings.
    """

    panels_h: int = 4
    panels_v: int = 4
    elems_h: int = 2
    elems_v: int = 2
    gap: int = 6

    def __post_init__(self):
        for name in ("panels_h", "panels_v", "elems_h", "elems_v"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.gap < 2:
            raise ValueError(f"panel spacing multiple must be >= 2, got {self.gap}")

    @property
    def n_h(self) -> int:
        return self.panels_h * self.elems_h

    @property
    def n_v(self) -> int:
        return self.panels_v * self.elems_v

    @property
    def n_bs(self) -> int:
        return self.n_h * self.n_v

    @property
    def m_bs(self) -> int:
        return self.elems_h * self.elems_v

    @property
    def n_panels(self) -> int:
        return self.panels_h * self.panels_v

    def panel_indices(self) -> np.ndarray:
        """Antenna indices of every panel, shape ``(n_panels, m_bs)``.

        Panel ``n_p = i_v * panels_h + i_h``; inside a panel the antennas are
        listed vertical-major, horizontal-fastest.
        """
        iv, ih, mv, mh = np.meshgrid(
            np.arange(self.panels_v), np.arange(self.panels_h),
            np.arange(self.elems_v), np.arange(self.elems_h), indexing="ij")
        n_v = iv * self.elems_v + mv
        n_h = ih * self.elems_h + mh
        return (n_v * self.n_h + n_h).reshape(self.n_panels, self.m_bs)


@dataclass(frozen=True)
class OfdmConfig:
    bandwidth: float = 1e9
    n_subcarriers: int = 256
    n_pilots: int = 16
    carrier: float = 30e9

    def __post_init__(self):
        if self.n_pilots < 1:
            raise ValueError("need at least one pilot subcarrier")
        if self.n_subcarriers % self.n_pilots:
            raise ValueError(
                f"N_c={self.n_subcarriers} is not a multiple of P={self.n_pilots}")

    def pilot_frequencies(self) -> np.ndarray:
        """Baseband frequency offset of pilot subcarriers p = 1..P (Hz)."""
        p = np.arange(1, self.n_pilots + 1)
        spacing = self.bandwidth / self.n_subcarriers
        return -self.bandwidth / 2 + (p * self.n_subcarriers // self.n_pilots - 1) * spacing


@dataclass(frozen=True)
class PathParams:
    """Multipath parameters of one user; all arrays have length L."""

    gain: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    delay: np.ndarray
    azimuth: np.ndarray | None = None
    elevation: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return len(self.gain)

    @classmethod
    def from_angles(cls, gain, azimuth, elevation, delay):
        azimuth = np.asarray(azimuth, dtype=float)
        elevation = np.asarray(elevation, dtype=float)
        mu = np.pi * np.sin(azimuth) * np.cos(elevation)
        nu = np.pi * np.sin(elevation)
        return cls(np.asarray(gain, dtype=complex), mu, nu,
                   np.asarray(delay, dtype=float), azimuth, elevation)


@dataclass(frozen=True)
class ActivityPattern:
    flags: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.flags)

    @property
    def n_active(self) -> int:
        return int(self.flags.sum())

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.flags)


def ula_phases(angle: float, count: int, stride: int = 1) -> np.ndarray:
    """``[1, e^{j s a}, ..., e^{j (count-1) s a}]`` for stride ``s``."""
    return np.exp(1j * stride * angle * np.arange(count))


def steering_factor(kind: str, angle: float, geom: ArrayGeometry) -> np.ndarray:
    if not np.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    if kind == "h-panel":
        return ula_phases(angle, geom.panels_h, geom.elems_h + geom.gap - 1)
    if kind == "h-element":
        return ula_phases(angle, geom.elems_h)
    if kind == "v-panel":
        return ula_phases(angle, geom.panels_v, geom.elems_v + geom.gap - 1)
    if kind == "v-element":
        return ula_phases(angle, geom.elems_v)
    raise ValueError(f"unknown steering kind {kind!r}; expected one of {STEERING_KINDS}")


def horizontal_steering(mu: float, geom: ArrayGeometry) -> np.ndarray:
    return np.kron(steering_factor("h-panel", mu, geom), steering_factor("h-element", mu, geom))


def vertical_steering(nu: float, geom: ArrayGeometry) -> np.ndarray:
    return np.kron(steering_factor("v-panel", nu, geom), steering_factor("v-element", nu, geom))


def multi_panel_response(mu: float, nu: float, geom: ArrayGeometry) -> np.ndarray:
    """Array response ``a_v(nu) (x) a_h(mu)`` of length ``N_BS``."""
    return np.kron(vertical_steering(nu, geom), horizontal_steering(mu, geom))


def synth_user_channel(paths: PathParams, geom: ArrayGeometry, ofdm: OfdmConfig) -> np.ndarray:
    """Channel of one user on every pilot subcarrier, shape ``(N_BS, P)``."""
    if paths.n_paths < 1:
        raise ValueError("a channel needs at least one path")
    steer = np.stack([multi_panel_response(m, n, geom) for m, n in zip(paths.mu, paths.nu)], axis=1)
    freqs = ofdm.pilot_frequencies()
    delay_phase = np.exp(-2j * np.pi * np.outer(paths.delay, freqs))
    return steer @ (paths.gain[:, None] * delay_phase)


def draw_paths(n_paths: int, rng: np.random.Generator, max_delay: float) -> PathParams:
    """Random paths: CN(0,1) gains, angles U[-pi/2, pi/2), delays U[0, max_delay]."""
    gain = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2)
    azimuth = rng.uniform(-np.pi / 2, np.pi / 2, n_paths)
    elevation = rng.uniform(-np.pi / 2, np.pi / 2, n_paths)
    delay = rng.uniform(0.0, max_delay, n_paths)
    return PathParams.from_angles(gain, azimuth, elevation, delay)


def draw_activity(n_users: int, n_active: int, rng: np.random.Generator) -> ActivityPattern:
    if n_active > n_users:
        raise ValueError(f"K_a={n_active} exceeds K={n_users}")
    if n_active < 0:
        raise ValueError("K_a must be non-negative")
    flags = np.zeros(n_users, dtype=np.int8)
    flags[rng.choice(n_users, size=n_active, replace=False)] = 1
    return ActivityPattern(flags)


def build_channel_matrix(user_channels, activity: ActivityPattern) -> np.ndarray:
    """Stack per-user ``(N_BS, P)`` channels into the ``(K * N_BS, P)`` matrix.

    Rows ``k*N_BS .. (k+1)*N_BS - 1`` hold user ``k``; inactive users are
    exact zero blocks.
    """
    chans = np.asarray(user_channels)
    if chans.ndim != 3:
        raise ValueError("expected a (K, N_BS, P) stack of user channels")
    if chans.shape[0] != activity.n_users:
        raise ValueError(
            f"{chans.shape[0]} user channels for an activity pattern of {activity.n_users}")
    k, n_bs, p = chans.shape
    masked = np.where(activity.flags.astype(bool)[:, None, None], chans, 0)
    return masked.reshape(k * n_bs, p)


def draw_channels(activity: ActivityPattern, geom: ArrayGeometry, ofdm: OfdmConfig,
                  n_paths: int, rng: np.random.Generator, max_delay: float | None = None):
    """Draw paths for every active user and return ``(H, paths_by_user)``.

    Inactive users get no paths; their channel blocks are zero anyway.
    """
    if max_delay is None:
        max_delay = 32.0 / ofdm.bandwidth
    chans = np.zeros((activity.n_users, geom.n_bs, ofdm.n_pilots), dtype=complex)
    paths = {}
    for k in activity.active:
        paths[int(k)] = draw_paths(n_paths, rng, max_delay)
        chans[k] = synth_user_channel(paths[int(k)], geom, ofdm)
    return build_channel_matrix(chans, activity), paths

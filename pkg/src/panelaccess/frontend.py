"""Pilots, partially-connected combiners and the stacked sensing operator.

The sensing operator maps the vectorised channel ``h_p = vec(H_p)`` (user
blocks of ``N_BS`` rows) to the stacked measurements of all ``G`` OFDM
symbols.  Block ``g`` of rows is ``(s_g^T (x) W_g^H) / sqrt(K)``; with
distinct DFT pilot columns and orthonormal combiners the rows are
orthonormal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .array import ArrayGeometry


def dft_column(n: int, index) -> np.ndarray:
    """Column(s) ``index`` (0-based) of the ``n``-point DFT matrix."""
    m = np.arange(n)[:, None]
    return np.exp(-2j * np.pi * m * np.atleast_1d(index)[None, :] / n).squeeze()


@dataclass(frozen=True)
class PilotBook:
    """Pilot of symbol ``g`` is column ``indices[g]`` (0-based) of ``D_K``."""

    n_users: int
    indices: np.ndarray

    @property
    def n_symbols(self) -> int:
        return len(self.indices)

    @property
    def matrix(self) -> np.ndarray:
        """Unscaled ``K x G`` pilot matrix."""
        return np.exp(-2j * np.pi * np.outer(np.arange(self.n_users), self.indices) / self.n_users)


def gen_pilots(n_users: int, n_symbols: int, rng: np.random.Generator) -> PilotBook:
    if n_symbols > n_users:
        raise ValueError(
            f"G={n_symbols} > K={n_users}: cannot pick distinct orthogonal pilot columns")
    return PilotBook(n_users, rng.choice(n_users, size=n_symbols, replace=False))


@dataclass(frozen=True)
class Combiner:
    """Analog combiner of one OFDM symbol stored panel-wise.

    ``weights[n_p]`` are the phase-shifter values on the antennas
    ``panel_index[n_p]``; every other entry of column ``n_p`` is zero.
    """

    n_bs: int
    panel_index: np.ndarray
    weights: np.ndarray
    dft_columns: np.ndarray = field(default=None, compare=False)

    @property
    def matrix(self) -> np.ndarray:
        n_panels = self.panel_index.shape[0]
        w = np.zeros((self.n_bs, n_panels), dtype=complex)
        cols = np.broadcast_to(np.arange(n_panels)[:, None], self.panel_index.shape)
        w[self.panel_index, cols] = self.weights
        return w

    def combine(self, x: np.ndarray) -> np.ndarray:
        """``W^H x`` for ``x`` of shape ``(N_BS, ...)``."""
        return np.einsum("pm,pm...->p...", self.weights.conj(), x[self.panel_index])

    def spread(self, z: np.ndarray) -> np.ndarray:
        """``W z`` for ``z`` of shape ``(N_P, ...)``."""
        out = np.zeros((self.n_bs,) + z.shape[1:], dtype=complex)
        out[self.panel_index] = self.weights.reshape(self.weights.shape + (1,) * (z.ndim - 1)) * z[:, None]
        return out


def build_combiner(geom: ArrayGeometry, rng: np.random.Generator) -> Combiner:
    """Masked, randomly column-permuted 2-D DFT combiner.

    ``Z = (D_{N_v} (x) D_{N_h}) P`` with ``N_P`` random columns; column ``n_p``
    keeps only panel ``n_p``'s antennas and is scaled by ``1/sqrt(M_BS)``.
    """
    idx = geom.panel_indices()
    cols = rng.choice(geom.n_bs, size=geom.n_panels, replace=False)
    c_v, c_h = np.divmod(cols, geom.n_h)
    n_v, n_h = np.divmod(idx, geom.n_h)
    phase = n_v * c_v[:, None] / geom.n_v + n_h * c_h[:, None] / geom.n_h
    weights = np.exp(-2j * np.pi * phase) / np.sqrt(geom.m_bs)
    return Combiner(geom.n_bs, idx, weights, cols)


class SensingOperator:
    """Stacked ``Q x J`` sensing map with structured products.

    ``apply`` and ``apply_adjoint`` accept a single vector or a matrix whose
    columns are the ``P`` subcarriers.  The pilot Kronecker factor is
    evaluated with an FFT over the user axis, the combiner factor panel by
    panel, so the dense matrix is never formed.
    """

    def __init__(self, pilots: PilotBook, combiners, scale: float | None = None):
        combiners = list(combiners)
        if len(combiners) != pilots.n_symbols:
            raise ValueError(
                f"{len(combiners)} combiners for {pilots.n_symbols} pilot symbols")
        if not combiners:
            raise ValueError("need at least one OFDM symbol")
        idx = combiners[0].panel_index
        for c in combiners[1:]:
            if c.n_bs != combiners[0].n_bs or not np.array_equal(c.panel_index, idx):
                raise ValueError("combiners disagree on the array layout")
        self.pilots = pilots
        self.combiners = combiners
        self.panel_index = idx
        self.n_users = pilots.n_users
        self.n_bs = combiners[0].n_bs
        self.n_panels = idx.shape[0]
        self.n_symbols = pilots.n_symbols
        self.scale = 1.0 / np.sqrt(self.n_users) if scale is None else scale
        self._weights = np.stack([c.weights for c in combiners])  # (G, N_P, M_BS)

    @property
    def shape(self):
        return (self.n_symbols * self.n_panels, self.n_users * self.n_bs)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        vec = x.ndim == 1
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"expected {self.shape[1]} rows, got {x.shape[0]}")
        blocks = x.reshape(self.n_users, self.n_bs, -1)
        # H_p s_g for every pilot column at once
        mixed = np.fft.fft(blocks, axis=0)[self.pilots.indices]        # (G, N_BS, P)
        gathered = mixed[:, self.panel_index]                           # (G, N_P, M_BS, P)
        y = np.einsum("gpm,gpmc->gpc", self._weights.conj(), gathered)
        y = y.reshape(self.shape[0], -1) * self.scale
        return y[:, 0] if vec else y

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        vec = y.ndim == 1
        if y.shape[0] != self.shape[0]:
            raise ValueError(f"expected {self.shape[0]} rows, got {y.shape[0]}")
        y = y.reshape(self.n_symbols, self.n_panels, -1)
        ncol = y.shape[-1]
        spread = np.zeros((self.n_symbols, self.n_bs, ncol), dtype=complex)
        spread[:, self.panel_index] = self._weights[..., None] * y[:, :, None, :]
        bins = np.zeros((self.n_users, self.n_bs, ncol), dtype=complex)
        bins[self.pilots.indices] = spread
        x = np.fft.ifft(bins, axis=0) * (self.n_users * self.scale)
        x = x.reshape(self.shape[1], ncol)
        return x[:, 0] if vec else x

    def groups(self):
        """``(column_group, row_group)`` labels of the panel-wise block structure.

        Row ``g * N_P + n_p`` only sees antennas of panel ``n_p``, so after
        grouping rows and columns by panel the operator is block diagonal.
        """
        pan = np.empty(self.n_bs, dtype=int)
        for p, idx in enumerate(self.panel_index):
            pan[idx] = p
        return np.tile(pan, self.n_users), np.tile(np.arange(self.n_panels), self.n_symbols)

    def columns(self, cols) -> np.ndarray:
        """Dense ``Q x len(cols)`` sub-matrix of the given columns."""
        cols = np.asarray(cols, dtype=int)
        user, ant = np.divmod(cols, self.n_bs)
        pil = np.exp(-2j * np.pi * np.outer(self.pilots.indices, user) / self.n_users)  # (G, n)
        w = np.stack([c.matrix for c in self.combiners])                                  # (G, N_BS, N_P)
        wh = w[:, ant, :].conj().transpose(0, 2, 1)                                       # (G, N_P, n)
        return (pil[:, None, :] * wh).reshape(self.shape[0], len(cols)) * self.scale

    def to_dense(self) -> np.ndarray:
        s = self.pilots.matrix
        rows = [np.kron(s[:, g][None, :], c.matrix.conj().T) for g, c in enumerate(self.combiners)]
        return np.vstack(rows) * self.scale

    def frobenius_sq(self) -> float:
        """``||F||_F^2`` from the factors (each pilot entry has unit modulus)."""
        return float(self.n_users * self.scale**2 * np.sum(np.abs(self._weights) ** 2))

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.apply, rmatvec=self.apply_adjoint,
                              matmat=self.apply, rmatmat=self.apply_adjoint, dtype=complex)


class DenseOperator:
    """Any explicit ``Q x J`` matrix behind the operator interface the solver uses."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=complex)
        if self.matrix.ndim != 2:
            raise ValueError("need a 2-D matrix")
        self.shape = self.matrix.shape

    def apply(self, x):
        return self.matrix @ x

    def apply_adjoint(self, y):
        return self.matrix.conj().T @ y

    def columns(self, cols):
        return self.matrix[:, cols]

    def to_dense(self):
        return self.matrix

    def frobenius_sq(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))


def assemble_sensing(pilots: PilotBook, combiners) -> SensingOperator:
    return SensingOperator(pilots, combiners)


def build_sensing(geom: ArrayGeometry, n_users: int, n_symbols: int,
                  rng: np.random.Generator) -> SensingOperator:
    pilots = gen_pilots(n_users, n_symbols, rng)
    return SensingOperator(pilots, [build_combiner(geom, rng) for _ in range(n_symbols)])


@dataclass(frozen=True)
class MeasurementSet:
    y: np.ndarray
    noise_var: float
    snr_db: float


def simulate_received(op: SensingOperator, h: np.ndarray, snr_db: float,
                      rng: np.random.Generator) -> MeasurementSet:
    """``Y = F H + N`` with the noise power set from the realised signal power.

    ``snr_db = inf`` gives noiseless measurements.
    """
    if np.isnan(snr_db):
        raise ValueError("SNR must not be NaN")
    clean = op.apply(h)
    if np.isposinf(snr_db):
        return MeasurementSet(clean, 0.0, snr_db)
    power = np.mean(np.abs(clean) ** 2)
    if power == 0:
        raise ValueError("zero received signal power: finite SNR is undefined")
    noise_var = power / 10 ** (snr_db / 10)
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(clean.shape)
                                      + 1j * rng.standard_normal(clean.shape))
    return MeasurementSet(clean + noise, float(noise_var), snr_db)


# Binary matrix layout: two little-endian uint64 (rows, cols) followed by
# rows*cols complex entries in column-major order, each as float64 re, im.

def dump_matrix(path, matrix: np.ndarray) -> None:
    m = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if np.ndim(matrix) == 1:
        m = m.T
    rows, cols = m.shape
    payload = np.asfortranarray(m).ravel(order="F").astype("<c16")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(payload.tobytes())


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    rows, cols = struct.unpack("<QQ", raw[:16])
    data = np.frombuffer(raw[16:], dtype="<c16")
    if data.size != rows * cols:
        raise ValueError(f"{path}: header says {rows}x{cols}, payload has {data.size} entries")
    return data.reshape((rows, cols), order="F").astype(complex)

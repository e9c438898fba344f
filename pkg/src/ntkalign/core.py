"""Core containers for graph signal datasets, shift operators and kernels.

Stacking convention used everywhere in this package: a dataset of M graph
signals ``X`` (shape n x M, one signal per column) is flattened sample-major,

    x_stacked[i * n + a] = X[a, i],

i.e. ``X.ravel(order="F")``.  The M-fold block-diagonal lift of a shift
operator S acts on stacked vectors block by block and is never materialised
as an (nM x nM) matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

SYMMETRY_ATOL = 1e-10
UNIT_FRO_ATOL = 1e-10
NTK_SYMMETRY_RTOL = 1e-8
NTK_PSD_RTOL = 1e-8


def _frozen_array(a, dtype=float, ndim=None) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    if ndim is not None and out.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("array contains non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Paired input/target graph signals, one sample per column."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x, ndim=2))
        object.__setattr__(self, "y", _frozen_array(self.y, ndim=2))
        if self.x.shape != self.y.shape:
            raise ValueError(
                f"x and y must have matching shapes, got {self.x.shape} vs {self.y.shape}"
            )

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def num_samples(self) -> int:
        return self.x.shape[1]

    @property
    def max_column_norm(self) -> float:
        nx = np.linalg.norm(self.x, axis=0)
        ny = np.linalg.norm(self.y, axis=0)
        return float(max(nx.max(initial=0.0), ny.max(initial=0.0)))

    def is_normalized(self, atol: float = 1e-12) -> bool:
        return self.max_column_norm <= 1.0 + atol

    def normalized(self) -> "Dataset":
        """Globally rescale so the largest column norm is exactly 1."""
        scale = self.max_column_norm
        if scale == 0.0:
            raise ValueError("cannot normalize an all-zero dataset")
        return Dataset(self.x / scale, self.y / scale)

    def stacked(self) -> "StackedData":
        return StackedData(
            x=stack(self.x),
            y=stack(self.y),
            num_nodes=self.num_nodes,
            num_samples=self.num_samples,
        )


@dataclass(frozen=True)
class StackedData:
    """Sample-major flattened view of a dataset."""

    x: np.ndarray
    y: np.ndarray
    num_nodes: int
    num_samples: int

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x, ndim=1))
        object.__setattr__(self, "y", _frozen_array(self.y, ndim=1))
        expected = self.num_nodes * self.num_samples
        if self.x.shape[0] != expected or self.y.shape[0] != expected:
            raise ValueError(
                f"stacked length must be n*M = {expected}, got {self.x.shape[0]}"
            )


def stack(signals: np.ndarray) -> np.ndarray:
    """Flatten an (n x M) signal matrix into a length-nM vector, sample-major."""
    signals = np.asarray(signals, dtype=float)
    if signals.ndim != 2:
        raise ValueError(f"expected 2-d signal matrix, got shape {signals.shape}")
    return signals.ravel(order="F")


def unstack(v: np.ndarray, num_nodes: int, num_samples: int) -> np.ndarray:
    """Inverse of :func:`stack`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (num_nodes * num_samples,):
        raise ValueError(
            f"expected vector of length {num_nodes * num_samples}, got shape {v.shape}"
        )
    return v.reshape(num_nodes, num_samples, order="F")


@dataclass(frozen=True)
class ShiftOperator:
    """Symmetric graph shift operator.

    ``frobenius_unit=True`` additionally pins the Frobenius norm to 1, the
    normalization under which the alignment bounds and sweeps are stated.
    """

    matrix: np.ndarray
    frobenius_unit: bool = False

    def __post_init__(self):
        m = _frozen_array(self.matrix, ndim=2)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"shift operator must be square, got {m.shape}")
        asym = np.abs(m - m.T).max(initial=0.0)
        if asym > SYMMETRY_ATOL:
            raise ValueError(f"shift operator not symmetric: max |S - S^T| = {asym:.3e}")
        if self.frobenius_unit:
            fro = np.linalg.norm(m)
            if abs(fro - 1.0) > UNIT_FRO_ATOL:
                raise ValueError(f"frobenius_unit requested but ||S||_F = {fro!r}")
        object.__setattr__(self, "matrix", m)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def normalized(self) -> "ShiftOperator":
        fro = np.linalg.norm(self.matrix)
        if fro == 0.0:
            raise ValueError("cannot normalize the zero operator")
        return ShiftOperator(self.matrix / fro, frobenius_unit=True)

    def powers_applied(self, signals: np.ndarray, num_taps: int) -> np.ndarray:
        """Return [signals, S signals, ..., S^{K-1} signals] stacked on axis 0."""
        if num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        out = np.empty((num_taps,) + np.shape(signals), dtype=float)
        out[0] = signals
        for k in range(1, num_taps):
            out[k] = self.matrix @ out[k - 1]
        return out


@dataclass(frozen=True)
class BlockDiagShift:
    """M-fold block-diagonal lift of a shift operator, applied implicitly."""

    operator: ShiftOperator
    num_samples: int

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")

    @property
    def size(self) -> int:
        return self.operator.num_nodes * self.num_samples

    def apply(self, v: np.ndarray, power: int = 1) -> np.ndarray:
        """Apply the block-diagonal operator ``power`` times to a stacked vector."""
        if power < 0:
            raise ValueError("power must be >= 0")
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ValueError(f"expected stacked vector of length {self.size}")
        if power == 0:
            return v.copy()
        s = self.operator.matrix
        blocks = v.reshape(self.num_samples, self.operator.num_nodes)
        for _ in range(power):
            blocks = blocks @ s.T
        return blocks.reshape(-1)

    def conjugate(self, a: np.ndarray, power: int = 1) -> np.ndarray:
        """Return S_block^power @ A @ S_block^power for a dense (nM x nM) matrix."""
        if power < 0:
            raise ValueError("power must be >= 0")
        a = np.asarray(a, dtype=float)
        if a.shape != (self.size, self.size):
            raise ValueError(f"expected ({self.size}, {self.size}) matrix")
        if power == 0:
            return a.copy()
        n, m = self.operator.num_nodes, self.num_samples
        s = self.operator.matrix
        blk = a.reshape(m, n, m, n)
        for _ in range(power):
            blk = np.einsum("ab,ibjc->iajc", s, blk)
            blk = np.einsum("ibjd,dc->ibjc", blk, s)
        return blk.reshape(self.size, self.size)


class NtkKind(enum.Enum):
    """How a tangent-kernel matrix was produced."""

    FILTER_ANALYTIC = "filter_analytic"
    EMPIRICAL = "empirical"
    GNN_INFINITE_QUADRATURE = "gnn_infinite_quadrature"
    GNN_INFINITE_SERIES = "gnn_infinite_series"
    GNN_MONTE_CARLO = "gnn_monte_carlo"


class DivergenceError(RuntimeError):
    """Training loss blew up; records the step at which it happened."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"training diverged at step {step} (loss {loss:.3e})")


@dataclass(frozen=True)
class NtkMatrix:
    """Dense stacked tangent-kernel matrix with provenance.

    Construction validates symmetry (relative Frobenius) and positive
    semidefiniteness (smallest eigenvalue above -1e-8 times the operator
    norm).  Dense storage: intended for nM up to a few thousand.
    """

    matrix: np.ndarray
    kind: NtkKind
    info: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        m = _frozen_array(self.matrix, ndim=2)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"kernel matrix must be square, got {m.shape}")
        fro = np.linalg.norm(m)
        if fro > 0:
            asym = np.linalg.norm(m - m.T) / fro
            if asym > NTK_SYMMETRY_RTOL:
                raise ValueError(f"kernel not symmetric: relative asymmetry {asym:.3e}")
        eigs = np.linalg.eigvalsh((m + m.T) / 2.0)
        op_norm = float(np.abs(eigs).max(initial=0.0))
        if eigs.size and eigs[0] < -NTK_PSD_RTOL * max(op_norm, 1e-300):
            raise ValueError(
                f"kernel not PSD: min eigenvalue {eigs[0]:.3e} vs scale {op_norm:.3e}"
            )
        eigs.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "info", dict(self.info))
        object.__setattr__(self, "_eigenvalues", eigs)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order (computed once at construction)."""
        return self._eigenvalues

    @property
    def operator_norm(self) -> float:
        return float(np.abs(self._eigenvalues).max(initial=0.0))

    def rank_estimate(self, rtol: float = 1e-10) -> int:
        cutoff = rtol * max(self.operator_norm, 1e-300)
        return int(np.count_nonzero(self._eigenvalues > cutoff))

    def quadratic_form(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.matrix @ v)

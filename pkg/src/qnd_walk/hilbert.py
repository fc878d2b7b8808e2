"""Density matrices, pure states and projectors on small Hilbert spaces.

All matrices are dense ``complex128`` arrays in row-major (C) order, indexed
in the fixed eigenbasis of the measured observable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_FLOOR = -1e-10
PURITY_TOL = 1e-12
ZERO_WEIGHT_TOL = 1e-300


class ValidationError(ValueError):
    """Raised when an input violates a state, model or config invariant."""


class ZeroWeightBlockError(ValueError):
    """Raised by :func:`project_block` when the block carries no weight.

    The weight that was computed is kept on the exception.
    """

    def __init__(self, message: str, weight: float):
        super().__init__(message)
        self.weight = weight


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated d x d density matrix.

    Construct through ``DensityMatrix(array)``; pass ``repair=True`` to clamp
    small negative eigenvalues to zero and renormalize before validation.
    """

    data: np.ndarray
    repair: bool = False

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.complex128)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValidationError(f"density matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("density matrix has non-finite entries")
        if self.repair:
            a = _repair(a)
        herm = np.max(np.abs(a - a.conj().T))
        if herm > HERMITIAN_TOL:
            raise ValidationError(f"not Hermitian: max |rho - rho^H| = {herm:.3g}")
        tr = np.trace(a).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        lo = np.linalg.eigvalsh(a).min()
        if lo < PSD_FLOOR:
            raise ValidationError(f"not positive semi-definite: min eigenvalue {lo:.3g}")
        pur = float(np.vdot(a, a).real)
        if not 0.0 < pur <= 1.0 + PURITY_TOL:
            raise ValidationError(f"purity {pur!r} outside (0, 1]")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.data.diagonal().real.copy()

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


def _repair(a: np.ndarray) -> np.ndarray:
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    a = (v * w) @ v.conj().T
    return a / np.trace(a).real


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector in the observable eigenbasis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if c.size == 0:
            raise ValidationError("pure state must have at least one amplitude")
        norm = float(np.vdot(c, c).real)
        if abs(norm - 1.0) > TRACE_TOL:
            raise ValidationError(f"amplitudes not normalized: sum |c_i|^2 = {norm!r}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "amplitudes", c)

    @property
    def dim(self) -> int:
        return self.amplitudes.size


@dataclass(frozen=True, eq=False)
class Projector:
    """Orthogonal projector (idempotent, Hermitian, integer trace)."""

    data: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.data, dtype=np.complex128)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError(f"projector must be square, got shape {p.shape}")
        if np.max(np.abs(p @ p - p)) > 1e-12:
            raise ValidationError("projector is not idempotent")
        if np.max(np.abs(p - p.conj().T)) > 1e-12:
            raise ValidationError("projector is not Hermitian")
        tr = np.trace(p).real
        if abs(tr - round(tr)) > 1e-12 or round(tr) < 1:
            raise ValidationError(f"projector trace {tr!r} is not a positive integer")
        object.__setattr__(self, "data", _frozen(p))

    @classmethod
    def from_indices(cls, dim: int, indices) -> "Projector":
        p = np.zeros((dim, dim), dtype=np.complex128)
        idx = list(indices)
        p[idx, idx] = 1.0
        return cls(p)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.data).real))


def _arr(x) -> np.ndarray:
    if isinstance(x, (DensityMatrix, Projector)):
        return x.data
    return np.asarray(x, dtype=np.complex128)


def density_from_pure(psi: PureState | np.ndarray) -> DensityMatrix:
    """Return ``|psi><psi|``.

    >>> density_from_pure(PureState([1, 0])).diagonal
    array([1., 0.])
    """
    if not isinstance(psi, PureState):
        psi = PureState(psi)
    c = psi.amplitudes
    return DensityMatrix(np.outer(c, c.conj()))


def purity(theta: DensityMatrix) -> float:
    """Tr(theta^2), computed as the squared Frobenius norm."""
    a = _arr(theta)
    return float(np.vdot(a, a).real)


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    x, y = _arr(a), _arr(b)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def block_weight(theta, proj) -> float:
    """Tr(Pi theta)."""
    return float(np.trace(_arr(proj) @ _arr(theta)).real)


def project_block(theta: DensityMatrix, proj: Projector) -> tuple[DensityMatrix, float]:
    """Lüders reduction of ``theta`` onto the range of ``proj``.

    Returns
    -------
    state : DensityMatrix
        ``Pi theta Pi / Tr(Pi theta)``.
    weight : float
        ``Tr(Pi theta)``.

    Raises
    ------
    ZeroWeightBlockError
        If the weight is not above ``ZERO_WEIGHT_TOL``; the exception carries
        the weight.
    """
    t, p = _arr(theta), _arr(proj)
    if t.shape != p.shape:
        raise ValueError(f"dimension mismatch: {t.shape} vs {p.shape}")
    weight = block_weight(t, p)
    if weight <= ZERO_WEIGHT_TOL:
        raise ZeroWeightBlockError(f"zero-weight block (Tr(Pi theta) = {weight:.3g})", weight)
    out = p @ t @ p / weight
    out = 0.5 * (out + out.conj().T)
    out /= np.trace(out).real
    return DensityMatrix(out), weight

"""Dense symmetric linear algebra and the two PCA utility metrics.

Every PCA variant in the package returns an :class:`OrthonormalFrame`; the
quality of a frame is measured with :func:`utility_qf` (captured energy) or,
for a single direction, :func:`utility_qa` (absolute correlation with the top
eigenvector).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Tolerances; module-level so callers (and tests) can override them.
NORM_TOL = 1e-9
PSD_TOL = 1e-10
ORTHO_TOL = 1e-8
SIGN_TOL = 1e-12
SENSITIVITY_TOL = 1e-10


class ParameterError(ValueError):
    """Raised when an argument falls outside an operation's domain."""


def _as_float_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class DatasetMatrix:
    """Column-per-record data matrix ``X`` of shape ``(d, n)``.

    Columns must satisfy ``||x_i|| <= norm_bound``.  The default bound of 1 is
    the assumption every privacy calibration in the package relies on; passing
    ``norm_bound=None`` builds an unchecked matrix, which mechanisms accept but
    warn about.
    """

    entries: np.ndarray
    norm_bound: float | None = 1.0
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        x = _as_float_matrix(self.entries, "entries")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise ParameterError("DatasetMatrix needs d >= 1 and n >= 1")
        if self.norm_bound is not None:
            norms = np.linalg.norm(x, axis=0)
            worst = int(np.argmax(norms))
            if norms[worst] > self.norm_bound + NORM_TOL:
                raise ParameterError(
                    f"column {worst} has norm {norms[worst]:.6g} > {self.norm_bound}; "
                    "rescale with dppca.data.normalize first"
                )
        x.setflags(write=False)
        object.__setattr__(self, "entries", x)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def bounded(self) -> bool:
        return self.norm_bound is not None and self.norm_bound <= 1.0


@dataclass(frozen=True, eq=False)
class SecondMomentMatrix:
    """Symmetric matrix with its eigensystem sorted by decreasing eigenvalue."""

    entries: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_matrix(cls, a) -> "SecondMomentMatrix":
        a = _as_float_matrix(a, "matrix")
        if a.shape[0] != a.shape[1]:
            raise ParameterError(f"matrix must be square, got {a.shape}")
        a = symmetrize(a)
        w, v = symmetric_eigh(a)
        for arr in (a, w, v):
            arr.setflags(write=False)
        return cls(a, w, v)

    @property
    def d(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """``d x k`` matrix with orthonormal columns."""

    columns: np.ndarray

    def __post_init__(self):
        v = _as_float_matrix(self.columns, "columns")
        d, k = v.shape
        if not 1 <= k <= d:
            raise ParameterError(f"frame needs 1 <= k <= d, got d={d}, k={k}")
        err = np.linalg.norm(v.T @ v - np.eye(k))
        if err > ORTHO_TOL:
            raise ParameterError(f"columns are not orthonormal (||V'V - I||_F = {err:.3g})")
        v.setflags(write=False)
        object.__setattr__(self, "columns", v)

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def k(self) -> int:
        return self.columns.shape[1]

    def projector(self) -> np.ndarray:
        return self.columns @ self.columns.T


@dataclass(frozen=True)
class EigengapReport:
    k: int
    gap: float
    lambda1: float


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle onto the lower one (exact symmetry)."""
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def sign_normalize(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry with magnitude above ``SIGN_TOL`` is positive."""
    out = np.array(vectors, dtype=float, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = np.flatnonzero(np.abs(col) > SIGN_TOL)
        if idx.size and col[idx[0]] < 0:
            out[:, j] = -col
    return out


def symmetric_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a symmetric matrix, eigenvalues nonincreasing.

    Uses LAPACK's symmetric driver only, so the spectrum is always real.  Ties
    keep LAPACK's column order (stable sort), and eigenvectors are
    sign-normalized.
    """
    w, v = np.linalg.eigh(a)
    order = np.argsort(-w, kind="stable")
    return w[order], sign_normalize(v[:, order])


def second_moment(data: DatasetMatrix) -> SecondMomentMatrix:
    x = data.entries
    return SecondMomentMatrix.from_matrix(x @ x.T / data.n)


def top_k_subspace(a: SecondMomentMatrix, k: int) -> OrthonormalFrame:
    if not 1 <= k <= a.d:
        raise ParameterError(f"k must be in [1, {a.d}], got {k}")
    return OrthonormalFrame(a.eigenvectors[:, :k])


def _check_dims(v: OrthonormalFrame, a: SecondMomentMatrix):
    if v.d != a.d:
        raise ParameterError(f"frame has d={v.d} but matrix has d={a.d}")


def utility_qf(v: OrthonormalFrame, a: SecondMomentMatrix) -> float:
    """Captured energy ``tr(V^T A V)``."""
    _check_dims(v, a)
    cols = v.columns
    return float(np.einsum("ik,ij,jk->", cols, a.entries, cols))


def utility_qa(vhat: OrthonormalFrame, a: SecondMomentMatrix) -> float:
    """Absolute correlation ``|<vhat, v_1>|`` for a single output direction."""
    _check_dims(vhat, a)
    if vhat.k != 1:
        raise ParameterError(f"q_A is defined for k=1 only, got k={vhat.k}")
    return float(min(1.0, abs(vhat.columns[:, 0] @ a.eigenvectors[:, 0])))


def eigengap(a: SecondMomentMatrix, k: int) -> EigengapReport:
    if not 1 <= k <= a.d - 1:
        raise ParameterError(f"eigengap needs 1 <= k <= d-1 = {a.d - 1}, got {k}")
    lam = a.eigenvalues
    return EigengapReport(k=k, gap=float(lam[k - 1] - lam[k]), lambda1=float(lam[0]))


def _check_unit_ball(x: np.ndarray, name: str, tol: float = NORM_TOL):
    if np.linalg.norm(x) > 1 + tol:
        raise ParameterError(f"{name} has norm {np.linalg.norm(x):.6g} > 1")


def neighbor_score_sensitivity(x, xprime) -> float:
    """``max_{|v|=1} |v^T (x x^T - x' x'^T) v|``, i.e. the spectral norm of the difference.

    This is how much the exponential-mechanism score ``n v^T A v`` can move
    when one record ``x`` is replaced by ``x'``.
    """
    x = np.asarray(x, dtype=float).ravel()
    xprime = np.asarray(xprime, dtype=float).ravel()
    if x.shape != xprime.shape:
        raise ParameterError("records must have the same dimension")
    _check_unit_ball(x, "x")
    _check_unit_ball(xprime, "xprime")
    diff = np.outer(x, x) - np.outer(xprime, xprime)
    w = np.linalg.eigvalsh(diff)
    return float(max(abs(w[0]), abs(w[-1])))


def pairwise_outer_diff(x, y) -> float:
    """``sum_{i<=j} (x_i x_j - y_i y_j)^2`` over the upper triangle."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    diff = np.outer(x, x) - np.outer(y, y)
    return float(np.sum(np.triu(diff) ** 2))

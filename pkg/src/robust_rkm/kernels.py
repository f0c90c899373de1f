"""Kernel functions and Gram matrix assembly for the implicit-feature-map path."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError

VALID_KINDS = ("linear", "rbf", "polynomial")


@dataclass(frozen=True)
class KernelSpec:
    """Choice and parameters of the kernel function k(x, y).

    kind:
        "linear"      k(x, y) = x.y
        "rbf"         k(x, y) = exp(-||x - y||^2 / (2 * bandwidth^2))
        "polynomial"  k(x, y) = (x.y + offset)^degree
    """

    kind: str = "linear"
    bandwidth: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise DataValidationError(
                f"kernels.KernelSpec: unknown kind {self.kind!r}, expected one of {VALID_KINDS}"
            )
        if self.kind == "rbf" and not self.bandwidth > 0:
            raise DataValidationError("kernels.KernelSpec: rbf bandwidth must be > 0")
        if self.kind == "polynomial" and int(self.degree) < 1:
            raise DataValidationError("kernels.KernelSpec: polynomial degree must be >= 1")


@dataclass(frozen=True)
class GramMatrix:
    """N x N kernel matrix, symmetric by construction."""

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataValidationError("kernels.GramMatrix: values must be square")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def kernel_matrix(x: np.ndarray, y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Evaluate k(x_i, y_j) for all pairs; returns an (len(x), len(y)) array."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if spec.kind == "linear":
        return x @ y.T
    if spec.kind == "polynomial":
        return (x @ y.T + spec.offset) ** int(spec.degree)
    # rbf: squared distances via the expansion, clipped against negative round-off
    sq = np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :] - 2.0 * (x @ y.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def gram(data: np.ndarray, spec: KernelSpec) -> GramMatrix:
    """Assemble the kernel matrix of a dataset.

    The strict upper triangle is computed once and mirrored, so the result is
    exactly symmetric rather than symmetric up to floating-point commutativity.

    Raises
    ------
    DataValidationError
        If the data contains non-finite entries or is empty.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.size == 0:
        raise DataValidationError("kernels.gram: empty data")
    if not np.all(np.isfinite(data)):
        raise DataValidationError("kernels.gram: data contains non-finite entries")
    k = kernel_matrix(data, data, spec)
    upper = np.triu(k, 1)
    k = upper + upper.T + np.diag(np.diag(k))
    return GramMatrix(values=k, centered=False)


def center(k: GramMatrix) -> GramMatrix:
    """Double-center a Gram matrix: K_c = (I - 11^T/N) K (I - 11^T/N).

    Row and column sums of the result vanish. Idempotent. Off by default in
    the rest of the package, where the eigenproblem consumes the raw K.
    """
    v = k.values
    row = v.mean(axis=0, keepdims=True)
    col = v.mean(axis=1, keepdims=True)
    total = v.mean()
    out = v - row - col + total
    out = 0.5 * (out + out.T)
    return GramMatrix(values=out, centered=True)

"""Spectral decomposition of the system matrix and the projection algebra.

The dissipation argument needs A = S^{-1} A0 S with A0 diagonal and all
eigenvalues real and strictly positive.  This module validates those
hypotheses for a concrete matrix, builds the spectral projections
R_lam = S^{-1} E_lam S (E_lam the 0/1 diagonal selector of the eigenvalue's
coordinates), and provides the frame maps z = S y used everywhere else.

Symmetric matrices take the orthogonal route (eigh); everything else goes
through a general eigenbasis with an explicit defectiveness check, so a
Jordan block is rejected instead of silently producing garbage projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NonpositiveEigenvalue,
    NonrealSpectrum,
    NotDiagonalizable,
    UnknownEigenvalue,
)

__all__ = [
    "SpectralData",
    "validate_and_decompose",
    "spectral_gap",
    "push_forward",
    "pull_back",
]

# Entrywise threshold below which A is treated as exactly symmetric.
_SYMMETRY_TOL = 1e-12

# Construction self-check: reconstruction and projection-identity slack.
_IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class SpectralData:
    """Validated eigenstructure of a system matrix.

    Attributes
    ----------
    matrix : ndarray, shape (n, n)
        The original matrix A.
    eigenvalues : ndarray, shape (n,)
        All eigenvalues in ascending order, repeats included.
    distinct : ndarray, shape (d,)
        Strictly increasing distinct eigenvalues (cluster representatives).
    clusters : tuple of tuple of int
        For each distinct eigenvalue, the indices into ``eigenvalues`` it
        represents.
    transform : ndarray
        S in A = S^{-1} A0 S.  Orthogonal when A is symmetric.
    transform_inv : ndarray
        S^{-1}; its columns are eigenvectors of A.
    diagonal : ndarray
        A0 = diag(eigenvalues).
    projections : tuple of ndarray
        Spectral projections R_lam, one per distinct eigenvalue, in the
        original coordinates.  They sum to the identity, are mutually
        annihilating, and commute with A.
    is_symmetric : bool
    cond_transform : float
        ||S|| * ||S^{-1}|| in the Frobenius norm.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    distinct: np.ndarray
    clusters: tuple[tuple[int, ...], ...]
    transform: np.ndarray
    transform_inv: np.ndarray
    diagonal: np.ndarray
    projections: tuple[np.ndarray, ...]
    is_symmetric: bool
    cond_transform: float
    cluster_tol: float = field(default=1e-8, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def index_of(self, lam: float) -> int:
        """Index into ``distinct`` of the eigenvalue matching ``lam``."""
        scale = max(1.0, abs(lam))
        diffs = np.abs(self.distinct - lam)
        j = int(np.argmin(diffs))
        if diffs[j] > self.cluster_tol * scale:
            raise UnknownEigenvalue(f"{lam} is not an eigenvalue of the decomposition")
        return j

    def mu(self, lam: float) -> float:
        """Spectral gap: distance from lam to the nearest other distinct eigenvalue."""
        j = self.index_of(lam)
        if len(self.distinct) == 1:
            return np.inf
        others = np.delete(self.distinct, j)
        return float(np.min(np.abs(others - self.distinct[j])))

    def selector(self, lam: float) -> np.ndarray:
        """0/1 diagonal projector onto lam's coordinates in the z frame."""
        j = self.index_of(lam)
        e = np.zeros(self.n)
        e[list(self.clusters[j])] = 1.0
        return np.diag(e)

    def projection(self, lam: float) -> np.ndarray:
        """Spectral projection R_lam in the original coordinates."""
        return self.projections[self.index_of(lam)]


def _cluster(values: np.ndarray, tol: float) -> list[list[int]]:
    # values ascending; two eigenvalues belong together iff their gap is
    # below tol relative to the larger magnitude
    groups: list[list[int]] = [[0]]
    for i in range(1, len(values)):
        prev = values[groups[-1][-1]]
        scale = max(1.0, abs(values[i]), abs(prev))
        if abs(values[i] - prev) <= tol * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def validate_and_decompose(A: np.ndarray, tol: float = 1e-8) -> SpectralData:
    """Validate the spectral hypotheses for A and build the decomposition.

    Parameters
    ----------
    A : array_like, shape (n, n)
        System matrix.
    tol : float
        Relative clustering tolerance: eigenvalues closer than
        ``tol * max(1, |value|)`` are treated as one distinct eigenvalue.

    Raises
    ------
    NonrealSpectrum, NonpositiveEigenvalue, NotDiagonalizable, DimensionMismatch
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonrealSpectrum("matrix contains non-finite entries")
    n = A.shape[0]
    norm_A = float(np.linalg.norm(A))
    sym = bool(np.max(np.abs(A - A.T)) <= _SYMMETRY_TOL * max(1.0, np.max(np.abs(A))))

    if sym:
        w, Q = np.linalg.eigh(0.5 * (A + A.T))
        order = np.argsort(w)
        w = w[order]
        V = Q[:, order]          # columns: orthonormal eigenvectors
        S = V.T                  # A = V diag(w) V^T = S^{-1} A0 S
        S_inv = V
    else:
        wc, Vc = np.linalg.eig(A)
        imag_scale = np.abs(wc.imag) / np.maximum(1.0, np.abs(wc.real))
        if np.max(imag_scale) > tol:
            raise NonrealSpectrum(
                f"complex eigenvalues detected (max relative imaginary part "
                f"{np.max(imag_scale):.3e})"
            )
        w = wc.real.copy()
        order = np.argsort(w)
        w = w[order]
        V = np.real(Vc[:, order])
        # normalize eigenvector columns; a zero column means eig failed badly
        lens = np.linalg.norm(V, axis=0)
        if np.any(lens < 1e-300):
            raise NotDiagonalizable("degenerate eigenvector returned by the eigensolver")
        V = V / lens
        S_inv = V
        try:
            S = np.linalg.inv(V)
        except np.linalg.LinAlgError as exc:
            raise NotDiagonalizable(f"eigenvector matrix is singular: {exc}") from None

    if np.any(w <= 0.0):
        raise NonpositiveEigenvalue(
            f"eigenvalues must be strictly positive, got min {np.min(w):.6g}"
        )

    groups = _cluster(w, tol)
    # defectiveness check for every repeated eigenvalue: the geometric
    # multiplicity, read off the SVD rank of A - lam I, must match the
    # cluster size
    for g in groups:
        if len(g) < 2:
            continue
        lam = float(np.mean(w[g]))
        sv = np.linalg.svd(A - lam * np.eye(n), compute_uv=False)
        geo = int(np.sum(sv <= tol * max(1.0, norm_A)))
        if geo < len(g):
            raise NotDiagonalizable(
                f"eigenvalue {lam:.6g} has algebraic multiplicity {len(g)} "
                f"but only {geo} independent eigenvectors"
            )

    A0 = np.diag(w)
    distinct = np.array([float(np.mean(w[g])) for g in groups])
    clusters = tuple(tuple(g) for g in groups)

    projections = []
    for g in groups:
        e = np.zeros(n)
        e[g] = 1.0
        projections.append(S_inv @ np.diag(e) @ S)

    # construction self-check; a failure here means the eigenbasis is too
    # ill-conditioned to honor the projection algebra
    recon_err = np.linalg.norm(S_inv @ A0 @ S - A)
    if recon_err > _IDENTITY_TOL * (1.0 + norm_A):
        raise NotDiagonalizable(
            f"reconstruction error {recon_err:.3e} exceeds tolerance; "
            f"eigenbasis too ill-conditioned"
        )
    resolution_err = np.max(np.abs(sum(projections) - np.eye(n)))
    if resolution_err > _IDENTITY_TOL:
        raise NotDiagonalizable(
            f"projections fail to resolve the identity (max entry error "
            f"{resolution_err:.3e})"
        )

    cond = float(np.linalg.norm(S) * np.linalg.norm(S_inv))
    return SpectralData(
        matrix=A,
        eigenvalues=w,
        distinct=distinct,
        clusters=clusters,
        transform=S,
        transform_inv=S_inv,
        diagonal=A0,
        projections=tuple(projections),
        is_symmetric=sym,
        cond_transform=cond,
        cluster_tol=tol,
    )


def spectral_gap(sd: SpectralData, lam: float) -> float:
    """Distance from lam to the rest of the spectrum; inf for a single eigenvalue."""
    return sd.mu(lam)


def push_forward(sd: SpectralData, y: np.ndarray) -> np.ndarray:
    """Map original coordinates to the symmetric frame, z = S y."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != sd.n:
        raise DimensionMismatch(f"vector of length {y.shape[-1]} against n={sd.n}")
    return y @ sd.transform.T


def pull_back(sd: SpectralData, z: np.ndarray) -> np.ndarray:
    """Inverse frame map, y = S^{-1} z."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != sd.n:
        raise DimensionMismatch(f"vector of length {z.shape[-1]} against n={sd.n}")
    return z @ sd.transform_inv.T

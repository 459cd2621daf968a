"""Matrix generators shared across the test modules."""

import numpy as np


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def spaced_spectrum(n: int, rng: np.random.Generator, gap: float = 0.2) -> np.ndarray:
    # strictly increasing with gaps >= gap so nothing clusters by accident
    return 0.3 + np.cumsum(rng.uniform(gap, 1.0, size=n))


def symmetric_with_spectrum(eigs, seed: int = 0) -> np.ndarray:
    eigs = np.asarray(eigs, dtype=float)
    rng = np.random.default_rng(seed)
    q = random_orthogonal(len(eigs), rng)
    return q @ np.diag(eigs) @ q.T


def diagonalizable_with_spectrum(eigs, seed: int = 0, spread: float = 0.5):
    """Nonsymmetric A = S^-1 diag(eigs) S with a modest similarity.

    Returns (A, S).  The similarity is resampled until cond(S) < 50 so the
    construction never hands the tests an ill-conditioned frame.
    """
    eigs = np.asarray(eigs, dtype=float)
    n = len(eigs)
    rng = np.random.default_rng(seed)
    while True:
        S = np.eye(n) + spread * rng.standard_normal((n, n)) / np.sqrt(n)
        if np.linalg.cond(S) < 50.0:
            break
    A = np.linalg.solve(S, np.diag(eigs) @ S)
    return A, S

"""Dense linear algebra and column statistics used by the entropy estimator."""

import numpy as np
from scipy.spatial.distance import pdist, squareform


class NonFiniteDataError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    def __init__(self, sweeps, off_norm, solver="Jacobi"):
        super().__init__(
            f"{solver} eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal norm {off_norm:.3e})"
        )
        self.sweeps = sweeps
        self.off_norm = off_norm


# Largest negative (or >1) excursion tolerated before clamping normalized-Gram spectra.
CLAMP_TOL = 1e-8


def as_data_matrix(X, name="X"):
    """Return ``X`` as a 2-D float64 array with at least one row and column.

    1-D input is read as a single column (N samples of a scalar variable).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"{name} must have N >= 1 and d >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteDataError(f"non-finite data in {name}")
    return X


def pairwise_sq_dists(X):
    """Squared Euclidean distances between all rows of ``X``.

    Uses explicit differences, so duplicated rows give exactly 0 and the
    result is symmetric with an exact zero diagonal.
    """
    X = as_data_matrix(X)
    if X.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(X, "sqeuclidean"))


def hadamard(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"order mismatch: {A.shape} vs {B.shape}")
    return A * B


def column_stats(X):
    """Column means and population (ddof=0) standard deviations."""
    X = as_data_matrix(X)
    return X.mean(axis=0), X.std(axis=0)


def jacobi_eigenvalues(A, tol=1e-12, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Converged when the off-diagonal Frobenius norm drops below
    ``tol * order``. Returned unsorted (diagonal order).
    """
    A = np.array(A, dtype=np.float64, copy=True)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix must be square, got {A.shape}")
    threshold = tol * n

    def off_norm():
        off = A - np.diag(np.diag(A))
        return np.sqrt(np.sum(off * off))

    for sweep in range(max_sweeps):
        if off_norm() < threshold:
            return np.diag(A).copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                h = A[q, q] - A[p, p]
                if abs(h) + 100.0 * abs(apq) == abs(h):
                    # angle underflows; t ~ apq / h
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows then columns p, q
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
    final = off_norm()
    if final < threshold:
        return np.diag(A).copy()
    raise EigenConvergenceError(max_sweeps, final)


def sym_eigenvalues(A, clamp=False, method="lapack"):
    """All eigenvalues of symmetric ``A``, sorted descending.

    Parameters
    ----------
    A : (N, N) array
        Symmetric matrix. Only the lower triangle is read by LAPACK.
    clamp : bool
        For unit-trace PSD matrices: clip the spectrum to [0, 1]. Excursions
        larger than ``CLAMP_TOL`` raise instead, since they signal a bug
        upstream rather than roundoff.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls ``numpy.linalg.eigvalsh``; ``"jacobi"`` uses the
        pure-numpy cyclic Jacobi solver.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if method == "lapack":
        try:
            lam = np.linalg.eigvalsh(A)
        except np.linalg.LinAlgError as exc:
            raise EigenConvergenceError(0, float("nan"), solver="LAPACK") from exc
    elif method == "jacobi":
        lam = jacobi_eigenvalues(A)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    lam = np.sort(lam)[::-1]
    if clamp:
        if lam[-1] < -CLAMP_TOL or lam[0] > 1.0 + CLAMP_TOL:
            raise ValueError(
                f"eigenvalues outside [0, 1] beyond tolerance: "
                f"min={lam[-1]:.3e}, max={lam[0]:.6f}"
            )
        lam = np.clip(lam, 0.0, 1.0)
    return lam

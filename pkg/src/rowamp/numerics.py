"""Complex linear-algebra helpers shared by the solver and the analysis code.

Covariances are plain ``numpy`` arrays of shape ``(..., M, M)``; every helper
accepts arbitrary leading batch dimensions so per-row quantities can be
processed in one call.  The complex Gaussian convention throughout is

    N_c(x | a, A) = det(pi A)^-1 exp(-(x - a)^H A^-1 (x - a)).
"""

import numpy as np

DEFAULT_JITTER = 1e-9
PSD_TOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix stays singular after jitter is applied."""


def herm(A):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(A, -1, -2))


def hermitize(A):
    return 0.5 * (A + herm(A))


def eye_like(A):
    M = A.shape[-1]
    return np.broadcast_to(np.eye(M, dtype=A.dtype), A.shape)


def _trace_scale(A):
    M = A.shape[-1]
    scale = np.real(np.trace(A, axis1=-2, axis2=-1)) / M
    # zero-trace inputs still need a positive shift
    return np.where(scale > 0, scale, 1.0)


def inv_h(A, jitter=DEFAULT_JITTER, name="matrix"):
    """Inverse of a Hermitian positive definite matrix (or stack of them).

    A Cholesky factorization is attempted first; if it fails a relative
    jitter ``jitter * trace / M`` is added to the diagonal and the
    factorization retried once before giving up.
    """
    A = hermitize(np.asarray(A, dtype=complex))
    if not np.all(np.isfinite(A)):
        raise SingularMatrixError(f"{name} has non-finite entries")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        shift = jitter * _trace_scale(A)
        A = A + shift[..., None, None] * eye_like(A)
        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise SingularMatrixError(f"{name} is singular or indefinite") from None
    return hermitize(np.linalg.inv(A))


def ensure_psd(A, rel_jitter=0.0):
    """Symmetrize and, where the smallest eigenvalue is negative, shift it up.

    The shift is ``(|lambda_min| + rel_jitter * trace / M) * I`` so the
    output is strictly positive definite whenever ``rel_jitter > 0``.
    Already-PSD inputs come back symmetrized but otherwise untouched.
    """
    A = hermitize(np.asarray(A, dtype=complex))
    lam_min = np.linalg.eigvalsh(A)[..., 0]
    neg = lam_min < 0
    if not np.any(neg):
        return A
    M = A.shape[-1]
    trace = np.real(np.trace(A, axis1=-2, axis2=-1))
    shift = np.where(neg, -lam_min + rel_jitter * np.abs(trace) / M, 0.0)
    return A + shift[..., None, None] * eye_like(A)


def clip_psd(A, floor=0.0):
    """Project onto the PSD cone by flooring eigenvalues.

    Returns the projected matrix and a boolean mask of which batch entries
    needed clipping.
    """
    A = hermitize(np.asarray(A, dtype=complex))
    lam, V = np.linalg.eigh(A)
    clipped = lam[..., 0] < floor
    if not np.any(clipped):
        return A, clipped
    lam = np.maximum(lam, floor)
    return hermitize((V * lam[..., None, :]) @ herm(V)), clipped


def is_psd(A, tol=PSD_TOL):
    """Eigenvalue test: lambda_min >= -tol * trace / M for every batch entry."""
    A = hermitize(np.asarray(A, dtype=complex))
    M = A.shape[-1]
    lam_min = np.linalg.eigvalsh(A)[..., 0]
    trace = np.abs(np.real(np.trace(A, axis1=-2, axis2=-1)))
    return bool(np.all(lam_min >= -tol * trace / M - 1e-300))


def sqrtm_psd(A):
    """Hermitian square root with negative eigenvalues clipped at zero."""
    lam, V = np.linalg.eigh(hermitize(np.asarray(A, dtype=complex)))
    lam = np.sqrt(np.maximum(lam, 0.0))
    return (V * lam[..., None, :]) @ herm(V)


def logdet_h(A):
    sign, logdet = np.linalg.slogdet(A)
    if np.any(np.real(sign) <= 0):
        raise SingularMatrixError("log-determinant of a non-PD matrix")
    return logdet


def matvec(A, x):
    return np.einsum("...ij,...j->...i", A, x)


def outer(x, y=None):
    y = x if y is None else y
    return x[..., :, None] * np.conj(y[..., None, :])


def quad_form(x, A):
    """Real part of x^H A x, batched."""
    return np.real(np.einsum("...i,...ij,...j->...", np.conj(x), A, x))


def log_gauss(x, a, A):
    """log N_c(x | a, A), batched over leading axes."""
    A = np.asarray(A, dtype=complex)
    M = A.shape[-1]
    d = np.asarray(x) - np.asarray(a)
    return -M * np.log(np.pi) - logdet_h(A) - quad_form(d, inv_h(A))


def gaussian_product(a, A, b, B, jitter=DEFAULT_JITTER):
    """Product of two complex Gaussians in the same variable.

    N_c(x|a,A) N_c(x|b,B) = N_c(0|a-b, A+B) N_c(x|c,C) with
    C = (A^-1 + B^-1)^-1 and c = C (A^-1 a + B^-1 b).

    Returns ``(c, C, log_scale)``.
    """
    Ai = inv_h(A, jitter, name="A")
    Bi = inv_h(B, jitter, name="B")
    C = inv_h(Ai + Bi, jitter, name="A^-1 + B^-1")
    c = matvec(C, matvec(Ai, a) + matvec(Bi, b))
    log_scale = log_gauss(np.asarray(a) - np.asarray(b), 0.0, np.asarray(A) + np.asarray(B))
    return c, C, log_scale


def assemble_block_symmetric(A, B, tau):
    """Q = I_{tau+1} (x) (A - B) + 1 1^T (x) B."""
    n = tau + 1
    return np.kron(np.eye(n), A - B) + np.kron(np.ones((n, n)), B)


def block_symmetric_inverse(A, B, tau):
    """Closed-form inverse of the replica-symmetric block matrix.

    For Q = I (x) (A - B) + 1 1^T (x) B with tau + 1 blocks,

        Q^-1 = I (x) (A - B)^-1 - 1 1^T (x) [(A - B) B^-1 (A - B) + (tau + 1)(A - B)]^-1.

    Both ``A - B`` and ``B`` must be invertible.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    D = A - B
    Di = _strict_inv(D, "A - B")
    Bi = _strict_inv(B, "B")
    G = _strict_inv(D @ Bi @ D + (tau + 1) * D, "(A-B)B^-1(A-B) + (tau+1)(A-B)")
    n = tau + 1
    return np.kron(np.eye(n), Di) - np.kron(np.ones((n, n)), G)


def _strict_inv(A, name):
    # block-structured inverses are not Hermitian-PD in general, so no jitter here
    A = np.asarray(A, dtype=complex)
    if A.size == 0 or np.linalg.cond(A) > 1e14:
        raise SingularMatrixError(f"{name} is singular")
    return np.linalg.inv(A)


def complex_normal(rng, shape):
    """Standard circular complex normal draws, E|z|^2 = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_complex_gaussian(rng, mean, cov, size=None):
    """Draw from N_c(mean, cov).

    ``size`` adds leading sample axes; ``None`` returns a single vector.
    Real and imaginary parts each carry half of ``cov``.
    """
    mean = np.asarray(mean, dtype=complex)
    cov = np.asarray(cov, dtype=complex)
    if not is_psd(cov):
        raise ValueError("covariance is not positive semidefinite")
    M = cov.shape[-1]
    shape = (M,) if size is None else tuple(np.atleast_1d(size)) + (M,)
    g = complex_normal(rng, shape)
    return mean + matvec(sqrtm_psd(cov), g)


def assert_real_blocks(A, tol=1e-10):
    """Replica-symmetric fixed-point blocks are real; check imaginary leakage."""
    A = np.asarray(A)
    scale = max(1.0, float(np.max(np.abs(A))))
    return float(np.max(np.abs(np.imag(A)))) <= tol * scale

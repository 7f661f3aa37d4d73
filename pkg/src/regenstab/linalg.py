"""Dense kernels: matrix exponential, exponential integrals, spectral radius.

`expm` works on stacks of matrices with shape ``(..., n, n)`` so that Monte
Carlo engines can exponentiate many small matrices in one call.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

# Pade(13) coefficients and the 1-norm threshold below which the
# approximant reaches unit roundoff without scaling.
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152


def _as_square_stack(A):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def expm(A, t=1.0):
    """Matrix exponential ``exp(A t)`` by scaling and squaring.

    Uses a fixed degree-13 Pade approximant. Each matrix in a stack gets
    its own scaling exponent, so mixing tiny and large norms in one batch
    costs accuracy nothing.

    Parameters
    ----------
    A : (..., n, n) array_like
        Real square matrix or stack of matrices.
    t : float, optional
        Time multiplier, must be nonnegative.

    Returns
    -------
    (..., n, n) numpy.ndarray
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    A = _as_square_stack(A) * t
    n = A.shape[-1]
    batch = A.shape[:-2]
    A = A.reshape((-1, n, n))

    norms = np.abs(A).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norms / _THETA13))
    s = np.where(np.isfinite(s) & (s > 0), s, 0).astype(int)
    A = A / (2.0 ** s)[:, None, None]

    b = _PADE13
    ident = np.broadcast_to(np.eye(n), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    R = np.linalg.solve(V - U, V + U)

    for i in range(int(s.max(initial=0))):
        sel = s > i
        R[sel] = R[sel] @ R[sel]
    return R.reshape(batch + (n, n))


def expm_integral(F, a, b):
    """Return the integral of ``exp(F t)`` over ``t`` in ``[a, b]``.

    The integral from 0 to ``w`` is the top-right block of
    ``exp([[F, I], [0, 0]] w)``; shifting by ``exp(F a)`` gives the general
    interval without subtracting two nearly equal antiderivatives.
    """
    F = _as_square_stack(F)
    if F.ndim != 2:
        raise DimensionError("expm_integral takes a single matrix")
    if a > b:
        raise ValueError(f"need a <= b, got [{a}, {b}]")
    n = F.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = F
    aug[:n, n:] = np.eye(n)
    from_zero = expm(aug, b - a)[:n, n:]
    if a == 0:
        return from_zero
    shift = expm(F, abs(a)) if a > 0 else expm(-F, -a)
    return shift @ from_zero


def expm_convolution(F1, F2, t):
    """Integral of ``exp((t - s) F1) exp(s F2)`` for ``s`` in ``[0, t]``.

    Read off the top-right block of ``exp([[F1, I], [0, F2]] t)``.
    """
    F1 = _as_square_stack(F1)
    F2 = _as_square_stack(F2)
    if F1.shape != F2.shape or F1.ndim != 2:
        raise DimensionError(
            f"F1 and F2 must be square of equal size, got {F1.shape} and {F2.shape}")
    n = F1.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = F1
    aug[:n, n:] = np.eye(n)
    aug[n:, n:] = F2
    return expm(aug, t)[:n, n:]


@dataclass(frozen=True)
class SpectralResult:
    radius: float
    dominant_eigenvalue: complex
    iterations: int
    converged: bool


def _balance(H):
    # Parlett-Reinsch diagonal similarity with powers of two (exact in fp).
    n = H.shape[0]
    radix = 2.0
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.abs(H[:, i]).sum() - abs(H[i, i])
            r = np.abs(H[i, :]).sum() - abs(H[i, i])
            if c == 0.0 or r == 0.0:
                continue
            f = 1.0
            total = c + r
            while c < r / radix:
                c *= radix
                r /= radix
                f *= radix
            while c >= r * radix:
                c /= radix
                r *= radix
                f /= radix
            if (c + r) < 0.95 * total:
                done = False
                H[i, :] /= f
                H[:, i] *= f
    return H


def hessenberg(A):
    """Reduce ``A`` to upper Hessenberg form by Householder similarities."""
    H = np.array(A, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(norm_x, x[0])
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _block_eigenvalues(a, b, c, d):
    mean = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if disc >= 0:
        root = np.sqrt(disc)
        return [complex(mean + root), complex(mean - root)]
    root = np.sqrt(-disc)
    return [complex(mean, root), complex(mean, -root)]


def _reflector(x):
    """Unit Householder vector mapping ``x`` onto a multiple of e1."""
    alpha = np.linalg.norm(x)
    if alpha == 0.0:
        return None
    v = np.array(x, dtype=float)
    v[0] += np.copysign(alpha, v[0])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return None
    return v / nv


def _francis_eigenvalues(H, tol, max_iter):
    n = H.shape[0]
    eigs = []
    hi = n - 1
    total = 0
    since_deflation = 0
    # subdiagonals below ulp * |H| are negligible whatever their neighbours
    floor = np.finfo(float).eps * np.linalg.norm(H)
    while hi >= 0:
        if hi == 0:
            eigs.append(complex(H[0, 0]))
            break
        # locate the bottom of the unreduced active block
        lo = hi
        while lo > 0:
            scale = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if scale == 0.0:
                scale = np.abs(H[:hi + 1, :hi + 1]).max()
            if abs(H[lo, lo - 1]) <= max(tol * scale, floor):
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(complex(H[hi, hi]))
            hi -= 1
            since_deflation = 0
            continue
        if lo == hi - 1:
            eigs.extend(_block_eigenvalues(H[hi - 1, hi - 1], H[hi - 1, hi],
                                           H[hi, hi - 1], H[hi, hi]))
            hi -= 2
            since_deflation = 0
            continue
        if total >= max_iter:
            # best estimate: diagonal of the unreduced part
            eigs.extend(complex(v) for v in np.diag(H[:hi + 1, :hi + 1]))
            return eigs, total, False

        total += 1
        since_deflation += 1
        if since_deflation % 10 == 0:
            # ad hoc shift breaks cycles of the standard double shift
            w = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
            tr = 1.5 * w + H[hi, hi]
            det = w * w
        else:
            tr = H[hi - 1, hi - 1] + H[hi, hi]
            det = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]

        x = H[lo, lo] ** 2 + H[lo, lo + 1] * H[lo + 1, lo] - tr * H[lo, lo] + det
        y = H[lo + 1, lo] * (H[lo, lo] + H[lo + 1, lo + 1] - tr)
        z = H[lo + 1, lo] * H[lo + 2, lo + 1]
        for k in range(lo, hi - 1):
            v = _reflector([x, y, z])
            if v is not None:
                col = max(lo, k - 1)
                blk = H[k:k + 3, col:hi + 1]
                blk -= 2.0 * np.outer(v, v @ blk)
                row = min(k + 3, hi)
                blk = H[lo:row + 1, k:k + 3]
                blk -= 2.0 * np.outer(blk @ v, v)
            x = H[k + 1, k]
            y = H[k + 2, k]
            if k < hi - 2:
                z = H[k + 3, k]
        v = _reflector([x, y])
        if v is not None:
            blk = H[hi - 1:hi + 1, hi - 2:hi + 1]
            blk -= 2.0 * np.outer(v, v @ blk)
            blk = H[lo:hi + 1, hi - 1:hi + 1]
            blk -= 2.0 * np.outer(blk @ v, v)
    return eigs, total, True


def eigenvalues(A, tol=1e-12, max_iter=None):
    """All eigenvalues of a real square matrix via Hessenberg + Francis QR.

    Returns ``(eigs, iterations, converged)``.
    """
    A = _as_square_stack(A)
    if A.ndim != 2:
        raise DimensionError("eigenvalues takes a single matrix")
    n = A.shape[0]
    if max_iter is None:
        max_iter = 100 * n
    # power-of-two rescaling is exact and keeps the shift products in range;
    # balancing can shrink the whole matrix, so rescale once more after it
    shift = 0
    H = A
    for stage in (lambda M: M, lambda M: hessenberg(_balance(M))):
        H = stage(H)
        peak = np.abs(H).max(initial=0.0)
        if peak == 0.0:
            return np.zeros(n, dtype=complex), 0, True
        e = int(np.frexp(peak)[1])
        H = np.ldexp(H, -e)
        shift += e
    eigs, its, ok = _francis_eigenvalues(H, tol, max_iter)
    eigs = np.array(eigs, dtype=complex)
    return np.ldexp(eigs.real, shift) + 1j * np.ldexp(eigs.imag, shift), its, ok


def spectral_radius(A, tol=1e-12):
    """Spectral radius with the dominant eigenvalue.

    Deflation tolerance ``tol`` is relative to the neighbouring diagonal
    entries; the total number of double-shift sweeps is capped at
    ``100 * dim``. On hitting the cap the result carries
    ``converged=False`` and a best estimate of the radius.
    """
    eigs, its, ok = eigenvalues(A, tol=tol)
    idx = int(np.argmax(np.abs(eigs)))
    lam = complex(eigs[idx])
    return SpectralResult(radius=float(abs(lam)), dominant_eigenvalue=lam,
                          iterations=its, converged=ok)

"""Dense complex matrix kernel for small multi-register Hilbert spaces.

All matrices are plain complex numpy arrays in row-major layout.  Register 0
is always the leftmost tensor factor; a "shape" is the ordered tuple of
per-register dimensions whose product equals the matrix dimension.
"""

from __future__ import annotations

import numpy as np

# Tolerances used across the package.
HERM_TOL = 1e-10
PSD_TOL = 1e-9
EIG_TOL = 1e-9
RANK_TOL = 1e-10  # relative to the largest eigenvalue

_JACOBI_MAX_SWEEPS = 60


class LinalgError(Exception):
    """Invalid matrix input or eigensolver non-convergence."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise LinalgError(f"expected a 2-d array, got ndim={m.ndim}")
    return m


def check_register_shape(dims, dim: int) -> tuple[int, ...]:
    """Validate a per-register dimension list against a total dimension."""
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise LinalgError(f"register dimensions must be >= 1, got {dims}")
    prod = 1
    for d in dims:
        prod *= d
    if prod != dim:
        raise LinalgError(f"register shape {dims} does not factor dimension {dim}")
    return dims


def hermitian_defect(m: np.ndarray) -> float:
    """max |M - M^dagger|, elementwise."""
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def is_hermitian(m: np.ndarray, tol: float = HERM_TOL) -> bool:
    return hermitian_defect(m) <= tol


def kron(a, b) -> np.ndarray:
    """Tensor product, register order left to right.

    Entry (i*rb+p, j*cb+q) is exactly a[i,j]*b[p,q] (one multiplication).
    """
    a = as_matrix(a)
    b = as_matrix(b)
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


def kron_all(mats) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, as_matrix(m))
    return out


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def partial_trace(m: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out every register not listed in ``keep``.

    ``keep`` is a set of register indices; kept registers stay in their
    original order.  Keeping every register returns the matrix unchanged,
    keeping none returns a 1x1 matrix holding the trace.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise LinalgError("partial_trace requires a square matrix")
    dims = check_register_shape(dims, m.shape[0])
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if keep and (keep[0] < 0 or keep[-1] >= n):
        raise LinalgError(f"keep indices {keep} out of range for {n} registers")
    if len(keep) == n:
        return m.copy()

    t = m.reshape(*dims, *dims)
    # Contract bra/ket axes of traced registers pairwise.
    for j in range(n - 1, -1, -1):
        if j not in keep:
            t = np.trace(t, axis1=j, axis2=j + (t.ndim // 2))
    d_keep = 1
    for k in keep:
        d_keep *= dims[k]
    return t.reshape(d_keep, d_keep)


def permute_registers(m: np.ndarray, dims, perm) -> np.ndarray:
    """Reorder tensor factors: new register i is old register perm[i]."""
    m = as_matrix(m)
    dims = check_register_shape(dims, m.shape[0])
    n = len(dims)
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise LinalgError(f"{perm} is not a permutation of {n} registers")
    axes = perm + [p + n for p in perm]
    t = m.reshape(*dims, *dims).transpose(axes)
    return t.reshape(m.shape)


def embed_operator(op: np.ndarray, dims, targets) -> np.ndarray:
    """Pad ``op`` (acting on registers ``targets``, in that order) with identities.

    Realizes expressions of the form I x ... x op x ... x I for an arbitrary,
    possibly non-contiguous, register subset.
    """
    op = as_matrix(op)
    dims = tuple(int(d) for d in dims)
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise LinalgError("duplicate target registers")
    if targets and (min(targets) < 0 or max(targets) >= len(dims)):
        raise LinalgError(f"targets {targets} out of range")
    d_t = 1
    for t in targets:
        d_t *= dims[t]
    if op.shape != (d_t, d_t):
        raise LinalgError(f"operator shape {op.shape} does not match targets {targets}")
    rest = [i for i in range(len(dims)) if i not in targets]
    # Contiguous ascending target block: plain I (x) op (x) I, no permutation.
    if targets == sorted(targets) and (
        not targets or targets == list(range(targets[0], targets[-1] + 1))
    ):
        d_pre = 1
        for i in range(targets[0] if targets else 0):
            d_pre *= dims[i]
        d_post = 1
        for i in range((targets[-1] + 1) if targets else 0, len(dims)):
            d_post *= dims[i]
        return kron(kron(identity(d_pre), op), identity(d_post))
    d_rest = 1
    for r in rest:
        d_rest *= dims[r]
    big = np.kron(op, identity(d_rest))
    # big acts on registers ordered (targets..., rest...); undo that ordering.
    order = targets + rest
    inverse = [0] * len(dims)
    for new_pos, old_pos in enumerate(order):
        inverse[old_pos] = new_pos
    return permute_registers(big, [dims[p] for p in order], inverse)


def _offdiag_sq(a: np.ndarray) -> float:
    # Summed directly (not total minus diagonal) to avoid cancellation.
    sq = np.abs(a) ** 2
    np.fill_diagonal(sq, 0.0)
    return float(np.sum(sq))


def _eig2(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Hermitian 2x2 eigendecomposition."""
    p = a[0, 0].real
    q = a[1, 1].real
    g = a[0, 1]
    if abs(g) == 0.0:
        w = np.array([p, q])
        v = np.eye(2, dtype=complex)
    else:
        mean = 0.5 * (p + q)
        half = 0.5 * (p - q)
        r = np.hypot(half, abs(g))
        w = np.array([mean + r, mean - r])
        u = g / abs(g)
        # Eigenvector for w[0]; the companion is orthogonal by construction.
        v0 = np.array([w[0] - q, np.conj(u) * abs(g)], dtype=complex)
        v0 /= np.linalg.norm(v0)
        v1 = np.array([-np.conj(v0[1]), np.conj(v0[0])], dtype=complex)
        v = np.column_stack([v0, v1])
    return w, v


def herm_eig(m: np.ndarray, vectors: bool = True, tol: float = HERM_TOL):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order (ties broken by original index,
    so projector construction is reproducible) and, if ``vectors``, a unitary
    whose columns are the matching eigenvectors.

    Raises LinalgError on non-Hermitian input or non-convergence.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if n != m.shape[1]:
        raise LinalgError("herm_eig requires a square matrix")
    scale = float(np.max(np.abs(m))) if n else 0.0
    if hermitian_defect(m) > tol * max(1.0, scale):
        raise LinalgError(f"matrix is not Hermitian within {tol}")
    a = 0.5 * (m + m.conj().T)

    if n == 1:
        w = np.array([a[0, 0].real])
        v = np.ones((1, 1), dtype=complex)
    elif n == 2:
        w, v = _eig2(a)
    else:
        w, v = _jacobi(a, vectors)

    order = np.argsort(-w, kind="stable")
    w = w[order]
    if not vectors:
        return w
    return w, (v[:, order] if v is not None else None)


def _jacobi(a: np.ndarray, want_vectors: bool):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n, dtype=complex) if want_vectors else None
    norm = float(np.linalg.norm(a))
    stop = (1e-14 * max(1.0, norm)) ** 2
    pivot_floor = np.sqrt(stop) / (n * n)

    for _ in range(_JACOBI_MAX_SWEEPS):
        if _offdiag_sq(a) <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = a[p, q]
                absg = abs(g)
                if absg <= pivot_floor:
                    continue
                u = g / absg
                tau = (a[q, q].real - a[p, p].real) / (2.0 * absg)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                su = s * u
                # Column update A <- A V, then row update A <- V^dagger A.
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - np.conj(su) * aq
                a[:, q] = su * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - su * rq
                a[q, :] = np.conj(su) * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                if v is not None:
                    vp = v[:, p].copy()
                    vq = v[:, q].copy()
                    v[:, p] = c * vp - np.conj(su) * vq
                    v[:, q] = su * vp + c * vq
    else:
        raise LinalgError("Jacobi eigensolver did not converge")
    return np.diag(a).real.copy(), v


def herm_eigvals(m: np.ndarray, tol: float = HERM_TOL) -> np.ndarray:
    """Descending eigenvalues of a Hermitian matrix (no eigenvectors)."""
    return herm_eig(m, vectors=False, tol=tol)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Positive square root of a PSD matrix.

    Eigenvalues in [-PSD_TOL, 0) are clamped to zero; anything lower raises.
    """
    w, v = herm_eig(m)
    if w.size and w[-1] < -PSD_TOL:
        raise LinalgError(f"matrix is not PSD: min eigenvalue {w[-1]:.3e}")
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def pinv_sqrt(m: np.ndarray) -> np.ndarray:
    """Pseudo-inverse square root: lambda^(-1/2) on the support, 0 on the kernel.

    The support cutoff is RANK_TOL relative to the largest eigenvalue.
    """
    w, v = herm_eig(m)
    if w.size == 0 or w[0] <= 0.0:
        return np.zeros_like(as_matrix(m))
    cutoff = RANK_TOL * w[0]
    inv = np.where(w > cutoff, 1.0 / np.sqrt(np.clip(w, cutoff, None)), 0.0)
    return (v * inv) @ v.conj().T


def support_projector(m: np.ndarray) -> np.ndarray:
    """Projector onto the eigenspace of eigenvalues above the rank cutoff."""
    w, v = herm_eig(m)
    if w.size == 0 or w[0] <= 0.0:
        return np.zeros_like(as_matrix(m))
    mask = (w > RANK_TOL * w[0]).astype(float)
    return (v * mask) @ v.conj().T


def trace_norm(m: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    return float(np.sum(np.abs(herm_eigvals(m))))

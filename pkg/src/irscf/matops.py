"""Dense complex matrix utilities: vectorization, products, trace identities.

The stacking convention is column-major everywhere (``vec`` stacks columns).
All helpers are pure functions on ndarrays and never mutate their inputs.
"""

import numpy as np

__all__ = [
    "vec",
    "unvec",
    "vecd",
    "kron",
    "hadamard",
    "blkdiag",
    "check_identities",
]


def vec(A):
    """Stack the columns of A into a single vector (column-major)."""
    A = np.asarray(A)
    if A.size == 0:
        raise ValueError("vec: empty matrix")
    return A.reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`: reshape a length rows*cols vector to a matrix."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise ValueError(f"unvec: length {v.size} != {rows}*{cols}")
    return v.reshape(rows, cols, order="F")


def vecd(A):
    """Vector of the diagonal entries of a square matrix."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"vecd: expected square matrix, got shape {A.shape}")
    return np.diag(A).copy()


def kron(A, B):
    """Kronecker product."""
    return np.kron(np.asarray(A), np.asarray(B))


def hadamard(A, B):
    """Element-wise (Hadamard) product; shapes must match exactly."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"hadamard: shape mismatch {A.shape} vs {B.shape}")
    return A * B


def blkdiag(blocks):
    """Block-diagonal matrix from a sequence of 2-D blocks."""
    blocks = [np.atleast_2d(b) for b in blocks]
    if not blocks:
        return np.zeros((0, 0), dtype=complex)
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=np.result_type(*[b.dtype for b in blocks], complex))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _rel_residual(lhs, rhs):
    """|lhs - rhs| relative to the larger magnitude; 0 for exact zeros."""
    lhs = np.asarray(lhs)
    rhs = np.asarray(rhs)
    num = np.linalg.norm(np.ravel(lhs - rhs))
    den = max(np.linalg.norm(np.ravel(lhs)), np.linalg.norm(np.ravel(rhs)))
    if den == 0.0:
        return 0.0
    return num / den


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def check_identities(seed=0, max_dim=5, trials=20):
    """Numerically verify the trace/vectorization identity set on random matrices.

    Checks, for random complex matrices of compatible shapes:

      a) Tr(A^T B)    = vec(A)^T vec(B)
      b) Tr(A kron B) = Tr(A) Tr(B)
      c) vec(A B C)   = (C^T kron A) vec(B)
      d) Tr(A M B M)  = m^T (A o B^T) m,  M = Diag(m)
      e) A o I        = Diag(vecd(A))
      f) E{x^H A x}   = Tr(A Sigma) + c^H A c   (checked via the
         second-moment route Tr(A (Sigma + c c^H)), plus the Sigma=0 case)

    Identity (d) carries the transpose on B; in that form it matches the
    Hadamard reduction Tr(M^H Z M Q) = m^H (Z o Q^T) m used by the
    phase-shift subproblem.

    Returns a dict of per-identity maximum relative residuals plus "max".
    """
    rng = np.random.default_rng(seed)
    res = {k: 0.0 for k in ("54a", "54b", "54c", "54d", "54e", "54f")}

    for _ in range(trials):
        m, n, p, q = rng.integers(1, max_dim + 1, size=4)

        A = _crandn(rng, m, n)
        B = _crandn(rng, m, n)
        res["54a"] = max(res["54a"], _rel_residual(np.trace(A.T @ B), vec(A) @ vec(B)))

        A = _crandn(rng, m, m)
        B = _crandn(rng, n, n)
        res["54b"] = max(
            res["54b"], _rel_residual(np.trace(kron(A, B)), np.trace(A) * np.trace(B))
        )

        A = _crandn(rng, m, n)
        B = _crandn(rng, n, p)
        C = _crandn(rng, p, q)
        res["54c"] = max(
            res["54c"], _rel_residual(vec(A @ B @ C), kron(C.T, A) @ vec(B))
        )

        A = _crandn(rng, n, n)
        B = _crandn(rng, n, n)
        mvec = _crandn(rng, n)
        M = np.diag(mvec)
        res["54d"] = max(
            res["54d"],
            _rel_residual(np.trace(A @ M @ B @ M), mvec @ (hadamard(A, B.T) @ mvec)),
        )

        A = _crandn(rng, n, n)
        res["54e"] = max(
            res["54e"], _rel_residual(hadamard(A, np.eye(n)), np.diag(vecd(A)))
        )

        # (f) algebraically: E{x^H A x} = Tr(A E{x x^H}) with E{x x^H} = Sigma + c c^H
        A = _crandn(rng, n, n)
        c = _crandn(rng, n)
        L = _crandn(rng, n, n)
        Sigma = L @ L.conj().T
        lhs = np.trace(A @ (Sigma + np.outer(c, c.conj())))
        rhs = np.trace(A @ Sigma) + c.conj() @ (A @ c)
        res["54f"] = max(res["54f"], _rel_residual(lhs, rhs))
        # Sigma = 0 corner: x deterministic, both sides are c^H A c
        res["54f"] = max(res["54f"], _rel_residual(c.conj() @ (A @ c), rhs - np.trace(A @ Sigma)))

    res["max"] = max(res[k] for k in ("54a", "54b", "54c", "54d", "54e", "54f"))
    return res

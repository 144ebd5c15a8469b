"""
Dense matrix helpers and a thin singular value decomposition.

The SVD preconditions with an eigendecomposition of the smaller Gram matrix
and then runs one-sided Jacobi sweeps until every column pair is orthogonal
to the configured tolerance. Column pairs are visited in round-robin order so
each round rotates disjoint pairs at once; the visiting order is fixed, which
keeps the result bit-identical for identical input.
"""
from dataclasses import dataclass

import numpy as np
import structlog

from .config import SVD_TOLERANCE, SVD_MAX_SWEEPS
from .errors import ShapeError, ConvergenceError

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class SvdResult:
    """Thin factorization m = u @ diag(sigma) @ v.T with sigma non-increasing."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self):
        return int(np.count_nonzero(self.sigma))

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def as_matrix(m, name="matrix"):
    """
    Validates and converts input to a 2-D float64 array.

    Args:
        m (array-like): Candidate matrix
        name (str): Name used in error messages

    Returns:
        np.ndarray: 2-D float64 array
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def matmul(a, b):
    """
    Multiplies two matrices.

    Args:
        a (array-like): Left matrix (n x k)
        b (array-like): Right matrix (k x m)

    Returns:
        np.ndarray: Product (n x m)
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def frobenius_norm(m):
    return float(np.sqrt(np.sum(np.square(as_matrix(m)))))


def _round_robin_pairs(n):
    """Disjoint column pairs for each round of one Jacobi sweep (circle method)."""
    players = list(range(n))
    if n % 2:
        players.append(-1)
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        left = players[: size // 2]
        right = players[size // 2:][::-1]
        pairs = [(min(p, q), max(p, q)) for p, q in zip(left, right) if p >= 0 and q >= 0]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_sweeps(work, v, tol, max_sweeps, tiny):
    """Orthogonalizes the columns of work in place, applying the same rotations to v; sweeps is None on hitting the cap."""
    n = work.shape[1]
    rounds = _round_robin_pairs(n)
    off = 0.0
    for sweep in range(1, max_sweeps + 1):
        rotations = 0
        off = 0.0
        for p, q in rounds:
            wp = work[:, p]
            wq = work[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            live = (alpha > tiny) & (beta > tiny)
            scale = np.sqrt(np.where(live, alpha * beta, 1.0))
            ratio = np.where(live, np.abs(gamma) / scale, 0.0)
            off = max(off, float(ratio.max(initial=0.0)))
            rotate = ratio > tol
            if not np.any(rotate):
                continue
            rotations += int(np.count_nonzero(rotate))
            safe_gamma = np.where(rotate, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * safe_gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(rotate, c, 1.0)
            s = np.where(rotate, s, 0.0)
            work[:, p] = c * wp - s * wq
            work[:, q] = s * wp + c * wq
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if rotations == 0:
            return sweep, off
    return None, off


def _complete_basis(u, missing):
    """Replaces the columns listed in missing with unit vectors orthogonal to the rest."""
    m = u.shape[0]
    keep = [k for k in range(u.shape[1]) if k not in set(missing)]
    basis = [u[:, k] for k in keep]
    candidate = 0
    for k in missing:
        while True:
            e = np.zeros(m)
            e[candidate] = 1.0
            candidate += 1
            for _ in range(2):
                for b in basis:
                    e -= (b @ e) * b
            norm = np.linalg.norm(e)
            if norm > 0.5:
                break
        u[:, k] = e / norm
        basis.append(u[:, k])
    return u


def svd(m, tol=SVD_TOLERANCE, max_sweeps=SVD_MAX_SWEEPS):
    """
    Computes the thin SVD of a real matrix.

    Args:
        m (array-like): Input matrix (N x P), finite entries
        tol (float): Relative column-orthogonality threshold for convergence
        max_sweeps (int): Iteration cap in Jacobi sweeps

    Returns:
        SvdResult: u (N x r), sigma (r,), v (P x r) with r = min(N, P)
    """
    m = as_matrix(m)
    transposed = m.shape[0] < m.shape[1]
    a = m.T if transposed else m
    rows, cols = a.shape

    gram = a.T @ a
    _, eigvecs = np.linalg.eigh(gram)
    v = np.ascontiguousarray(eigvecs[:, ::-1])
    work = a @ v

    scale = float(np.max(np.abs(a)))
    tiny_norm = scale * np.finfo(np.float64).eps * max(rows, cols)
    sweeps, off = _jacobi_sweeps(work, v, tol, max_sweeps, tiny_norm ** 2)
    if sweeps is None:
        norms = np.linalg.norm(work, axis=0)
        live = norms > tiny_norm
        u = work[:, live] / norms[live]
        defect = float(np.max(np.abs(u.T @ u - np.eye(u.shape[1])), initial=0.0))
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps", defect,
                               measure="orthogonality residual")

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]

    cutoff = max(sigma[0] * np.finfo(np.float64).eps * max(rows, cols), tiny_norm) if sigma[0] > 0 else 0.0
    zero = sigma <= cutoff
    sigma = np.where(zero, 0.0, sigma)
    u = np.zeros_like(work)
    nonzero = ~zero
    u[:, nonzero] = work[:, nonzero] / sigma[nonzero]
    if np.any(zero):
        u = _complete_basis(u, list(np.flatnonzero(zero)))

    if transposed:
        u, v = v, u

    # right singular vectors: largest-magnitude entry positive, earliest index on ties
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[pivots, np.arange(v.shape[1])] < 0, -1.0, 1.0)
    u = u * signs
    v = v * signs

    logger.debug("svd_converged", shape=m.shape, sweeps=sweeps, off=off, rank=int(np.count_nonzero(sigma)))
    return SvdResult(u=u, sigma=sigma, v=v)

"""Finite-box Hamiltonians: eigenpairs in windows, resolvent transforms.

The box operator is real symmetric; with the Dirichlet convention it is the
compression of the infinite-lattice operator, so its spectrum stays inside
``[min(0, min V), 4d + max(0, max V)]``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError
from .lattice import LatticeBox, LatticeField, Potential, apply_h

#: imaginary offset silently added when a caller passes a real spectral
#: parameter to :func:`stieltjes`
REAL_SHIFT = 1e-8


class BoxOperator:
    """``H = H0 + V`` on a finite box, with matrix-free apply and sparse export."""

    def __init__(self, box: LatticeBox, potential: Potential | None = None):
        self.box = box
        self.potential = potential if potential is not None else Potential({})
        self._v_grid = self.potential.on_grid(box)
        self._sparse = None

    @property
    def n_sites(self) -> int:
        return self.box.n_sites

    @property
    def is_tridiagonal(self) -> bool:
        return self.box.d == 1 and self.box.boundary == "dirichlet"

    def spectrum_interval(self):
        """Interval guaranteed to contain every eigenvalue."""
        vmin = min(0.0, float(self._v_grid.min()))
        vmax = max(0.0, float(self._v_grid.max()))
        return vmin, 4.0 * self.box.d + vmax

    def apply(self, field: LatticeField) -> LatticeField:
        out = apply_h(field, self.potential)
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Matrix-free apply on flat vectors (lexicographic site order)."""
        f = LatticeField(self.box, np.asarray(x).reshape(self.box.shape))
        return self.apply(f).flat

    def tridiagonal_parts(self):
        if not self.is_tridiagonal:
            raise ConfigurationError("tridiagonal form only for d=1 Dirichlet boxes")
        diag = 2.0 + self._v_grid
        off = np.full(self.box.side - 1, -1.0)
        return diag, off

    def to_sparse(self) -> sp.csr_matrix:
        if self._sparse is None:
            side = self.box.side
            m = sp.diags(
                [np.full(side - 1, -1.0), np.full(side, 2.0), np.full(side - 1, -1.0)],
                [-1, 0, 1],
                format="lil",
            )
            if self.box.boundary == "periodic" and side > 1:
                m[0, side - 1] -= 1.0
                m[side - 1, 0] -= 1.0
            m = m.tocsr()
            eye = sp.identity(side, format="csr")
            total = None
            for ax in range(self.box.d):
                term = None
                for pos in range(self.box.d):
                    piece = m if pos == ax else eye
                    term = piece if term is None else sp.kron(term, piece, format="csr")
                total = term if total is None else total + term
            total = total + sp.diags(self._v_grid.ravel())
            self._sparse = total.tocsr()
        return self._sparse


def eigs_in_window(op: BoxOperator, window, k_max: int, *,
                   residual_tol: float = 1e-8, dense_cutoff: int = 5000):
    """Eigenpairs of the box matrix with eigenvalue in ``[window[0], window[1])``.

    Returns ``(vals, vecs)`` sorted ascending, ``vecs[:, i]`` unit-norm in
    lexicographic site order, at most ``k_max`` pairs (lowest first).  Every
    returned pair satisfies ``|H v - lam v| <= residual_tol``.

    d=1 Dirichlet boxes use the tridiagonal LAPACK path; other boxes up to
    ``dense_cutoff`` sites are densely diagonalized (the oracle); larger
    boxes fall back to shift-invert Lanczos around the window center.
    """
    lo, hi = float(window[0]), float(window[1])
    if not (lo < hi and np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigurationError(f"window must be a finite interval, got {window}")
    if k_max < 1:
        raise ConfigurationError("k_max must be >= 1")

    pad = 1e-10 * max(1.0, abs(lo), abs(hi))
    if op.is_tridiagonal:
        diag, off = op.tridiagonal_parts()
        vals, vecs = sla.eigh_tridiagonal(diag, off, select="v",
                                          select_range=(lo - pad, hi + pad))
    elif op.n_sites <= dense_cutoff:
        dense = op.to_sparse().toarray()
        vals, vecs = sla.eigh(dense)
    else:
        vals, vecs = _shift_invert_window(op, lo, hi, k_max)

    keep = (vals >= lo) & (vals < hi)
    vals, vecs = vals[keep], vecs[:, keep]
    if len(vals) > k_max:
        vals, vecs = vals[:k_max], vecs[:, :k_max]
    vecs = vecs / np.maximum(np.linalg.norm(vecs, axis=0), 1e-300)

    if len(vals):
        a = op.to_sparse() if not op.is_tridiagonal else None
        if a is None:
            diag, off = op.tridiagonal_parts()
            hv = diag[:, None] * vecs
            hv[:-1] += off[:, None] * vecs[1:]
            hv[1:] += off[:, None] * vecs[:-1]
        else:
            hv = a @ vecs
        res = np.linalg.norm(hv - vecs * vals[None, :], axis=0)
        worst = float(res.max())
        if worst > residual_tol:
            raise SolverError(f"eigenpair residual {worst:.3e} exceeds {residual_tol:.1e}")
    return vals, vecs


def _shift_invert_window(op: BoxOperator, lo: float, hi: float, k_max: int):
    """Shift-invert Lanczos around the window center, widening k as needed."""
    a = op.to_sparse().tocsc()
    sigma = 0.5 * (lo + hi)
    k = min(max(8, k_max), op.n_sites - 2)
    while True:
        try:
            vals, vecs = spla.eigsh(a, k=k, sigma=sigma, which="LM")
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"shift-invert Lanczos did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        inside = (vals >= lo) & (vals < hi)
        # if every returned pair is inside, the window may extend past what
        # we captured: widen until some slack appears or k_max is reached
        if inside.all() and k < min(4 * k_max, op.n_sites - 2):
            k = min(2 * k, op.n_sites - 2)
            continue
        return vals, vecs


def stieltjes(op: BoxOperator, phi: LatticeField, z, *, rtol: float = 1e-10) -> complex:
    """Resolvent transform ``<(H - z)^{-1} phi, phi>`` on the box.

    Real ``z`` is shifted to ``z + i * REAL_SHIFT``.  The linear system is
    LU-factored and polished by iterative refinement until the relative
    residual is below ``rtol``.
    """
    z = complex(z)
    if z.imag == 0.0:
        z = complex(z.real, REAL_SHIFT)
    b = phi.flat.astype(complex)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        raise ConfigurationError("probe vector must be nonzero")

    if op.is_tridiagonal:
        diag, off = op.tridiagonal_parts()
        n = len(diag)
        ab = np.zeros((3, n), dtype=complex)
        ab[0, 1:] = off
        ab[1] = diag - z
        ab[2, :-1] = off
        solve = lambda rhs: sla.solve_banded((1, 1), ab, rhs)
        matvec = lambda u: (diag - z) * u + np.append(off * u[1:], 0.0) + np.append(0.0, off * u[:-1])
    else:
        a = (op.to_sparse().astype(complex) - z * sp.identity(op.n_sites, dtype=complex)).tocsc()
        lu = spla.splu(a)
        solve = lu.solve
        matvec = lambda u: a @ u

    u = solve(b)
    for _ in range(5):
        r = b - matvec(u)
        if np.linalg.norm(r) <= rtol * b_norm:
            break
        u = u + solve(r)
    else:
        raise SolverError(
            f"linear solve stalled at relative residual "
            f"{np.linalg.norm(b - matvec(u)) / b_norm:.3e}"
        )
    return complex(np.vdot(b, u))


def participation_ratio(v) -> float:
    """Effective support size ``(sum |v|^2)^2 / sum |v|^4``; in [1, n_sites]."""
    vals = v.values if isinstance(v, LatticeField) else np.asarray(v)
    p2 = float(np.sum(np.abs(vals) ** 2))
    if p2 == 0.0:
        raise ConfigurationError("participation ratio of the zero vector is undefined")
    p4 = float(np.sum(np.abs(vals) ** 4))
    return p2 * p2 / p4

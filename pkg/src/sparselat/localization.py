"""Resolvent machinery on sparse supports and localization experiments.

Everything here reduces questions about ``H = H0 + V`` with sparse ``V`` to
dense linear algebra on the (small) support of ``V``:

* the diagonal factor ``1 / (1 + G(lam; 0) V(n))`` renormalizes each support
  site; it blows up exactly at single-impurity resonances;
* the support kernel couples distinct support sites through the free
  resolvent, with entries decaying like the off-spectrum Green function;
* solving ``(I + T) psi = rhs`` on the support and extending off-support by
  one application of the free resolvent reproduces ``(H - lam)^{-1} chi_j``
  on the whole lattice, which is the square-summability criterion (after
  rank-one perturbation, pure point spectrum for a.e. coupling holds iff
  that vector is square-summable for a.e. lam - the Simon-Wolff test);
* singular ``(I + T)`` flags lam as an eigenvalue candidate of ``H``.

Finite boxes only enter as reporting volumes and as the (independent)
eigensolver cross-check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    AccuracyError,
    ConfigurationError,
    GeometryError,
    NoBoundStateError,
    ResonanceError,
)
from .green import GreenKernel, green_diag, green_eval, green_eval_many, spectral_distance
from .hamlab import BoxOperator, eigs_in_window, participation_ratio, stieltjes
from .lattice import (
    LatticeBox,
    LatticeField,
    Potential,
    SparseRule,
    sample_potential,
    sparse_support,
)
from . import green as _green


def site_factor(lam: float, site, potential: Potential, *,
                kernel: GreenKernel | None = None, eps: float = 0.1,
                denom_floor: float = 1e-12) -> float:
    """Diagonal factor ``1 / (1 + G(lam; 0) V(n))`` at a support site.

    By translation invariance the diagonal resolvent entry is G(lam; 0) for
    every site.  A denominator below ``denom_floor`` means lam is (within
    numerical resolution) the impurity level for this amplitude.
    """
    site = tuple(int(c) for c in np.atleast_1d(site))
    d = len(site)
    if spectral_distance(lam, d) < eps:
        raise ConfigurationError(f"lambda={lam} inside the guarded band around [0, {4*d}]")
    kernel = kernel or GreenKernel(d)
    g0 = kernel.eval(lam, (0,) * d).real
    denom = 1.0 + g0 * potential.value(site)
    if abs(denom) < denom_floor:
        raise ResonanceError(
            f"1 + G(lam;0) V(n) = {denom:.3e} at site {site}: lambda={lam} is an "
            "impurity level for this amplitude", site=site, lam=lam,
        )
    return 1.0 / denom


@dataclass
class SupportKernel:
    """Dense coupling kernel over the potential support at one energy.

    ``matrix[i, j] = factors[i] * G(lam; n_i - n_j) * values[j]`` off the
    diagonal, zero on it.  ``identity_plus()`` is the matrix whose kernel
    detects eigenvalues of ``H``.
    """

    lam: float
    sites: list
    values: np.ndarray
    factors: np.ndarray
    matrix: np.ndarray

    def identity_plus(self) -> np.ndarray:
        return np.eye(len(self.sites)) + self.matrix

    def sigma_min(self) -> float:
        if not self.sites:
            return np.inf
        return float(np.linalg.svd(self.identity_plus(), compute_uv=False)[-1])


def build_support_kernel(lam: float, potential: Potential, *, radius=None,
                         kernel: GreenKernel | None = None, eps: float = 0.1) -> SupportKernel:
    """Assemble the support kernel for ``V`` (optionally restricted to a box)."""
    pot = potential if radius is None else potential.restricted(radius)
    sites = pot.support()
    if not sites:
        return SupportKernel(lam, [], np.zeros(0), np.zeros(0), np.zeros((0, 0)))
    d = len(sites[0])
    kernel = kernel or GreenKernel(d)
    values = np.array([pot.entries[s] for s in sites])
    factors = np.array([
        site_factor(lam, s, pot, kernel=kernel, eps=eps) for s in sites
    ])
    pts = np.asarray(sites, dtype=int)
    offsets = pts[:, None, :] - pts[None, :, :]
    g = kernel.eval_many(lam, offsets.reshape(-1, d)).real.reshape(len(sites), len(sites))
    t = factors[:, None] * g * values[None, :]
    np.fill_diagonal(t, 0.0)
    return SupportKernel(lam=lam, sites=sites, values=values, factors=factors, matrix=t)


def schur_bound(matrix: np.ndarray) -> float:
    """Schur-test bound on the spectral norm from row/column absolute sums."""
    if matrix.size == 0:
        return 0.0
    m = np.abs(matrix)
    return float(np.sqrt(m.sum(axis=1).max() * m.sum(axis=0).max()))


@dataclass
class SWThresholds:
    """Configured thresholds for the square-summability verdict."""

    near_eigenvalue_sigma: float = 1e-6
    tail_rel_change: float = 1e-3
    eps: float = 0.1


@dataclass
class SWRadiusRow:
    radius: int
    support_size: int
    psi_norm: float
    shell_tail: float
    sigma_min: float


@dataclass
class SimonWolffReport:
    lam: float
    j: tuple
    rows: list
    verdict: str
    psi_support: np.ndarray
    support_sites: list


def _reconstruct_psi(lam, j, box_sites, sk: SupportKernel, psi_s, kernel: GreenKernel,
                     new_mask=None):
    """Extend the support solution to a reporting box via the resolvent identity.

    Returns the field values on ``box_sites`` and the norm of the
    contribution from support sites flagged by ``new_mask``.
    """
    d = box_sites.shape[1]
    off0 = box_sites - np.asarray(j, dtype=int)[None, :]
    psi0 = kernel.eval_many(lam, off0).real
    if not sk.sites:
        return psi0, 0.0
    pts = np.asarray(sk.sites, dtype=int)
    offs = (box_sites[:, None, :] - pts[None, :, :]).reshape(-1, d)
    uniq, inv = np.unique(offs, axis=0, return_inverse=True)
    gvals = green_eval_many(lam, uniq, tol=kernel.tol, guard=kernel.guard,
                            max_order=kernel.max_order).real
    gmat = gvals[inv].reshape(len(box_sites), len(sk.sites))
    weights = sk.values * psi_s
    psi = psi0 - gmat @ weights
    tail = 0.0
    if new_mask is not None and new_mask.any():
        tail = float(np.linalg.norm(gmat[:, new_mask] @ weights[new_mask]))
    return psi, tail


def simon_wolff_resolve(lam: float, j, potential: Potential, radii, *,
                        kernel: GreenKernel | None = None,
                        thresholds: SWThresholds | None = None) -> SimonWolffReport:
    """Square-summability probe for ``(H - lam)^{-1} chi_j`` on growing boxes.

    For each radius the support is restricted to the box, the dense
    ``(I + T)`` system is solved, the solution is extended to the box, and
    the report row records the box norm, the newest support shell's
    contribution, and the smallest singular value of ``(I + T)``.
    """
    j = tuple(int(c) for c in np.atleast_1d(j))
    d = len(j)
    thresholds = thresholds or SWThresholds()
    if spectral_distance(lam, d) < thresholds.eps:
        raise ConfigurationError(f"lambda={lam} inside the guarded band around [0, {4*d}]")
    kernel = kernel or GreenKernel(d)
    radii = sorted(int(r) for r in radii)
    rows = []
    prev_sites: set = set()
    psi_s = np.zeros(0)
    sk = None
    min_sigma = np.inf
    for r in radii:
        sk = build_support_kernel(lam, potential, radius=r, kernel=kernel,
                                  eps=thresholds.eps)
        rhs = np.array([
            sk.factors[i] * kernel.eval(lam, tuple(np.subtract(s, j))).real
            for i, s in enumerate(sk.sites)
        ])
        psi_s = np.linalg.solve(sk.identity_plus(), rhs) if sk.sites else rhs
        sigma = sk.sigma_min()
        min_sigma = min(min_sigma, sigma)
        box = LatticeBox(d, r, "dirichlet")
        box_sites = box.site_array()
        new_mask = np.array([s not in prev_sites for s in sk.sites], dtype=bool)
        psi_box, tail = _reconstruct_psi(lam, j, box_sites, sk, psi_s, kernel,
                                         new_mask=new_mask if prev_sites else None)
        rows.append(SWRadiusRow(
            radius=r,
            support_size=len(sk.sites),
            psi_norm=float(np.linalg.norm(psi_box)),
            shell_tail=tail,
            sigma_min=sigma,
        ))
        prev_sites = set(sk.sites)

    if min_sigma < thresholds.near_eigenvalue_sigma:
        verdict = "near-eigenvalue"
    elif len(rows) >= 2:
        a, b = rows[-2].psi_norm, rows[-1].psi_norm
        rel = abs(b - a) / max(a, 1e-300)
        verdict = "summable" if rel < thresholds.tail_rel_change else "inconclusive"
    else:
        verdict = "inconclusive"
    return SimonWolffReport(lam=lam, j=j, rows=rows, verdict=verdict,
                            psi_support=psi_s,
                            support_sites=list(sk.sites) if sk else [])


def kernel_singularities(potential: Potential, window, *, radius=None,
                         grid_points: int = 600, eps: float = 0.1,
                         kernel: GreenKernel | None = None,
                         sigma_confirm: float = 1e-6) -> list:
    """Energies where ``(I + T)`` is singular, i.e. eigenvalue candidates of H.

    Roots are located as sign changes of ``det(I + G V)`` on a grid (the
    same zero set as the singularities of ``I + T``, but free of the
    diagonal-factor poles) and each refined root is confirmed by the
    smallest singular value of ``(I + T)``.
    """
    pot = potential if radius is None else potential.restricted(radius)
    sites = pot.support()
    if not sites:
        return []
    d = len(sites[0])
    kernel = kernel or GreenKernel(d)
    lo, hi = float(window[0]), float(window[1])
    if spectral_distance(lo, d) < eps or spectral_distance(hi, d) < eps:
        raise ConfigurationError("window must stay outside the guarded spectral band")
    pts = np.asarray(sites, dtype=int)
    offsets = (pts[:, None, :] - pts[None, :, :]).reshape(-1, d)
    values = np.array([pot.entries[s] for s in sites])

    def det_igv(lam):
        g = kernel.eval_many(lam, offsets).real.reshape(len(sites), len(sites))
        return float(np.linalg.det(np.eye(len(sites)) + g * values[None, :]))

    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([det_igv(x) for x in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(float(brentq(det_igv, grid[i], grid[i + 1], xtol=1e-13)))
    confirmed = []
    for root in roots:
        try:
            sk = build_support_kernel(root, pot, kernel=kernel, eps=eps)
        except ResonanceError:
            # the refined root coincides with a single-site resonance, which
            # is itself an eigenvalue condition
            confirmed.append(root)
            continue
        if sk.sigma_min() < sigma_confirm:
            confirmed.append(root)
    return confirmed


def rejection_sample_lambdas(window, potential: Potential, n_samples: int, seed, *,
                             kernel: GreenKernel | None = None, eps: float = 0.1,
                             reject_within: float = 1e-4, max_draws: int = 10_000) -> np.ndarray:
    """Uniform energies in the window, rejecting a small ball around each
    detected ``(I + T)`` singularity (the criterion is an almost-every
    statement, so excising a measure-zero neighborhood is faithful)."""
    lo, hi = float(window[0]), float(window[1])
    sing = kernel_singularities(potential, window, eps=eps, kernel=kernel)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(max_draws):
        if len(out) == n_samples:
            break
        lam = float(rng.uniform(lo, hi))
        if all(abs(lam - s) > reject_within for s in sing):
            out.append(lam)
    if len(out) < n_samples:
        raise ConfigurationError("rejection sampling exhausted; window too singular")
    return np.array(out)


# ---------------------------------------------------------------------------
# resonance-set measure scan
# ---------------------------------------------------------------------------


@dataclass
class ResonanceScanRow:
    site: tuple
    n_abs: float
    threshold: float
    measure_estimate: float
    bound: float
    spacing: float
    resolved: bool


def _g0_on_grid(lams: np.ndarray, d: int, tol: float = 1e-10,
                max_order=None) -> np.ndarray:
    """Diagonal Green values over a whole energy grid, shared quadrature order."""
    cap = max_order or _green.MAX_ORDER[d]
    order = _green.MIN_ORDER

    def values(n):
        xi = 2.0 * np.pi * np.arange(n) / n
        a1 = 4.0 * np.sin(0.5 * xi) ** 2
        a = a1
        for _ in range(1, d):
            a = np.add.outer(a, a1).ravel()
        return np.mean(1.0 / (a[None, :] - lams[:, None]), axis=1)

    prev = values(order)
    while True:
        if 2 * order > cap:
            raise AccuracyError("grid Green evaluation did not converge")
        order *= 2
        cur = values(order)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur.real
        prev = cur


def one_plus_gv_scan(potential: Potential, eps: float, lambda_grid, n_list, *,
                     tol: float = 1e-10) -> dict:
    """Grid estimate of the measure of ``{lam : |1 + G(lam;0) V(n)| < |n|^{-d-eps}}``.

    The estimate (count times spacing) is compared against the a priori
    bound ``|V|_inf^2 |n|^{-d-eps} / eps`` coming from the lower bound on
    the derivative of the monotone map ``lam -> G(lam; 0) V(n)``.  A row is
    flagged unresolved when the grid spacing exceeds the target window
    width, in which case the count is only an upper-bound indicator.
    """
    lams = np.asarray(lambda_grid, dtype=float)
    if len(lams) < 2:
        raise ConfigurationError("lambda grid needs at least two points")
    spacings = np.diff(lams)
    spacing = float(spacings[0])
    if not np.allclose(spacings, spacing, rtol=1e-9):
        raise ConfigurationError("lambda grid must be uniformly spaced")
    sites = [tuple(int(c) for c in np.atleast_1d(n)) for n in n_list]
    if not sites:
        return {}
    d = len(sites[0])
    for lam in (lams[0], lams[-1]):
        if spectral_distance(lam, d) < eps:
            raise ConfigurationError(
                f"grid endpoint {lam} is closer than eps={eps} to [0, {4*d}]"
            )
    g0 = _g0_on_grid(lams, d, tol=tol)
    vsup = potential.sup_norm()
    rows = {}
    for site in sites:
        n_abs = math.sqrt(sum(c * c for c in site))
        if n_abs == 0.0:
            raise ConfigurationError("scan sites must be away from the origin")
        w = n_abs ** (-d - eps)
        v = potential.value(site)
        count = int(np.count_nonzero(np.abs(1.0 + g0 * v) < w))
        rows[site] = ResonanceScanRow(
            site=site,
            n_abs=n_abs,
            threshold=w,
            measure_estimate=count * spacing,
            bound=vsup**2 * n_abs ** (-d - eps) / eps,
            spacing=spacing,
            resolved=spacing <= w,
        )
    return rows


# ---------------------------------------------------------------------------
# impurity levels
# ---------------------------------------------------------------------------


def impurity_level(beta: float, d: int, *, ftol: float = 1e-10) -> float:
    """Negative root of ``1 + beta G(lam; 0) = 0`` (single-site bound state).

    In d <= 2 the diagonal Green value diverges at the band edge so every
    ``beta < 0`` binds, but roots closer to zero than ~1e-7 exceed the
    quadrature budget and are reported as out of the solver's domain.  In
    d >= 3 the Green value stays finite, so small couplings genuinely have
    no bound state; that is a domain fact, not a failure.
    """
    if beta >= 0.0:
        raise ConfigurationError(f"impurity coupling must be negative, got {beta}")
    gtol = 1e-11 / max(1.0, abs(beta))

    def f(lam):
        # the quadrature's floating-point floor scales like eps / dist, so
        # deep near the band edge the tolerance must be loosened with it
        dist = spectral_distance(lam, d)
        tol_lam = max(gtol, 1e-14 / dist)
        if d == 1:
            g = green_eval(lam, (0,), tol=tol_lam, guard=1e-10).real
        else:
            g = green_diag(lam, d, tol=tol_lam, guard=1e-10).real
        return 1.0 + beta * g

    lo = -4.0 * d - abs(beta) - 0.1
    f_lo = f(lo)
    if f_lo <= 0.0:
        raise AccuracyError(f"bracket endpoint {lo} unexpectedly gives f={f_lo}")
    hi = None
    for cand in (-1e-2, -1e-3, -1e-4, -1e-5, -1e-6, -1e-7):
        try:
            if f(cand) < 0.0:
                hi = cand
                break
        except AccuracyError:
            break
    if hi is None:
        raise NoBoundStateError(
            f"1 + beta G(lam;0) has no sign change on [{lo}, -1e-7] for beta={beta}, d={d}; "
            "either the coupling is too weak to bind (d >= 3) or the root lies closer "
            "to the band edge than the quadrature can resolve"
        )
    root = brentq(f, lo, hi, xtol=1e-16, rtol=8.9e-16)
    fr = f(root)
    if abs(fr) > ftol:
        raise AccuracyError(f"impurity equation residual {fr:.3e} exceeds {ftol:.1e}")
    return float(root)


# ---------------------------------------------------------------------------
# far-bump measure comparison
# ---------------------------------------------------------------------------


@dataclass
class BumpCompareReport:
    sites: list
    sup_differences: np.ndarray
    z_list: list
    final_sup: float


def bump_measure_compare(potential: Potential, far_sites, beta: float, z_list, *,
                         local_radius: int, global_radius=None) -> BumpCompareReport:
    """Distance between local spectral data at far bumps and the single-bump limit.

    For each listed support site the potential is recentered on a local
    Dirichlet box and probed at its center; the reference is the single
    impurity ``beta`` at the center of a matched box.  When the listed
    amplitudes approach ``beta`` and the bumps separate, the sup over the
    probe points of the transform difference must shrink - the numerical
    shadow of the weak convergence of the local spectral measures.
    """
    far_sites = [tuple(int(c) for c in np.atleast_1d(s)) for s in far_sites]
    if not far_sites:
        raise ConfigurationError("need at least one far site")
    d = len(far_sites[0])
    for s in far_sites:
        if potential.value(s) == 0.0:
            raise ConfigurationError(f"far site {s} is not in the potential support")
        if global_radius is not None and max(abs(c) for c in s) + local_radius > global_radius:
            raise GeometryError(
                f"local box of radius {local_radius} around {s} does not fit inside "
                f"the global box of radius {global_radius}"
            )
    zs = [complex(z) for z in z_list]
    if any(z.imag <= 0 for z in zs):
        raise ConfigurationError("probe points must have positive imaginary part")
    box = LatticeBox(d, local_radius, "dirichlet")
    probe = LatticeField.delta(box)
    ref_op = BoxOperator(box, Potential({(0,) * d: beta}))
    ref = {z: stieltjes(ref_op, probe, z) for z in zs}
    sups = []
    for c in far_sites:
        local = Potential({
            tuple(np.subtract(s, c)): v
            for s, v in potential.entries.items()
            if max(abs(int(x)) for x in np.subtract(s, c)) <= local_radius
        })
        op = BoxOperator(box, local)
        sups.append(max(abs(stieltjes(op, probe, z) - ref[z]) for z in zs))
    sups = np.array(sups)
    return BumpCompareReport(sites=far_sites, sup_differences=sups, z_list=zs,
                             final_sup=float(sups[-1]))


# ---------------------------------------------------------------------------
# disorder spectrum-fill scan
# ---------------------------------------------------------------------------


@dataclass
class SpectrumFillReport:
    lambda0: float
    amplitude_bound: float
    radius: int
    realizations: int
    support_size: int
    eigenvalues: np.ndarray
    largest_gap: float
    participation_ratios: np.ndarray
    median_pr: float
    min_eigenvalue: float
    per_realization_counts: list
    #: list of (eigenvalues, participation ratios) pairs, one per realization,
    #: kept aligned for tabular output
    per_realization: list = field(default_factory=list)


def _lowest_eigenvalue(op: BoxOperator) -> float:
    import scipy.linalg as sla

    if op.is_tridiagonal:
        diag, off = op.tridiagonal_parts()
        vals = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0),
                                    eigvals_only=True)
        return float(vals[0])
    vals, _ = eigs_in_window(op, op.spectrum_interval(), 1)
    return float(vals[0])


def spectrum_fill_scan(lambda0: float, rule: SparseRule, radius: int,
                       realizations: int, seed: int, *, amplitude=None,
                       threads: int = 1) -> SpectrumFillReport:
    """Disorder scan of the point spectrum generated in ``[lambda0, 0)``.

    Each realization draws uniform amplitudes in ``[-a, 0]`` on the rule's
    support (``a`` the critical coupling for ``lambda0`` unless overridden),
    diagonalizes the Dirichlet box, and pools every eigenvalue in the
    window.  Reported statistics: the largest gap between consecutive
    pooled eigenvalues (should shrink as the box and the ensemble grow),
    participation ratios of the window eigenvectors (localized states stay
    O(1)), and the empirical minimum eigenvalue against ``lambda0``.
    """
    from .green import coupling_bound

    if realizations < 1:
        raise ConfigurationError("need at least one realization")
    a = float(amplitude) if amplitude is not None else coupling_bound(lambda0, rule.d)
    sites, _ = sparse_support(rule, radius)
    box = LatticeBox(rule.d, radius, "dirichlet")
    seeds = np.random.SeedSequence(seed).spawn(realizations)

    def one(i):
        pot = sample_potential(sites, a, seeds[i])
        op = BoxOperator(box, pot)
        vals, vecs = eigs_in_window(op, (lambda0, 0.0), k_max=len(sites) + 1)
        prs = np.array([participation_ratio(vecs[:, k]) for k in range(vecs.shape[1])])
        return vals, prs, _lowest_eigenvalue(op)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(realizations)))
    else:
        results = [one(i) for i in range(realizations)]

    all_vals = np.sort(np.concatenate([r[0] for r in results])) if results else np.zeros(0)
    all_prs = np.concatenate([r[1] for r in results]) if results else np.zeros(0)
    min_eig = min((r[2] for r in results), default=np.nan)
    largest_gap = float(np.diff(all_vals).max()) if len(all_vals) > 1 else 0.0
    return SpectrumFillReport(
        lambda0=lambda0,
        amplitude_bound=a,
        radius=radius,
        realizations=realizations,
        support_size=len(sites),
        eigenvalues=all_vals,
        largest_gap=largest_gap,
        participation_ratios=all_prs,
        median_pr=float(np.median(all_prs)) if len(all_prs) else np.nan,
        min_eigenvalue=float(min_eig),
        per_realization_counts=[len(r[0]) for r in results],
        per_realization=[(r[0], r[1]) for r in results],
    )

"""Time evolution, wave-operator convergence probes, level-curve integrals.

The free propagator is exact on periodic boxes (DFT multiplier on the
symbol); the full propagator expands ``exp(-itH)`` in Chebyshev polynomials
of the rescaled operator with Bessel coefficients, truncated once the
coefficients fall below tolerance.  The wave-operator probe composes the two
and reports Cauchy increments of ``exp(-itH) exp(itH0) f`` on a time grid the
free wavefront (group speed 2 per axis) cannot push into the boundary.

The level-curve machinery is d=2 only: a regular energy level set of the
symbol is parametrized by the angle around its center, with one Brent root
solve along each ray and analytic gradient/curvature checks; the transverse
profile integral is the scalar whose ``|j|**(-1/2)`` decay drives the
short-range scattering bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv

from .errors import (
    AccuracyError,
    ConfigurationError,
    RegularityError,
    WavefrontError,
)
from .hamlab import BoxOperator
from .lattice import LatticeBox, LatticeField, Potential

MAX_CHEB_TERMS = 200_000


def _symbol_grid(box: LatticeBox) -> np.ndarray:
    xi = 2.0 * np.pi * np.arange(box.side) / box.side
    a1 = 4.0 * np.sin(0.5 * xi) ** 2
    a = np.zeros(box.shape)
    for ax in range(box.d):
        sh = [1] * box.d
        sh[ax] = box.side
        a = a + a1.reshape(sh)
    return a


def free_propagate(f: LatticeField, t: float) -> LatticeField:
    """``exp(i t H0) f`` on a periodic box, exact up to roundoff."""
    if f.box.boundary != "periodic":
        raise ConfigurationError("free propagation needs a periodic box")
    mult = np.exp(1j * t * _symbol_grid(f.box))
    return LatticeField(f.box, np.fft.ifftn(np.fft.fftn(f.values) * mult))


def full_propagate(op: BoxOperator, f: LatticeField, t: float, tol: float = 1e-8,
                   max_terms: int = MAX_CHEB_TERMS) -> LatticeField:
    """``exp(-i t H) f`` by Chebyshev expansion on the enclosing interval.

    The series is cut when the Bessel coefficients drop below ``tol / 100``;
    the returned norm then matches ``|f|`` to within ``10 * tol``.
    """
    if f.box != op.box:
        raise ConfigurationError("field and operator live on different boxes")
    lo, hi = op.spectrum_interval()
    center = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    tw = abs(t) * half
    n_est = int(tw + 40 + 15 * tw ** (1.0 / 3.0))
    if n_est > max_terms:
        raise AccuracyError(
            f"t * spectral radius = {tw:.3g} needs ~{n_est} Chebyshev terms "
            f"(cap {max_terms})"
        )
    bes = jv(np.arange(n_est + 1), t * half)
    keep = n_est
    cut = tol * 1e-2
    while keep > 1 and abs(bes[keep]) < cut and abs(bes[keep - 1]) < cut:
        keep -= 1

    def scaled(x):
        return (op.matvec(x) - center * x) / half

    u = f.flat.astype(complex)
    t_prev = u
    t_cur = scaled(u)
    acc = bes[0] * t_prev + 2.0 * (-1j) * bes[1] * t_cur
    for k in range(2, keep + 1):
        t_next = 2.0 * scaled(t_cur) - t_prev
        acc = acc + 2.0 * ((-1j) ** k) * bes[k] * t_next
        t_prev, t_cur = t_cur, t_next
    acc = np.exp(-1j * center * t) * acc
    return LatticeField(f.box, acc.reshape(f.box.shape))


@dataclass
class ProbeResult:
    """Wave-operator probe output: one field per time, Cauchy increments between."""

    times: np.ndarray
    norms: np.ndarray
    increments: np.ndarray  # length len(times) - 1
    fields: list

    def final_over_first(self) -> float:
        return float(self.increments[-1] / self.increments[0])


def wave_operator_probe(potential: Potential, f: LatticeField, times, *,
                        tol: float = 1e-8, margin: float = 8.0) -> ProbeResult:
    """Evaluate ``W(t) f = exp(-itH) exp(itH0) f`` along a time grid.

    Existence of the strong limit shows up as decaying Cauchy increments
    ``|W(t_{k+1}) f - W(t_k) f|``; this is a diagnostic, not a proof, and
    any threshold on the decay is an experiment-level choice.

    The grid is refused if the free wavefront (speed 2 per axis) could get
    within ``margin`` of the box boundary, since the infinite-lattice limit
    is only meaningful while the box looks infinite to the field.
    """
    times = np.asarray([float(t) for t in times])
    if len(times) < 2 or times[0] <= 0.0:
        raise ConfigurationError("need at least two positive times")
    if np.any(np.diff(times) <= 0.0):
        raise ConfigurationError("time grid must be strictly increasing")
    if not 0.0 < tol <= 1e-4:
        raise ConfigurationError(f"propagation tolerance must be in (0, 1e-4], got {tol}")
    box = f.box
    mags = np.abs(f.values)
    support = mags > 1e-12 * mags.max()
    sites = np.argwhere(support) - box.radius
    r0 = int(np.abs(sites).max()) if len(sites) else 0
    reach = r0 + 2.0 * times[-1] + margin
    if reach > box.radius:
        raise WavefrontError(
            f"wavefront reach {reach:.1f} exceeds box radius {box.radius} "
            f"(support radius {r0}, t_max {times[-1]}, margin {margin})"
        )
    op = BoxOperator(box, potential)
    fields = []
    for t in times:
        g = free_propagate(f, t)
        fields.append(full_propagate(op, g, t, tol=tol))
    norms = np.array([w.norm() for w in fields])
    increments = np.array([
        float(np.linalg.norm(fields[i + 1].values - fields[i].values))
        for i in range(len(fields) - 1)
    ])
    return ProbeResult(times=times, norms=norms, increments=increments, fields=fields)


# ---------------------------------------------------------------------------
# level-curve integrals (d = 2)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QIntegralSpec:
    """Parameters of the transverse oscillatory integral on one level curve.

    The level set ``{a(xi) = tau1}`` is parametrized by the angle around its
    center; the compactly supported ``C^inf`` profile
    ``exp(-1/(1-s^2)) * (1 + tilt*s)`` with ``s = (theta-center)/halfwidth``
    plays the transverse basis-function role, and the Jacobian factor of the
    energy-angle chart weights the integrand.
    """

    tau1: float = 2.0
    bump_center: float = 0.0
    bump_halfwidth: float = 1.0
    bump_tilt: float = 0.0
    window_pad: float = 0.2
    j_list: tuple = field(default=((8, 0), (16, 0), (32, 0), (64, 0), (128, 0)))
    points_per_period: float = 20.0
    panel_order: int = 10
    min_points: int = 200
    grad_min: float = 0.05
    curv_min: float = 0.05
    refine_rtol: float = 1e-6

    def window(self):
        return (self.bump_center - self.bump_halfwidth - self.window_pad,
                self.bump_center + self.bump_halfwidth + self.window_pad)

    def profile(self, theta):
        s = (np.asarray(theta) - self.bump_center) / self.bump_halfwidth
        inside = np.abs(s) < 1.0
        out = np.zeros_like(s, dtype=float)
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        if self.bump_tilt:
            out = out * (1.0 + self.bump_tilt * s)
        return out


def _level_center(tau1: float):
    if not 0.0 < tau1 < 8.0:
        raise ConfigurationError(f"tau1 must lie inside (0, 8), got {tau1}")
    return (0.0, 0.0) if tau1 <= 4.0 else (np.pi, np.pi)


def _ray_radius(theta: float, tau1: float, center) -> float:
    cx, cy = center
    c, s = math.cos(theta), math.sin(theta)

    def f(rho):
        return (4.0 - 2.0 * math.cos(cx + rho * c) - 2.0 * math.cos(cy + rho * s)) - tau1

    hi = math.pi / max(abs(c), abs(s)) - 1e-12
    return brentq(f, 1e-12, hi, xtol=1e-14, rtol=8.9e-16)


def _curve_nodes(spec: QIntegralSpec, thetas: np.ndarray):
    """Curve points, Jacobian weights, and regularity data at given angles."""
    center = _level_center(spec.tau1)
    rho = np.array([_ray_radius(t, spec.tau1, center) for t in thetas])
    x = center[0] + rho * np.cos(thetas)
    y = center[1] + rho * np.sin(thetas)
    gx, gy = 2.0 * np.sin(x), 2.0 * np.sin(y)
    grad_norm = np.hypot(gx, gy)
    grad_ray = gx * np.cos(thetas) + gy * np.sin(thetas)
    # implicit-curve curvature of {a = const}: -div(grad a / |grad a|)
    curv = -(2.0 * np.cos(x) * gy**2 + 2.0 * np.cos(y) * gx**2) / grad_norm**3
    if grad_norm.min() < spec.grad_min:
        raise RegularityError(
            f"symbol gradient falls to {grad_norm.min():.3e} on the chart "
            f"(threshold {spec.grad_min})"
        )
    if np.abs(curv).min() < spec.curv_min:
        raise RegularityError(
            f"level-curve curvature falls to {np.abs(curv).min():.3e} on the chart "
            f"(threshold {spec.curv_min})"
        )
    omega = rho / grad_ray
    return x, y, omega


def _q_once(spec: QIntegralSpec, j, n_panels: int) -> complex:
    th_lo, th_hi = spec.window()
    gx, gw = np.polynomial.legendre.leggauss(spec.panel_order)
    edges = np.linspace(th_lo, th_hi, n_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * np.diff(edges)
    thetas = (mids[:, None] + halves[:, None] * gx[None, :]).ravel()
    x, y, omega = _curve_nodes(spec, thetas)
    phi = spec.profile(thetas)
    integrand = np.exp(1j * (j[0] * x + j[1] * y)) * phi * omega
    weights = (halves[:, None] * gw[None, :]).ravel()
    return complex(np.sum(weights * integrand))


def q_integral(spec: QIntegralSpec, j) -> float:
    """Modulus of the transverse profile integral at lattice frequency ``j``.

    Panel counts resolve every oscillation period with at least
    ``points_per_period`` nodes and are doubled until two refinements agree
    to ``refine_rtol`` relative.
    """
    j = tuple(int(c) for c in np.atleast_1d(j))
    if len(j) != 2:
        raise ConfigurationError("level-curve integrals are implemented for d=2 only")
    th_lo, th_hi = spec.window()
    coarse = np.linspace(th_lo, th_hi, 65)
    x, y, _ = _curve_nodes(spec, coarse)
    speed = np.max(np.hypot(np.gradient(x, coarse), np.gradient(y, coarse)))
    jn = math.hypot(*j)
    n_osc = jn * speed * (th_hi - th_lo) / (2.0 * np.pi)
    pts = max(spec.min_points, spec.points_per_period * n_osc)
    n_panels = max(8, int(np.ceil(pts / spec.panel_order)))
    val = abs(_q_once(spec, j, n_panels))
    for _ in range(6):
        n_panels *= 2
        new = abs(_q_once(spec, j, n_panels))
        if abs(new - val) <= spec.refine_rtol * max(abs(new), 1e-300):
            return new
        val = new
    raise AccuracyError(f"oscillatory integral at j={j} did not converge under panel refinement")


@dataclass
class PowerLawFit:
    slope: float
    prefactor: float
    rms_residual: float


def power_law_fit(sizes, values) -> PowerLawFit:
    """Least-squares slope of ``log values`` against ``log sizes``."""
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0.0) or np.any(sizes <= 0.0):
        raise ConfigurationError("power-law fit needs positive sizes and values")
    lx, ly = np.log(sizes), np.log(values)
    design = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ np.array([slope, intercept])
    return PowerLawFit(slope=float(slope), prefactor=float(np.exp(intercept)),
                       rms_residual=float(np.sqrt(np.mean(resid**2))))


def q_decay_fit(spec: QIntegralSpec, *, min_span_decades: float = 1.0) -> PowerLawFit:
    """Fitted decay exponent of the profile integral along ``spec.j_list``.

    On a regular band the slope is ``-(d-1)/2 = -0.5`` for d=2, independent
    of the profile.  The j list must span at least ``min_span_decades``
    decades in ``|j|`` for the fit to be meaningful.
    """
    norms = np.array([math.hypot(*tuple(j)) for j in spec.j_list])
    if len(norms) < 3:
        raise ConfigurationError("need at least three j values")
    span = math.log10(norms.max() / norms.min())
    if span < min_span_decades:
        raise ConfigurationError(
            f"|j| range spans only {span:.2f} decades; need >= {min_span_decades}"
        )
    qs = np.array([q_integral(spec, j) for j in spec.j_list])
    return power_law_fit(norms, qs)


def probe_spec_variants(spec: QIntegralSpec):
    """Two profile variants used for the exponent profile-independence check."""
    return (
        spec,
        replace(spec, bump_halfwidth=0.7 * spec.bump_halfwidth, bump_tilt=0.5),
    )

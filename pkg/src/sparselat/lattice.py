"""Lattice geometry, fields, the free hopping operator, and sparse potentials.

Conventions used across the package:

* sites are tuples of ints (points of Z^d); ``|n|`` means the Euclidean
  norm, and box membership is by sup-norm (``max |n_i| <= R``);
* fields on a box of radius R are complex arrays of shape ``(2R+1,)*d``,
  index ``m`` holding the value at site ``m - R`` componentwise, so the
  C-order flattening enumerates sites lexicographically;
* the free operator acts as ``[H0 u](n) = sum_{|n-j|=1} (u(n) - u(j))``
  with spectrum ``[0, 4d]``; the Dirichlet variant is the compression of
  the full-lattice operator to the box (the diagonal stays ``2d``), so
  it inherits the positivity of the infinite-volume operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError

Site = tuple  # tuple of ints, length d

_BOUNDARIES = ("periodic", "dirichlet")


def _as_site(n) -> Site:
    return tuple(int(c) for c in np.atleast_1d(n))


class LatticeBox:
    """Finite sup-norm box ``{n in Z^d : max|n_i| <= R}`` with a boundary rule.

    Parameters
    ----------
    d : int
        Ambient dimension, >= 1.
    radius : int
        Box radius R >= 0; the box has ``(2R+1)**d`` sites.
    boundary : str
        ``"periodic"`` (wrap-around hopping, exact DFT diagonalization) or
        ``"dirichlet"`` (truncation of the infinite-lattice operator).
    """

    def __init__(self, d: int, radius: int, boundary: str = "periodic"):
        if d < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {d}")
        if radius < 0:
            raise ConfigurationError(f"box radius must be >= 0, got {radius}")
        if boundary not in _BOUNDARIES:
            raise ConfigurationError(f"boundary must be one of {_BOUNDARIES}, got {boundary!r}")
        self.d = int(d)
        self.radius = int(radius)
        self.boundary = boundary
        self.side = 2 * self.radius + 1
        self.shape = (self.side,) * self.d
        self.n_sites = self.side**self.d

    def contains(self, site) -> bool:
        site = _as_site(site)
        return len(site) == self.d and max(abs(c) for c in site) <= self.radius

    def index_of(self, site) -> int:
        """Flat index of a site in the lexicographic enumeration."""
        site = _as_site(site)
        if not self.contains(site):
            raise ConfigurationError(f"site {site} outside box of radius {self.radius}")
        idx = 0
        for c in site:
            idx = idx * self.side + (c + self.radius)
        return idx

    def site_array(self) -> np.ndarray:
        """All sites as an ``(n_sites, d)`` int array in enumeration order."""
        axes = [np.arange(-self.radius, self.radius + 1)] * self.d
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, LatticeBox)
            and (self.d, self.radius, self.boundary) == (other.d, other.radius, other.boundary)
        )

    def __repr__(self):
        return f"LatticeBox(d={self.d}, radius={self.radius}, boundary={self.boundary!r})"


class LatticeField:
    """Complex-valued function on a box, stored as a ``(2R+1,)*d`` array."""

    def __init__(self, box: LatticeBox, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        if values.shape != box.shape:
            raise ConfigurationError(f"field shape {values.shape} does not match box {box.shape}")
        self.box = box
        self.values = values

    @classmethod
    def zeros(cls, box: LatticeBox) -> "LatticeField":
        return cls(box, np.zeros(box.shape, dtype=complex))

    @classmethod
    def delta(cls, box: LatticeBox, site=None) -> "LatticeField":
        """Indicator of a single site (default: the origin)."""
        f = cls.zeros(box)
        site = _as_site(site) if site is not None else (0,) * box.d
        f.values[tuple(c + box.radius for c in site)] = 1.0
        return f

    @classmethod
    def plane_wave(cls, box: LatticeBox, k) -> "LatticeField":
        """``exp(i xi . n)`` with the commensurate frequency ``xi = 2 pi k / (2R+1)``."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if k.shape != (box.d,):
            raise ConfigurationError(f"need {box.d} frequency integers, got shape {k.shape}")
        xi = 2.0 * np.pi * k / box.side
        phase = np.zeros(box.shape)
        coords = np.arange(-box.radius, box.radius + 1)
        for ax in range(box.d):
            sh = [1] * box.d
            sh[ax] = box.side
            phase = phase + (xi[ax] * coords).reshape(sh)
        return cls(box, np.exp(1j * phase))

    @property
    def flat(self) -> np.ndarray:
        """Flat view in lexicographic site order."""
        return self.values.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def inner(self, other: "LatticeField") -> complex:
        """Inner product ``<self, other> = sum self * conj(other)``."""
        return complex(np.vdot(other.values, self.values))

    def copy(self) -> "LatticeField":
        return LatticeField(self.box, self.values.copy())


class Potential:
    """Sparse real potential: finite map site -> value, zero elsewhere.

    ``gap(n)`` is the Euclidean distance from a support site to the rest of
    the support (infinite for a singleton support).
    """

    def __init__(self, entries: dict):
        clean = {}
        for site, v in entries.items():
            v = float(v)
            if not math.isfinite(v):
                raise ConfigurationError(f"potential value at {site} is not finite")
            if v != 0.0:
                clean[_as_site(site)] = v
        self.entries = clean
        self._gaps = None

    @property
    def d(self):
        """Ambient dimension, or None for an empty potential."""
        for site in self.entries:
            return len(site)
        return None

    def value(self, site) -> float:
        return self.entries.get(_as_site(site), 0.0)

    def sup_norm(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def support(self) -> list:
        """Support sites, sorted lexicographically."""
        return sorted(self.entries)

    def gaps(self) -> dict:
        """Distance from each support site to the nearest other support site."""
        if self._gaps is None:
            self._gaps = support_gaps(self.support())
        return self._gaps

    def restricted(self, radius: int) -> "Potential":
        """Restriction to the sup-norm box of the given radius."""
        return Potential(
            {s: v for s, v in self.entries.items() if max(abs(c) for c in s) <= radius}
        )

    def on_grid(self, box: LatticeBox) -> np.ndarray:
        """Real array of potential values over the box (sites outside ignored)."""
        grid = np.zeros(box.shape)
        for site, v in self.entries.items():
            if box.contains(site):
                grid[tuple(c + box.radius for c in site)] = v
        return grid

    def __len__(self):
        return len(self.entries)


def support_gaps(sites) -> dict:
    """Nearest-neighbor distance within a site collection, per site."""
    sites = [_as_site(s) for s in sites]
    if len(sites) <= 1:
        return {s: math.inf for s in sites}
    pts = np.asarray(sites, dtype=float)
    dist, _ = cKDTree(pts).query(pts, k=2)
    return {s: float(dist[i, 1]) for i, s in enumerate(sites)}


def symbol_eval(xi) -> float:
    """Fourier symbol ``sum_j (2 - 2 cos xi_j)`` of the free operator; range [0, 4d].

    Evaluated as ``4 sin^2(xi_j / 2)`` per coordinate, which is the same
    function without cancellation near the band edge.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.ndim != 1:
        raise ConfigurationError("xi must be a 1-d vector")
    return float(np.sum(4.0 * np.sin(0.5 * xi) ** 2))


def apply_h0(field: LatticeField) -> LatticeField:
    """Apply the free operator on the field's box under its boundary rule."""
    u = field.values
    d = field.box.d
    out = (2.0 * d) * u
    if field.box.boundary == "periodic":
        for ax in range(d):
            out = out - np.roll(u, 1, axis=ax) - np.roll(u, -1, axis=ax)
    else:
        out = out.copy()
        for ax in range(d):
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[ax] = slice(1, None)
            hi[ax] = slice(None, -1)
            out[tuple(lo)] -= u[tuple(hi)]
            out[tuple(hi)] -= u[tuple(lo)]
    return LatticeField(field.box, out)


def apply_h(field: LatticeField, potential: Potential) -> LatticeField:
    """Apply ``H = H0 + V`` (multiplication by the sparse potential)."""
    out = apply_h0(field)
    for site, v in potential.entries.items():
        if field.box.contains(site):
            idx = tuple(c + field.box.radius for c in site)
            out.values[idx] += v * field.values[idx]
    return out


@dataclass(frozen=True)
class SparseRule:
    """Built-in sparse support family: sites at radius ``ceil(scale * k**exponent)``.

    One site per direction per shell index ``k >= k_min``.  ``directions``
    selects the ray set: ``"positive-axes"`` uses the d positive coordinate
    axes (one-sided in d=1), ``"signed-axes"`` all 2d signed axes.  The gap
    between consecutive shells grows like ``k**(exponent-1)``, so for
    ``exponent > 1`` the support satisfies ``gap(n)/|n|**delta -> infinity``
    for every ``delta < 1 - 1/exponent``.
    """

    d: int = 1
    exponent: float = 2.0
    scale: float = 1.0
    k_min: int = 1
    directions: str = "positive-axes"

    def rays(self):
        if self.directions == "positive-axes":
            signs = (1,)
        elif self.directions == "signed-axes":
            signs = (1, -1)
        else:
            raise ConfigurationError(f"unknown direction set {self.directions!r}")
        out = []
        for ax in range(self.d):
            for s in signs:
                e = [0] * self.d
                e[ax] = s
                out.append(tuple(e))
        return out


def rule_shells(rule: SparseRule, radius: int) -> list:
    """Shell indices and radii ``(k, ceil(scale * k**exponent))`` inside the box."""
    if rule.exponent <= 1.0:
        raise ConfigurationError(f"sparse rule needs exponent > 1, got {rule.exponent}")
    if rule.scale <= 0.0 or rule.k_min < 1:
        raise ConfigurationError("sparse rule needs scale > 0 and k_min >= 1")
    shells = []
    k = rule.k_min
    while True:
        r = math.ceil(rule.scale * k**rule.exponent)
        if r > radius:
            break
        shells.append((k, r))
        k += 1
    if len({r for _, r in shells}) != len(shells):
        raise ConfigurationError(
            "sparse rule generates colliding shell radii; increase exponent or scale"
        )
    return shells


def sparse_support(rule: SparseRule, radius: int):
    """Generate the rule's support inside the box; returns ``(sites, gaps)``.

    ``sites`` is lexicographically sorted; ``gaps`` maps each site to its
    distance from the rest of the generated support.  Colliding or
    non-sparse parameter choices are rejected.
    """
    sites = []
    for _, r in rule_shells(rule, radius):
        for ray in rule.rays():
            sites.append(tuple(r * e for e in ray))
    if len(set(sites)) != len(sites):
        raise ConfigurationError("sparse rule generates colliding sites")
    sites = sorted(sites)
    return sites, support_gaps(sites)


def sparseness_margin(sites, gaps: dict, delta: float, outer_fraction: float = 0.25) -> float:
    """Min of ``gap(n)/|n|**delta`` over the outer part of the support.

    The sparseness condition is a statement about ``|n| -> infinity``, so
    the diagnostic looks at sites with ``|n| >= outer_fraction * max |n|``;
    for the built-in rules this margin grows with the box radius.
    """
    sites = [_as_site(s) for s in sites]
    if not sites:
        return math.inf
    norms = {s: math.sqrt(sum(c * c for c in s)) for s in sites}
    r_max = max(norms.values())
    cut = outer_fraction * r_max
    vals = [
        gaps[s] / max(norms[s], 1.0) ** delta
        for s in sites
        if norms[s] >= cut and math.isfinite(gaps[s])
    ]
    return min(vals) if vals else math.inf


def sample_potential(sites, a: float, seed: int) -> Potential:
    """Independent uniform draws from ``[-a, 0]`` on the given support.

    Draws are made in lexicographic site order from a generator seeded with
    ``seed``, so results are reproducible site-by-site.
    """
    if a <= 0.0:
        raise ConfigurationError(f"amplitude bound a must be positive, got {a}")
    sites = sorted(_as_site(s) for s in sites)
    rng = np.random.default_rng(seed)
    draws = rng.uniform(-a, 0.0, size=len(sites))
    return Potential(dict(zip(sites, draws)))


def short_range_partial_sums(potential: Potential, radii) -> np.ndarray:
    """Partial sums ``sum_{0 < |n| <= R} |V(n)| / |n|**((d-1)/2)`` for each R.

    This is the summability condition under which the scattering comparison
    with the free dynamics closes; the sums are nondecreasing in R and the
    interesting question is whether they saturate.
    """
    radii = sorted(float(r) for r in radii)
    d = potential.d
    if d is None:
        return np.zeros(len(radii))
    terms = []
    for site, v in potential.entries.items():
        r = math.sqrt(sum(c * c for c in site))
        if r > 0.0:
            terms.append((r, abs(v) / r ** ((d - 1) / 2.0)))
    terms.sort()
    sums = np.zeros(len(radii))
    acc = 0.0
    i = 0
    for j, R in enumerate(radii):
        while i < len(terms) and terms[i][0] <= R:
            acc += terms[i][1]
            i += 1
        sums[j] = acc
    return sums

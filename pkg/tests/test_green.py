import numpy as np
import pytest

from sparselat import (
    AccuracyError,
    ConfigurationError,
    GreenKernel,
    SpectralParameterError,
    coupling_bound,
    green_decay_fit,
    green_diag,
    green_eval,
    green_eval_many,
    spectral_distance,
)
from sparselat.green import _resolvent_table
from sparselat.lattice import LatticeBox, LatticeField, Potential, apply_h0


def g1_exact(lam, n):
    """d=1 closed form r^|n| / sqrt(A^2 - 4), A = 2 - lam (the test oracle)."""
    a = 2.0 - lam
    s = np.sqrt(a * a - 4.0)
    r = (a - s) / 2.0
    return r ** abs(n) / s


def test_d1_against_closed_form_spot():
    assert green_eval(-1.0, (0,)).real == pytest.approx(1 / np.sqrt(5), abs=1e-12)
    r = (3 - np.sqrt(5)) / 2
    assert green_eval(-1.0, (1,)).real == pytest.approx(r / np.sqrt(5), abs=1e-12)
    assert green_eval(-1.0, (-1,)).real == pytest.approx(r / np.sqrt(5), abs=1e-12)


def test_large_z_resolvent_asymptotics():
    z = 1e6j
    for d in (1, 2, 3):
        g = green_eval(z, (0,) * d)
        assert abs(g - (-1.0 / z)) < 1e-5 * abs(1.0 / z)


def test_spectral_distance():
    assert spectral_distance(-1.0, 1) == 1.0
    assert spectral_distance(5.0, 1) == 1.0
    assert spectral_distance(2.0 + 3.0j, 1) == 3.0
    assert spectral_distance(-3.0 + 4.0j, 2) == 5.0


def test_near_spectrum_guard():
    with pytest.raises(SpectralParameterError):
        green_eval(-1e-8, (0,))
    with pytest.raises(SpectralParameterError):
        green_eval(2.0, (0,))  # inside the band


def test_symmetries_d2_d3():
    kern = GreenKernel(2)
    z = -0.7
    base = kern.eval(z, (3, 1))
    for n in [(1, 3), (-3, 1), (3, -1), (-1, -3)]:
        assert abs(kern.eval(z, n) - base) < 1e-10
    # conjugate symmetry
    zc = 1.5 + 0.8j
    assert green_eval(np.conj(zc), (2, 1)) == pytest.approx(
        np.conj(green_eval(zc, (2, 1))), abs=1e-12)
    kern3 = GreenKernel(3)
    base3 = kern3.eval(-0.5, (2, 1, 0))
    for n in [(0, 1, 2), (-2, 0, 1), (1, -2, 0)]:
        assert abs(kern3.eval(-0.5, n) - base3) < 1e-10


def test_quadrature_doubling_invariant():
    # dist(z, [0,4d]) >= 0.5: one doubling moves the value by < 1e-10
    for z, d, n in [(-0.5, 1, (4,)), (-0.5, 2, (2, 1)), (4 * 2 + 0.5, 2, (1, 0))]:
        t1 = _resolvent_table(z, d, 256)
        t2 = _resolvent_table(z, d, 512)
        idx1 = tuple((-c) % 256 for c in n)
        idx2 = tuple((-c) % 512 for c in n)
        assert abs(t1[idx1] - t2[idx2]) < 1e-10


def test_resolvent_identity_on_box():
    # g(n) = G(lam; n) satisfies (H0 - lam) g = delta_0 at interior sites
    lam = -1.5
    box = LatticeBox(2, 8, "dirichlet")
    kern = GreenKernel(2)
    vals = kern.eval_many(lam, box.site_array()).real.reshape(box.shape)
    g = LatticeField(box, vals)
    resid = apply_h0(g).values - lam * g.values
    resid[box.radius, box.radius] -= 1.0
    interior = resid[1:-1, 1:-1]
    assert np.abs(interior).max() < 1e-8


def test_eval_many_matches_eval_and_cache():
    kern = GreenKernel(1)
    offs = np.array([[0], [1], [5], [-5]])
    vals = kern.eval_many(-2.0, offs)
    for off, v in zip(offs, vals):
        assert v == kern.eval(-2.0, tuple(off))
    # cache idempotence
    again = kern.eval_many(-2.0, offs)
    assert np.array_equal(vals, again)


def test_decay_fit_d1_rate():
    fit = green_decay_fit(-1.0, [1], 20)
    exact = np.log(2.0 / (3.0 - np.sqrt(5.0)))
    assert fit.gamma == pytest.approx(exact, rel=0.02)
    assert fit.residual < 1e-6  # pure exponential in d=1


def test_decay_fit_gamma_monotone_in_depth():
    gammas = [green_decay_fit(lam, [1], 14).gamma for lam in (-1, -2, -4, -8)]
    assert all(b > a for a, b in zip(gammas, gammas[1:]))


def test_decay_fit_d2_residual():
    for direction in [(1, 0), (1, 1)]:
        fit = green_decay_fit(-1.0, direction, 10)
        assert fit.residual < 1e-3
        assert fit.gamma > 0.5


def test_decay_fit_guards():
    with pytest.raises(ConfigurationError):
        green_decay_fit(-1.0, [0], 10)
    with pytest.raises(SpectralParameterError):
        green_decay_fit(0.05, [1], 10)
    with pytest.raises(AccuracyError):
        green_decay_fit(-1.0, [1], 10, floor=1e-1)  # fewer than 3 points above floor


def test_coupling_bound_values():
    assert coupling_bound(-1.0, 1) == pytest.approx(np.sqrt(5.0), abs=1e-10)
    a = coupling_bound(-1000.0, 1)
    assert a / 1000.0 == pytest.approx(1.0, rel=5e-3)
    for d in (1, 2, 3):
        seq = [coupling_bound(lam, d) for lam in (-0.5, -1.0, -2.0)]
        assert seq[0] < seq[1] < seq[2]
    with pytest.raises(ConfigurationError):
        coupling_bound(0.5, 1)


def test_green_diag_matches_tensor():
    for d in (2, 3):
        for z in (-1.0, -0.25, 2.0 + 1.5j, 4 * d + 0.7):
            assert abs(green_diag(z, d) - green_eval(z, (0,) * d)) < 1e-9


def test_green_eval_many_shape_and_dtype():
    out = green_eval_many(-1.0, [[0], [3]])
    assert out.shape == (2,)
    assert np.iscomplexobj(out)

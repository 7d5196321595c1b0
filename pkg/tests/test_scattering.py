import numpy as np
import pytest

from sparselat import (
    AccuracyError,
    BoxOperator,
    ConfigurationError,
    LatticeBox,
    LatticeField,
    Potential,
    QIntegralSpec,
    RegularityError,
    WavefrontError,
    eigs_in_window,
    free_propagate,
    full_propagate,
    power_law_fit,
    probe_spec_variants,
    q_decay_fit,
    q_integral,
    wave_operator_probe,
)
from sparselat.scattering import _q_once

RNG = np.random.default_rng(77)


def random_field(box):
    return LatticeField(box, RNG.normal(size=box.shape) + 1j * RNG.normal(size=box.shape))


def test_free_propagate_identity_unitarity_group():
    box = LatticeBox(2, 9, "periodic")
    f = random_field(box)
    assert np.abs(free_propagate(f, 0.0).values - f.values).max() < 1e-14
    for t in (0.7, 3.0, 25.0):
        assert free_propagate(f, t).norm() == pytest.approx(f.norm(), abs=1e-12)
    ut_us = free_propagate(free_propagate(f, 1.3), 2.4)
    ut_plus = free_propagate(f, 3.7)
    assert np.abs(ut_us.values - ut_plus.values).max() < 1e-11


def test_free_propagate_needs_periodic():
    box = LatticeBox(1, 10, "dirichlet")
    with pytest.raises(ConfigurationError):
        free_propagate(LatticeField.delta(box), 1.0)


def test_full_propagate_free_case_matches_fft():
    box = LatticeBox(1, 40, "periodic")
    op = BoxOperator(box)
    f = random_field(box)
    f = LatticeField(box, f.values / f.norm())
    tol = 1e-10
    for t in (1.0, 7.5):
        cheb = full_propagate(op, f, t, tol=tol)
        fft = free_propagate(f, -t)
        assert np.abs(cheb.values - fft.values).max() < 50 * tol


def test_full_propagate_eigenvector_phase():
    box = LatticeBox(1, 60, "periodic")
    pot = Potential({(0,): -1.0})
    op = BoxOperator(box, pot)
    vals, vecs = eigs_in_window(op, (-1.0, -0.01), k_max=3, dense_cutoff=200)
    assert len(vals) == 1
    lam, v = vals[0], vecs[:, 0]
    f = LatticeField(box, v.astype(complex).reshape(box.shape))
    t = 5.0
    out = full_propagate(op, f, t, tol=1e-10)
    assert np.abs(out.values - np.exp(-1j * lam * t) * f.values).max() < 1e-8


def test_full_propagate_norm_preservation():
    box = LatticeBox(1, 250, "periodic")
    op = BoxOperator(box, Potential({(5,): -0.8}))
    f = LatticeField.delta(box)
    tol = 1e-8
    for t in (1.0, 10.0, 100.0):
        out = full_propagate(op, f, t, tol=tol)
        assert abs(out.norm() - 1.0) <= 10 * tol


def test_full_propagate_term_cap():
    box = LatticeBox(1, 10, "periodic")
    op = BoxOperator(box)
    with pytest.raises(AccuracyError):
        full_propagate(op, LatticeField.delta(box), 1e7, max_terms=1000)


def test_wave_probe_free_case_increments_vanish():
    box = LatticeBox(1, 80, "periodic")
    f = LatticeField.delta(box)
    tol = 1e-8
    probe = wave_operator_probe(Potential({}), f, [2.0, 6.0, 12.0, 20.0],
                                tol=tol, margin=8.0)
    assert probe.increments.max() < 10 * tol
    assert np.abs(probe.norms - 1.0).max() < 10 * tol


def test_wave_probe_isometry_and_guard():
    box = LatticeBox(1, 70, "periodic")
    f = LatticeField.delta(box)
    pot = Potential({(k * k,): 1.0 / k**2 for k in range(1, 8)})
    probe = wave_operator_probe(pot, f, [2.0, 5.0, 11.0, 23.0], tol=1e-8)
    assert np.abs(probe.norms - 1.0).max() < 1e-6
    with pytest.raises(WavefrontError):
        wave_operator_probe(pot, f, [2.0, 40.0], tol=1e-8, margin=8.0)
    with pytest.raises(ConfigurationError):
        wave_operator_probe(pot, f, [5.0], tol=1e-8)
    with pytest.raises(ConfigurationError):
        wave_operator_probe(pot, f, [5.0, 3.0, 8.0], tol=1e-8)
    with pytest.raises(ConfigurationError):
        wave_operator_probe(pot, f, [2.0, 5.0], tol=1e-3)


def test_wave_probe_sparse_decays_faster_than_dense():
    # comparative diagnostic: a dense potential whose short-range sum diverges
    # loses its Cauchy decay relative to a sparse summable one at matched times
    radius = 150
    box = LatticeBox(1, radius, "periodic")
    f = LatticeField.delta(box)
    times = list(np.arange(2.0, 62.0, 4.0))
    dense = Potential({(n,): (1.0 + abs(n)) ** -0.25
                       for n in range(-radius, radius + 1) if n != 0})
    sparse = Potential({(k * k,): 1.0 / k**2 for k in range(1, 13)})
    p_dense = wave_operator_probe(dense, f, times, tol=1e-8, margin=8.0)
    p_sparse = wave_operator_probe(sparse, f, times, tol=1e-8, margin=8.0)
    assert p_sparse.final_over_first() < p_dense.final_over_first()


def test_q_integral_basic_symmetries():
    spec = QIntegralSpec(tau1=2.0)
    q0 = q_integral(spec, (0, 0))
    assert q0 > 0.0
    qp = q_integral(spec, (24, 0))
    qm = q_integral(spec, (-24, 0))
    assert qp == pytest.approx(qm, rel=1e-10)
    with pytest.raises(ConfigurationError):
        q_integral(spec, (1, 0, 0))


def test_q_integral_panel_refinement_converged():
    spec = QIntegralSpec(tau1=2.0)
    v1 = abs(_q_once(spec, (64, 0), 600))
    v2 = abs(_q_once(spec, (64, 0), 1200))
    assert abs(v1 - v2) < 1e-6 * v2


def test_q_integral_regularity_guard():
    # the tau1 = 4 level set contains points with vanishing gradient
    with pytest.raises(RegularityError):
        q_integral(QIntegralSpec(tau1=4.0), (8, 0))


def test_power_law_fitter_self_test():
    sizes = np.array([8, 16, 32, 64, 128], dtype=float)
    fit = power_law_fit(sizes, 1.0 / sizes)
    assert fit.slope == pytest.approx(-1.0, abs=0.02)
    assert fit.rms_residual < 1e-12


def test_q_decay_exponent_and_profile_independence():
    spec = QIntegralSpec(tau1=2.0)
    fit = q_decay_fit(spec)
    assert abs(fit.slope - (-0.5)) < 0.1
    variant = probe_spec_variants(spec)[1]
    fit2 = q_decay_fit(variant)
    assert abs(fit2.slope - fit.slope) < 0.05


def test_q_decay_exponent_stable_under_range_doubling():
    spec = QIntegralSpec(tau1=2.0)
    wide = QIntegralSpec(tau1=2.0, j_list=tuple((m, 0) for m in (8, 16, 32, 64, 128, 256)))
    assert abs(q_decay_fit(spec).slope - q_decay_fit(wide).slope) < 0.05


def test_q_decay_span_precondition():
    spec = QIntegralSpec(tau1=2.0, j_list=((8, 0), (12, 0), (16, 0)))
    with pytest.raises(ConfigurationError):
        q_decay_fit(spec)

"""Acceptance suite: one test per criterion, run with ``pytest -v -s``.

Each test pins the criterion's tolerance and wall-clock budget and prints a
single PASS line on success (pytest itself reports failures).
"""

import time

import numpy as np
import pytest
import scipy.linalg as sla

from sparselat import (
    BoxOperator,
    GreenKernel,
    LatticeBox,
    LatticeField,
    Potential,
    QIntegralSpec,
    SparseRule,
    bump_measure_compare,
    coupling_bound,
    eigs_in_window,
    green_decay_fit,
    impurity_level,
    kernel_singularities,
    one_plus_gv_scan,
    power_law_fit,
    q_decay_fit,
    sample_potential,
    simon_wolff_resolve,
    sparse_support,
    spectrum_fill_scan,
    wave_operator_probe,
)

MASTER_SEED = 20260810


def g1_exact(lam, n):
    a = 2.0 - lam
    s = np.sqrt(a * a - 4.0)
    return ((a - s) / 2.0) ** abs(n) / s


class Budget:
    def __init__(self, seconds):
        self.limit = seconds
        self.start = time.perf_counter()

    def done(self, label):
        elapsed = time.perf_counter() - self.start
        assert elapsed < self.limit, f"{label}: {elapsed:.1f}s exceeds {self.limit}s budget"
        print(f"[PASS] {label} ({elapsed:.1f}s)")


def test_criterion_1_green_oracle():
    budget = Budget(1.0)
    kern = GreenKernel(1, tol=1e-12)
    worst = 0.0
    for lam in (-0.1, -1.0, -10.0):
        offs = np.arange(-20, 21)[:, None]
        vals = kern.eval_many(lam, offs)
        exact = np.array([g1_exact(lam, int(n)) for n in offs[:, 0]])
        worst = max(worst, float(np.max(np.abs(vals - exact))))
    assert worst <= 1e-10, f"worst quadrature-vs-closed-form error {worst:.2e}"
    budget.done(f"criterion 1: d=1 Green oracle, worst error {worst:.1e}")


def test_criterion_2_decay_rate():
    budget = Budget(10.0)
    fit1 = green_decay_fit(-1.0, [1], 20)
    exact = np.log(2.0 / (3.0 - np.sqrt(5.0)))
    assert fit1.gamma == pytest.approx(exact, rel=0.02)
    residuals = []
    for direction in [(1, 0), (1, 1)]:
        fit2 = green_decay_fit(-1.0, direction, 10)
        residuals.append(fit2.residual)
        assert fit2.residual < 1e-3
    budget.done(
        f"criterion 2: gamma={fit1.gamma:.4f} (target {exact:.4f}), "
        f"d=2 residuals {residuals[0]:.1e}/{residuals[1]:.1e}"
    )


def test_criterion_3_impurity_level():
    budget = Budget(30.0)
    root = impurity_level(-1.0, 1)
    closed = 2.0 - np.sqrt(5.0)
    assert abs(root - closed) <= 1e-10
    op = BoxOperator(LatticeBox(1, 400, "dirichlet"), Potential({(0,): -1.0}))
    vals, _ = eigs_in_window(op, (-1.0, 0.0), k_max=3)
    assert len(vals) == 1
    assert abs(root - vals[0]) <= 1e-6
    budget.done(
        f"criterion 3: impurity root {root:.12f}, box deviation {abs(root - vals[0]):.1e}"
    )


def test_criterion_4_coupling_bound_floor():
    budget = Budget(600.0)
    a = coupling_bound(-1.0, 1)
    assert abs(a - np.sqrt(5.0)) <= 1e-10
    rule = SparseRule(d=1, exponent=2.0, k_min=10, directions="signed-axes")
    report = spectrum_fill_scan(-1.0, rule, 2000, realizations=20, seed=MASTER_SEED)
    assert report.amplitude_bound == pytest.approx(a, abs=1e-12)
    assert report.min_eigenvalue >= -1.0 - 1e-8
    assert np.all(report.eigenvalues >= -1.0 - 1e-8)
    budget.done(
        f"criterion 4: a={a:.10f}, min eigenvalue {report.min_eigenvalue:.10f} "
        f"over {report.realizations} realizations"
    )


def test_criterion_5_stationary_phase_exponent():
    budget = Budget(300.0)
    sizes = np.array([8.0, 16.0, 32.0, 64.0, 128.0])
    self_test = power_law_fit(sizes, 1.0 / sizes)
    assert self_test.slope == pytest.approx(-1.0, abs=0.02)
    fit = q_decay_fit(QIntegralSpec(tau1=2.0))
    assert abs(fit.slope - (-0.5)) <= 0.1
    budget.done(
        f"criterion 5: q-decay slope {fit.slope:.4f}, fitter self-test "
        f"{self_test.slope:.4f}"
    )


def test_criterion_6_wave_operator_probe():
    budget = Budget(600.0)
    tol = 1e-8
    box = LatticeBox(2, 100, "periodic")
    f = LatticeField.delta(box)
    times = np.arange(2.0, 46.0, 2.0)

    sparse = Potential({(k * k, 0): 1.0 / k for k in range(1, 11)})
    probe = wave_operator_probe(sparse, f, times, tol=tol, margin=8.0)
    ratio = probe.final_over_first()
    assert ratio < 0.1
    # decreasing after the transient: windowed means over thirds of the
    # post-peak increments must strictly decrease
    peak = int(np.argmax(probe.increments))
    assert peak < len(probe.increments) // 2
    post = probe.increments[peak:]
    thirds = np.array_split(post, 3)
    means = [t.mean() for t in thirds]
    assert means[0] > means[1] > means[2]

    free = wave_operator_probe(Potential({}), f, times, tol=tol, margin=8.0)
    assert free.increments.max() < 10 * tol
    budget.done(
        f"criterion 6: final/first {ratio:.3f}, trend means "
        f"{means[0]:.2e} > {means[1]:.2e} > {means[2]:.2e}, "
        f"free-case max increment {free.increments.max():.1e}"
    )


def test_criterion_7_simon_wolff_oracle():
    budget = Budget(120.0)
    pot = Potential({(0,): -1.3, (3,): -0.8, (7,): -2.1})
    lam = -1.5
    report = simon_wolff_resolve(lam, (0,), pot, [10])

    radius = 250
    side = 2 * radius + 1
    diag = np.full(side, 2.0)
    for s, v in pot.entries.items():
        diag[s[0] + radius] += v
    ab = np.zeros((3, side))
    ab[0, 1:] = -1.0
    ab[1] = diag - lam
    ab[2, :-1] = -1.0
    rhs = np.zeros(side)
    rhs[radius] = 1.0
    u = sla.solve_banded((1, 1), ab, rhs)
    worst = max(
        abs(val - u[site[0] + radius])
        for site, val in zip(report.support_sites, report.psi_support)
    )
    assert worst <= 1e-6

    window = (-1.45, -0.11)
    flags = kernel_singularities(pot, window, grid_points=500)
    op = BoxOperator(LatticeBox(1, radius, "dirichlet"), pot)
    vals, _ = eigs_in_window(op, window, k_max=10)
    assert len(flags) == len(vals) > 0
    flag_err = float(np.abs(np.sort(flags) - np.sort(vals)).max())
    assert flag_err <= 1e-4
    budget.done(
        f"criterion 7: support-solve vs box {worst:.1e}, "
        f"{len(flags)} flags within {flag_err:.1e} of box eigenvalues"
    )


def test_criterion_8_borel_cantelli_bound():
    budget = Budget(60.0)
    eps = 0.5
    amp = -np.sqrt(5.0)
    sites = [(10,), (20,), (40,)]
    pot = Potential({s: amp for s in sites})
    grid = np.linspace(-3.0, -0.51, 2001)
    rows = one_plus_gv_scan(pot, eps, grid, sites)
    worst_excess = -np.inf
    for s in sites:
        row = rows[s]
        assert row.resolved
        excess = row.measure_estimate - (row.bound + row.spacing)
        worst_excess = max(worst_excess, excess)
        assert excess <= 0.0
    budget.done(f"criterion 8: worst estimate-minus-bound {worst_excess:.2e} (<= 0)")


def test_criterion_9_measure_convergence():
    budget = Budget(300.0)
    beta = -1.0
    pot = Potential({(k * k,): beta + 1.0 / k for k in range(1, 12)})
    far = [(k * k,) for k in range(3, 9)]
    report = bump_measure_compare(pot, far, beta, [1j, -0.5 + 0.5j], local_radius=120)
    diffs = np.diff(report.sup_differences)
    assert np.all(diffs < 0.0)
    budget.done(
        "criterion 9: sup differences "
        + " > ".join(f"{s:.4f}" for s in report.sup_differences)
    )


def test_criterion_10_localization_statistics():
    budget = Budget(900.0)
    rule = SparseRule(d=1, exponent=2.0, k_min=10, directions="signed-axes")
    small = spectrum_fill_scan(-1.0, rule, 500, realizations=20, seed=MASTER_SEED)
    large = spectrum_fill_scan(-1.0, rule, 2000, realizations=20, seed=MASTER_SEED)
    assert np.all(large.eigenvalues >= -1.0)
    assert np.all(large.eigenvalues < 0.0)
    assert large.largest_gap < small.largest_gap
    assert small.median_pr < 50.0
    assert large.median_pr < 50.0
    assert large.median_pr <= 1.1 * small.median_pr
    budget.done(
        f"criterion 10: largest gap {small.largest_gap:.4f} (R=500) -> "
        f"{large.largest_gap:.4f} (R=2000), median PR "
        f"{small.median_pr:.2f} -> {large.median_pr:.2f}"
    )

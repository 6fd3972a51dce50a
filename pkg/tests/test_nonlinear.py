"""Reaction terms, the fixed-point solver, solvability gates, regularity."""

import numpy as np
import pytest
from scipy.special import beta as beta_fn

from rstokes import (
    HistoryKernel,
    Interval,
    MemoryKernel,
    MildSolution,
    NonConvergence,
    Nonlinearity,
    PicardOptions,
    TimeGrid,
    build_basis,
    build_resolvent,
    hnorm,
    holder_estimate,
    picard_solve,
    select_invariant_radius,
    small_data_gate,
    spectral_gap_gate,
)
from rstokes.nonlinear import history_apply, history_series

BASIS = build_basis(Interval(1.0), 6)


# -- reaction terms -----------------------------------------------------------


def test_every_kind_vanishes_at_zero():
    specs = [
        Nonlinearity.zero(),
        Nonlinearity.linear_diagonal(np.arange(1.0, 7.0)),
        Nonlinearity.polynomial_power(2.0),
        Nonlinearity.polynomial_power(1.5, signed=False),
        Nonlinearity.advection_history((0.3,)),
    ]
    specs.append(Nonlinearity.sum_of(specs[1], specs[2]))
    Z = np.zeros((3, 6))
    for spec in specs:
        np.testing.assert_allclose(spec.apply_series(Z, Z, BASIS), 0.0, atol=1e-15)


def test_linear_diagonal_acts_mode_by_mode():
    c = np.array([2.0, 0.0, -1.0, 0.5, 0.0, 3.0])
    spec = Nonlinearity.linear_diagonal(c)
    rng = np.random.default_rng(5)
    V = rng.standard_normal((4, 6))
    out = spec.apply_series(V, np.zeros_like(V), BASIS)
    np.testing.assert_allclose(out, V * c[None, :])


def test_square_power_projection_converges_to_the_sine_integral():
    # f = u^2 with u = e_1 on (0,1): the first coefficient is
    # 2 sqrt(2) int_0^1 sin(pi x)^3 dx = 8 sqrt(2) / (3 pi), and the
    # collocation quadrature approaches it at the node-count rate
    exact = 8.0 * np.sqrt(2.0) / (3.0 * np.pi)
    exact3 = -8.0 * np.sqrt(2.0) / (15.0 * np.pi)
    errs = []
    for n in (16, 32):
        basis = build_basis(Interval(1.0), n)
        V = np.zeros((1, n))
        V[0, 0] = 1.0
        out = Nonlinearity.polynomial_power(2.0).apply_series(
            V, np.zeros_like(V), basis
        )
        errs.append(abs(out[0, 0] - exact))
        if n == 32:
            assert out[0, 0] == pytest.approx(exact, abs=1e-6)
            assert out[0, 2] == pytest.approx(exact3, abs=1e-6)
            # even modes vanish by symmetry
            assert abs(out[0, 1]) < 1e-12
            assert abs(out[0, 3]) < 1e-12
    assert errs[1] < errs[0] / 3.0


def test_unsigned_power_differs_on_negative_fields():
    basis = build_basis(Interval(1.0), 4)
    V = np.zeros((1, 4))
    V[0, 0] = -1.0
    signed = Nonlinearity.polynomial_power(2.0).apply_series(V, 0 * V, basis)
    unsigned = Nonlinearity.polynomial_power(2.0, signed=False).apply_series(
        V, 0 * V, basis
    )
    np.testing.assert_allclose(signed, -unsigned, atol=1e-14)


def test_advected_history_projection_converges_to_the_cosine_integral():
    # w = e_1, chi = 1: (w')_1 pairs with e_2 as
    # 2 pi int_0^1 cos(pi x) sin(2 pi x) dx = 8/3
    errs = []
    for n in (32, 64):
        basis = build_basis(Interval(1.0), n)
        W = np.zeros((1, n))
        W[0, 0] = 1.0
        out = Nonlinearity.advection_history((1.0,)).apply_series(
            np.zeros_like(W), W, basis
        )
        errs.append(abs(out[0, 1] - 8.0 / 3.0))
        if n == 64:
            assert out[0, 1] == pytest.approx(8.0 / 3.0, abs=5e-4)
            assert abs(out[0, 0]) < 1e-12  # odd-mode pairing vanishes
    assert errs[1] < errs[0] / 3.0


def test_sum_is_the_sum_of_parts():
    rng = np.random.default_rng(9)
    V = rng.standard_normal((3, 6)) * 0.1
    W = rng.standard_normal((3, 6)) * 0.1
    a = Nonlinearity.linear_diagonal(np.ones(6))
    b = Nonlinearity.advection_history((0.5,))
    s = Nonlinearity.sum_of(a, b)
    np.testing.assert_allclose(
        s.apply_series(V, W, BASIS),
        a.apply_series(V, W, BASIS) + b.apply_series(V, W, BASIS),
        atol=1e-14,
    )
    # globals sum only when every part supplies one
    assert a.state_global is None and s.state_global is None
    assert s.history_global == pytest.approx(0.5)


def test_custom_series_shape_is_checked():
    bad = Nonlinearity.custom_series(lambda V, W, basis: V[:, :2], mu=1.0)
    with pytest.raises(ValueError):
        bad.apply_series(np.zeros((2, 6)), np.zeros((2, 6)), BASIS)


def test_parameter_domains():
    with pytest.raises(ValueError):
        Nonlinearity.zero(mu=2.5)
    with pytest.raises(ValueError):
        Nonlinearity.zero(delta=1.0)
    with pytest.raises(ValueError):
        Nonlinearity.polynomial_power(1.0)
    with pytest.raises(ValueError):
        Nonlinearity.zero(mu=1.9, delta=0.5, theta=None)  # theta = -0.4


def test_power_overflow_is_diagnosed():
    basis = build_basis(Interval(1.0), 3)
    V = np.full((1, 3), 1e200)
    with pytest.raises(RuntimeError, match="overflow|finite"):
        Nonlinearity.polynomial_power(3.0).apply_series(V, 0 * V, basis)


# -- history operator ---------------------------------------------------------


def test_history_series_exponential_oracle():
    # ell = e^{-t}, series = 1: (ell * 1)(t) = 1 - e^{-t}, exact moments
    # against a constant interpolant make the rule exact
    grid = TimeGrid.uniform(1.0, 64)
    ell = HistoryKernel.exponential(1.0, 1.0)
    series = np.ones((65, 2))
    out = history_series(ell, series, grid)
    expected = 1.0 - np.exp(-grid.nodes)
    np.testing.assert_allclose(out[:, 0], expected, atol=1e-13)
    np.testing.assert_allclose(out[:, 1], expected, atol=1e-13)
    assert out[0, 0] == 0.0


def test_history_series_linear_data_powerlaw_oracle():
    # ell = t^{-1/2}, series = t: exact value 4/3 t^{3/2} ... scaled by
    # the Beta(1/2) factors; product integration is exact for linear data
    grid = TimeGrid.uniform(1.0, 128)
    ell = HistoryKernel.powerlaw(1.0, -0.5)
    t = grid.nodes
    out = history_series(ell, t[:, None], grid)
    exact = t**1.5 * beta_fn(0.5, 2.0)
    np.testing.assert_allclose(out[:, 0], exact, atol=1e-12)


def test_history_apply_matches_series_rows():
    grid = TimeGrid.uniform(1.0, 32)
    ell = HistoryKernel.exponential(2.0, 1.5)
    rng = np.random.default_rng(21)
    series = rng.standard_normal((33, 3))
    full = history_series(ell, series, grid)
    for i in (0, 1, 7, 32):
        np.testing.assert_allclose(
            history_apply(ell, series, grid, i), full[i], atol=1e-12
        )
    with pytest.raises(IndexError):
        history_apply(ell, series[:5], grid, 10)


def test_zero_history_shortcut():
    grid = TimeGrid.uniform(1.0, 16)
    series = np.ones((17, 2))
    out = history_series(HistoryKernel.zero(), series, grid)
    assert not out.any()


# -- fixed-point solver -------------------------------------------------------


def solver_ctx(kernel=None, n_modes=6, n_t=128):
    basis = build_basis(Interval(1.0), n_modes)
    grid = TimeGrid.uniform(1.0, n_t)
    return build_resolvent(kernel or MemoryKernel.fractional(1.0, 0.5), basis, grid)


def test_zero_reaction_reproduces_the_homogeneous_solution():
    ctx = solver_ctx()
    xi = np.array([1.0, -0.5, 0.25, 0.0, 0.0, 0.1])
    sol = picard_solve(ctx, Nonlinearity.zero(), HistoryKernel.zero(), xi)
    assert sol.converged
    assert sol.iterations == 1
    np.testing.assert_allclose(sol.coeffs, ctx.table.omega * xi[None, :], atol=1e-14)
    # state accessor returns the same rows
    np.testing.assert_allclose(sol.state(10).coeffs, sol.coeffs[10])


def test_single_mode_linear_reaction_matches_scalar_resolvent():
    # f(u) = c u on one mode folds into the scalar equation with lam - c
    from rstokes import solve_relaxation

    ctx = solver_ctx(MemoryKernel.zero(), n_modes=1, n_t=2048)
    lam = ctx.basis.eigenvalues[0]
    c = 2.0
    spec = Nonlinearity.linear_diagonal(np.array([c]))
    sol = picard_solve(
        ctx, spec, HistoryKernel.zero(), np.array([1.0]), PicardOptions(tol=1e-12)
    )
    exact = np.exp(-(lam - c) * ctx.grid.nodes)
    assert np.max(np.abs(sol.coeffs[:, 0] - exact)) < 5e-5


def test_damping_weight_changes_metric_not_fixed_point():
    ctx = solver_ctx(n_t=64)
    xi = 0.01 * np.ones(6)
    spec = Nonlinearity.polynomial_power(2.0)
    ell = HistoryKernel.zero()
    plain = picard_solve(ctx, spec, ell, xi, PicardOptions(tol=1e-12))
    damped = picard_solve(ctx, spec, ell, xi, PicardOptions(tol=1e-12, beta=4.0))
    assert plain.converged and damped.converged
    np.testing.assert_allclose(plain.coeffs, damped.coeffs, atol=1e-10)
    assert damped.beta == 4.0


def test_forcing_enters_the_duhamel_term():
    # zero reaction + constant forcing on mode 1 has the closed-form response
    ctx = solver_ctx(MemoryKernel.zero(), n_modes=3, n_t=1024)
    lam = ctx.basis.eigenvalues[0]
    forcing = np.zeros((1025, 3))
    forcing[:, 0] = 1.0
    sol = picard_solve(
        ctx,
        Nonlinearity.zero(),
        HistoryKernel.zero(),
        np.zeros(3),
        PicardOptions(forcing=forcing),
    )
    exact = (1.0 - np.exp(-lam * ctx.grid.nodes)) / lam
    assert np.max(np.abs(sol.coeffs[:, 0] - exact)) < 5e-6


def test_nonconvergence_carries_the_residual_history():
    ctx = solver_ctx(n_t=32)
    spec = Nonlinearity.polynomial_power(2.0, scale=50.0)
    with pytest.raises(NonConvergence) as info:
        picard_solve(
            ctx,
            spec,
            HistoryKernel.zero(),
            np.ones(6),
            PicardOptions(tol=1e-14, max_iter=3),
        )
    assert len(info.value.residuals) == 3


def test_solution_stays_inside_the_selected_ball():
    ctx = solver_ctx(n_t=128)
    spec = Nonlinearity.polynomial_power(2.0, mu=1.0, delta=0.5)
    ell = HistoryKernel.zero()
    xi = np.zeros(6)
    xi[0] = 0.01
    xi_norm = float(hnorm(xi, ctx.basis, 1.0))
    rho = select_invariant_radius(spec, ctx.basis, xi_norm, 0.0, 1.0)
    sol = picard_solve(ctx, spec, ell, xi, PicardOptions(tol=1e-12))
    assert sol.converged
    assert float(np.max(sol.norms(1.0))) <= rho + 1e-12


def test_residual_contraction_on_small_data():
    ctx = solver_ctx(n_t=128)
    spec = Nonlinearity.sum_of(
        Nonlinearity.polynomial_power(2.0), Nonlinearity.advection_history((0.05,))
    )
    ell = HistoryKernel.exponential(1.0, 1.0)
    xi = np.zeros(6)
    xi[0] = 0.01 / np.pi  # H^1 norm 0.01
    sol = picard_solve(ctx, spec, ell, xi, PicardOptions(tol=1e-12))
    assert sol.converged
    res = np.asarray(sol.residuals)
    ratios = res[1:] / res[:-1]
    assert np.all(ratios[:-1] < 0.55)  # the last ratio can dip into roundoff


# -- solvability gates --------------------------------------------------------


def test_small_data_gate_hand_value():
    gate = small_data_gate(0.1, 0.1, 1.0, 1.0, 0.5)
    assert gate.name == "small_data_gate"
    assert abs(gate.value - 0.32) <= 1e-15
    assert gate.threshold == 1.0
    assert gate.passed
    assert not small_data_gate(0.5, 0.0, 0.0, 1.0, 0.5).passed  # 8*0.25 = 2
    with pytest.raises(ValueError):
        small_data_gate(0.1, 0.1, 1.0, -1.0, 0.5)
    with pytest.raises(ValueError):
        small_data_gate(0.1, 0.1, 1.0, 1.0, 0.0)


def test_spectral_gap_gate_hand_value():
    lam1 = float(BASIS.eigenvalues[0])
    gate = spectral_gap_gate(1.0, 0.0, 0.7, lam1)
    assert gate.name == "spectral_gap_gate"
    assert gate.value == 4.0
    assert gate.threshold == lam1
    assert gate.passed  # 4 < pi^2
    assert not spectral_gap_gate(2.0, 0.0, 0.0, lam1).passed  # 16 > pi^2
    with pytest.raises(ValueError):
        spectral_gap_gate(1.0, 0.0, 0.0, 0.0)


def test_gate_decision_prints_its_comparison():
    text = str(small_data_gate(0.1, 0.1, 1.0, 1.0, 0.5))
    assert "small_data_gate" in text
    assert "0.32" in text


def test_invariant_radius_scan():
    spec = Nonlinearity.linear_diagonal(0.01 * np.ones(6))
    rho = select_invariant_radius(spec, BASIS, 0.5, 0.0, 1.0)
    assert rho == 1.0  # the very first candidate 2|xi| already passes
    blowup = Nonlinearity.polynomial_power(2.0, scale=1e6)
    with pytest.raises(ValueError, match="invariant radius"):
        select_invariant_radius(blowup, BASIS, 10.0, 0.0, 1.0, max_doublings=8)


# -- weighted Holder seminorm ---------------------------------------------


def manufactured_solution(coeff_of_t, n_t=256, n_modes=1, mu=0.0):
    grid = TimeGrid.uniform(1.0, n_t)
    basis = build_basis(Interval(1.0), n_modes)
    coeffs = np.zeros((n_t + 1, n_modes))
    coeffs[:, 0] = coeff_of_t(grid.nodes)
    return MildSolution(grid, basis, coeffs, 1, (0.0,), mu, 0.0, True)


def test_holder_seminorm_of_a_linear_ramp():
    # u_1(t) = t in the flat norm: (t/h)^gamma * h peaks at t = h = T/2
    sol = manufactured_solution(lambda t: t)
    report = holder_estimate(sol, gamma=0.4)
    assert report.seminorm == pytest.approx(0.5, rel=1e-12)
    assert report.t_at == pytest.approx(0.5)
    assert report.h_at == pytest.approx(0.5)
    assert report.t_min == pytest.approx(4.0 / 256.0)


def test_holder_weights_constant_history_kernel_exactly():
    sol = manufactured_solution(lambda t: t)
    ell = HistoryKernel.constant(1.0)
    report = holder_estimate(sol, gamma=0.4, ell=ell)
    # increments of 1*|ell| reproduce the ramp's sup; the singular-weight
    # moment t^g int_0^t (t-s)^{-g} ds = t/(1-g) peaks at the horizon
    assert report.ell_star1 == pytest.approx(0.5, rel=1e-12)
    assert report.ell_star2 == pytest.approx(1.0 / 0.6, rel=1e-10)


def test_holder_gate_value_formula():
    sol = manufactured_solution(lambda t: t)
    report = holder_estimate(
        sol, gamma=0.4, ell=HistoryKernel.zero(), state_global=0.05,
        history_global=0.0, delta=0.5,
    )
    expected = 16.0 * beta_fn(0.5, 0.2) * 0.05**2
    assert report.gate_value == pytest.approx(expected, rel=1e-12)
    assert report.gate_passed
    assert report.gamma_in_range


def test_holder_warns_outside_the_admissible_band():
    sol = manufactured_solution(lambda t: t)
    with pytest.warns(UserWarning, match="outside"):
        report = holder_estimate(sol, gamma=0.45, delta=0.95)
    assert not report.gamma_in_range
    # gamma >= 1/2 with gate data: the singular moment diverges
    with pytest.warns(UserWarning, match="outside"):
        report2 = holder_estimate(
            sol, gamma=0.6, state_global=0.1, history_global=0.0, delta=0.5,
        )
    assert report2.gate_value == np.inf
    assert not report2.gate_passed


def test_holder_requires_uniform_grid_and_valid_gamma():
    sol = manufactured_solution(lambda t: t)
    with pytest.raises(ValueError):
        holder_estimate(sol, gamma=0.0)
    graded = TimeGrid.graded(1.0, 16, r=2.0)
    coeffs = np.zeros((17, 1))
    bad = MildSolution(
        graded, build_basis(Interval(1.0), 1), coeffs, 1, (0.0,), 0.0, 0.0, True
    )
    with pytest.raises(ValueError):
        holder_estimate(bad, gamma=0.4)

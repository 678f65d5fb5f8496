import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logspiral.field import AngularField, dissipation, intensity, lp_norm, solve_elliptic
from logspiral.kernel import SpiralParams, kernel_deriv_limits, kernel_deriv_values
from logspiral.transport import (
    CFLError,
    EvolutionConfig,
    admissible_dt,
    classify_longtime,
    periodic_cubic,
    run,
    step,
)

P1 = SpiralParams(1.0, 1)


def bump(params, n, center=np.pi, width=4.0, base=1.0):
    return AngularField.from_function(params, n, lambda t: base + np.exp(-width * (t - center) ** 2))


def smoothed_indicator(params, n, a, b, sharp=40.0):
    return AngularField.from_function(
        params, n, lambda t: 0.5 * (np.tanh(sharp * (t - a)) - np.tanh(sharp * (t - b)))
    )


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"t_end": 0}, {"t_end": 1, "cfl": 1.5}, {"t_end": 1, "method": "euler"}, {"t_end": 1, "dt": -1}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EvolutionConfig(**kw)


class TestInterpolation:
    def test_cubic_exact_on_grid(self):
        v = np.random.default_rng(0).normal(size=32)
        np.testing.assert_allclose(periodic_cubic(v, np.arange(32.0)), v, atol=1e-14)

    def test_cubic_reproduces_cubics_locally(self):
        x = np.arange(64.0)
        f = np.sin(2 * np.pi * x / 64)
        xq = np.array([10.3, 20.7, 40.5])
        np.testing.assert_allclose(periodic_cubic(f, xq), np.sin(2 * np.pi * xq / 64), atol=1e-5)

    def test_global_limiter_respects_bounds(self):
        v = np.zeros(32)
        v[10] = 1.0
        out = periodic_cubic(v, np.arange(32.0) + 0.5, limiter="global", bounds=(0.0, 1.0))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_global_limiter_keeps_interpolant_sum(self):
        rng = np.random.default_rng(1)
        v = np.where(rng.random(64) > 0.5, 1.0, -1.0)
        xq = np.arange(64.0) + rng.uniform(0, 1, 64)
        raw = periodic_cubic(v, xq)
        out = periodic_cubic(v, xq, limiter="global")
        assert raw.max() > 1.0 or raw.min() < -1.0  # the limiter is active
        assert out.min() >= -1.0 - 1e-15 and out.max() <= 1.0 + 1e-15
        assert np.sum(out) == pytest.approx(np.sum(raw), abs=1e-12)


class TestStep:
    @pytest.mark.parametrize("method", ["semi_lagrangian", "spectral_rk4"])
    def test_constant_is_steady(self, method):
        h = AngularField.constant(P1, 64, 0.7)
        np.testing.assert_array_equal(step(h, 0.01, method).values, h.values)

    def test_cfl_violation_reports_admissible_dt(self):
        h = bump(P1, 128)
        adm = admissible_dt(h, 1.0)
        with pytest.raises(CFLError) as exc:
            step(h, 2 * adm)
        assert exc.value.admissible == pytest.approx(adm)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_intensity_decreases(self, seed):
        rng = np.random.default_rng(seed)
        c = rng.normal(size=4)
        h = AngularField.from_function(P1, 256, lambda t: c[0] + c[1] * np.cos(t) + c[2] * np.sin(2 * t) + c[3] * np.cos(3 * t))
        dt = admissible_dt(h, 0.5)
        h1 = step(h, dt)
        predicted = -dt * dissipation(h)
        assert intensity(h1) < intensity(h)
        assert abs(intensity(h1) - intensity(h) - predicted) <= 1e-6 * dt + 0.05 * abs(predicted)

    @pytest.mark.parametrize("method,factor", [("semi_lagrangian", 3.5), ("spectral_rk4", 24.0)])
    def test_richardson_self_convergence(self, method, factor):
        h = bump(P1, 256)
        dt0 = admissible_dt(h, 0.5)
        diffs = []
        for k in range(3):
            dt = dt0 / 2**k
            one = step(h, dt, method)
            two = step(step(h, dt / 2, method), dt / 2, method)
            diffs.append(np.max(np.abs(one.values - two.values)))
        assert diffs[0] / diffs[1] > factor and diffs[1] / diffs[2] > factor


class TestRun:
    def test_constant_trajectory(self):
        traj = run(AngularField.constant(P1, 64, 2.0), EvolutionConfig(t_end=3.0, record_every=1.0))
        assert traj.t.tolist() == pytest.approx([0, 1, 2, 3])
        for s in traj.states:
            np.testing.assert_array_equal(s.values, 2.0)
        assert traj.outcome == "homogenized"

    def test_records_requested_times(self):
        traj = run(bump(P1, 64), EvolutionConfig(t_end=1.0, record_every=0.25, keep_states=False))
        assert traj.t.tolist() == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])
        assert len(traj.states) == 1

    def test_circulation_balance_and_max_principle(self):
        h0 = bump(P1, 512)
        traj = run(h0, EvolutionConfig(t_end=2.0))
        I, D, t = traj.intensity, traj.dissipation, traj.t
        assert np.all(np.diff(I) < 0)
        err = np.abs(np.diff(I) + np.diff(t) * 0.5 * (D[1:] + D[:-1])) / np.diff(t)
        assert err.max() < 1e-3
        lo, hi = h0.values.min(), h0.values.max()
        for s in traj.states:
            assert s.values.min() >= lo - 1e-12 and s.values.max() <= hi + 1e-12

    def test_negative_beta_indicator_gains_intensity(self):
        p = SpiralParams(-1.0, 1)
        traj = run(smoothed_indicator(p, 512, 2.0, 4.0), EvolutionConfig(t_end=5.0, record_every=0.5))
        I = traj.intensity
        assert np.all(np.diff(I) > 0)
        assert I[-1] < 2 * np.pi  # bounded by the maximum value times 2 pi

    def test_methods_agree_on_smooth_data(self):
        h0 = AngularField.from_function(P1, 256, lambda t: np.cos(t) + 0.3 * np.sin(2 * t))
        a = run(h0, EvolutionConfig(t_end=1.0, method="semi_lagrangian")).final
        b = run(h0, EvolutionConfig(t_end=1.0, method="spectral_rk4")).final
        assert lp_norm(a - b, 2) < 1e-4

    @pytest.mark.parametrize("pnorm", [1, 2, 4])
    def test_lp_growth_bound(self, pnorm):
        # d/dt ||h||_p <= (2/p) ||H'||_inf ||h||_p, checked between records
        h0 = AngularField.from_function(SpiralParams(-1.0, 1), 512, lambda t: 1 + 0.8 * np.cos(t))
        traj = run(h0, EvolutionConfig(t_end=2.0, record_every=0.05))
        norms = np.array([lp_norm(s, pnorm) for s in traj.states])
        hp = np.array([np.max(np.abs(solve_elliptic(s)[1].values)) for s in traj.states])
        dt = np.diff(traj.t)
        growth = np.diff(np.log(norms)) / dt
        bound = (2.0 / pnorm) * np.maximum(hp[1:], hp[:-1])
        assert np.all(growth <= bound * 1.01 + 1e-9)

    @pytest.mark.parametrize("beta,m", [(1.0, 1), (-0.5, 2), (3.0, 3)])
    def test_hprime_bounded_by_l1(self, beta, m):
        # H' = K' * h over one period, so sup|H'| <= sup|K'| ||h||_{L1(period)}
        p = SpiralParams(beta, m)
        th = np.linspace(0, p.period, 4001)[1:-1]
        kp_sup = max(np.max(np.abs(kernel_deriv_values(p, th))), *np.abs(kernel_deriv_limits(p)))
        h0 = AngularField.from_function(p, 256, lambda t: 0.3 + np.cos(m * t) + 0.5 * np.sin(2 * m * t))
        traj = run(h0, EvolutionConfig(t_end=1.0, record_every=0.1))
        ratio = np.array(traj.hp_sup) / (traj.lp(1) / m)
        assert np.all(ratio <= kp_sup * (1 + 1e-6))
        assert np.all(ratio > 0)

    def test_mfold_symmetry_preserved(self):
        p1 = SpiralParams(1.0, 1)
        p3 = SpiralParams(1.0, 3)
        f = lambda t: 1 + 0.5 * np.cos(3 * t) + 0.2 * np.sin(6 * t)  # noqa: E731
        full = run(AngularField.from_function(p1, 512, f), EvolutionConfig(t_end=0.5, method="spectral_rk4"))
        red = run(AngularField.from_function(p3, 128, f), EvolutionConfig(t_end=0.5, method="spectral_rk4"))
        assert full.intensity[-1] == pytest.approx(red.intensity[-1], rel=1e-6)

    def test_guard_trips_on_tight_factor(self):
        h0 = AngularField.from_function(P1, 128, lambda t: -1 - 0.5 * np.cos(t))
        traj = run(h0, EvolutionConfig(t_end=5.0, guard_factor=1.0))
        assert traj.outcome == "blowup_suspected"
        assert "L1" in traj.reason
        assert classify_longtime(traj).kind == "finite_blowup"


class TestClassify:
    def test_constant_converges(self):
        h0 = AngularField.constant(P1, 64, 1.5)
        cls = classify_longtime(run(h0, EvolutionConfig(t_end=1.0)))
        assert cls.kind == "converged"
        assert cls.I_plus == pytest.approx(intensity(h0))

    def test_cosine_long_run_homogenizes(self):
        h0 = AngularField.from_function(P1, 256, np.cos)
        traj = run(h0, EvolutionConfig(t_end=50.0, record_every=5.0))
        assert np.all(np.diff(traj.intensity) < 0)
        assert traj.intensity[0] - traj.intensity[-1] > 0
        cls = classify_longtime(traj, tol=0.1)
        assert cls.kind == "converged"
        assert traj.lp(np.inf)[-1] <= 1.0 + 1e-9

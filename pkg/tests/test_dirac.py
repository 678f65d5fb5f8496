import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logspiral.dirac import (
    DiracConfig,
    decay_exponent,
    integrate,
    min_gap,
    random_config,
    rhs,
    sheet_velocity,
    total_intensity_rate,
    velocities,
)
from logspiral.field import dissipation
from logspiral.kernel import SpiralParams, kernel_boundary
from logspiral.selfsimilar import mfold_closed_form, mfold_pole
from logspiral.sheet_limit import MollifierSpec, mollify

P1 = SpiralParams(1.0, 1)
COTH = 1.0 / np.tanh(np.pi)


class TestConfig:
    def test_coincident_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            DiracConfig(P1, [1.0, 1.0], [0.5, 0.5 + 2 * np.pi])

    def test_mfold_coincidence_rejected(self):
        with pytest.raises(ValueError):
            DiracConfig(SpiralParams(1.0, 2), [1.0, 1.0], [0.0, np.pi])

    @pytest.mark.parametrize("I,th", [([], []), ([1.0], [0.0, 1.0]), ([np.inf], [0.0])])
    def test_malformed(self, I, th):
        with pytest.raises(ValueError):
            DiracConfig(P1, I, th)

    def test_total_intensity_counts_copies(self):
        cfg = DiracConfig(SpiralParams(1.0, 3), [1.0, -0.25], [0.1, 1.0])
        assert cfg.total_intensity == pytest.approx(2.25)

    def test_min_gap_wraps(self):
        assert min_gap(P1, [0.1, 2 * np.pi - 0.1]) == pytest.approx(0.2)


class TestVelocity:
    def test_single_atom_beta_one(self):
        H, Hp = sheet_velocity(DiracConfig(P1, [2.0], [0.4]), 0)
        assert abs(H) < 1e-15
        assert Hp == pytest.approx(-2.0 * COTH / 4)

    def test_antipodal_equal_atoms(self):
        H, Hp = velocities(DiracConfig(P1, [1.0, 1.0], [0.3, 0.3 + np.pi]))
        assert Hp[0] == pytest.approx(Hp[1], rel=1e-13)
        assert H[0] == pytest.approx(H[1], rel=1e-13)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_mfold_orbit(self, m):
        p = SpiralParams(0.7, m)
        bd = kernel_boundary(p)
        H, Hp = velocities(DiracConfig(p, [1.5], [0.2]))
        assert H[0] == pytest.approx(1.5 * bd.k0)
        assert Hp[0] == pytest.approx(1.5 * bd.kp0)

    def test_mfold_orbit_equals_explicit_copies(self):
        p3, p1 = SpiralParams(0.7, 3), SpiralParams(0.7, 1)
        reduced = rhs(DiracConfig(p3, [1.0], [0.2]))
        full = rhs(DiracConfig(p1, [1.0] * 3, [0.2 + 2 * np.pi * k / 3 for k in range(3)]))
        np.testing.assert_allclose(reduced[0][0], full[0], rtol=1e-12)
        np.testing.assert_allclose(reduced[1][0], full[1], rtol=1e-12)


class TestRhs:
    def test_single_atom(self):
        dI, dth = rhs(DiracConfig(P1, [1.3], [0.0]))
        assert dI[0] == pytest.approx(-(COTH / 2) * 1.3**2)
        assert abs(dth[0]) < 1e-15

    def test_zero_intensities(self):
        dI, dth = rhs(DiracConfig(P1, [0.0, 0.0], [0.0, 1.0]))
        assert np.all(dI == 0) and np.all(dth == 0)


class TestIntensityRate:
    def test_single_atom(self):
        r = total_intensity_rate(DiracConfig(P1, [0.8], [1.0]))
        expected = 2 * kernel_boundary(P1).kp0 * 0.8**2
        assert r.ode == pytest.approx(expected)
        assert r.identity == pytest.approx(expected)
        assert r.dissipation == pytest.approx(expected, rel=1e-10)

    def test_zero(self):
        r = total_intensity_rate(DiracConfig(P1, [0.0], [1.0]), quadrature=False)
        assert r.ode == 0 and r.identity == 0 and r.dissipation is None

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), m=st.integers(1, 3), beta=st.sampled_from([0.4, 1.0, -2.0]))
    def test_routes_agree(self, seed, m, beta):
        p = SpiralParams(beta, m)
        cfg = random_config(np.random.default_rng(seed), p, 4)
        r = total_intensity_rate(cfg)
        scale = max(1.0, abs(r.ode))
        assert abs(r.ode - r.identity) <= 1e-10 * scale
        assert abs(r.ode - r.dissipation) <= 1e-10 * scale

    def test_matches_mollified_grid_quadrature(self):
        cfg = DiracConfig(P1, [1.0, -0.4, 0.7], [0.5, 2.5, 4.5])
        h = mollify(cfg, MollifierSpec("smooth_bump", 0.01), 8192)
        r = total_intensity_rate(cfg)
        assert -dissipation(h) == pytest.approx(r.ode, abs=1e-2 * abs(r.ode))


class TestIntegrate:
    def test_decaying_atom_closed_form(self):
        cfg = DiracConfig(P1, [1.0], [0.3])
        tr = integrate(cfg, 20.0, rtol=1e-12)
        ts = np.linspace(0, 20, 50)
        I, th = tr.at(ts)
        np.testing.assert_allclose(I[0], 1 / (1 + COTH * ts / 2), rtol=1e-9)
        assert tr.event is None

    def test_negative_atom_blows_up(self):
        tr = integrate(DiracConfig(P1, [-1.0], [0.0]), 10.0, rtol=1e-12)
        T = 2 / COTH
        assert T == pytest.approx(1.99255, abs=1e-5)
        assert tr.event.kind == "blowup"
        assert tr.blew_up
        assert tr.event.blowup_time == pytest.approx(T, rel=1e-2)

    @pytest.mark.parametrize("m,beta,I0", [(2, 0.5, 1.0), (3, 2.0, -1.0), (1, -1.0, 1.0)])
    def test_mfold_orbit_matches_closed_form(self, m, beta, I0):
        p = SpiralParams(beta, m)
        T = mfold_pole(I0, p)
        t_stop = 0.9 * T if T else 10.0
        tr = integrate(DiracConfig(p, [I0], [0.3]), t_stop, rtol=1e-12)
        ts = np.linspace(0, t_stop, 40)
        I, th = tr.at(ts)
        Ie, shift = mfold_closed_form(I0, ts, p)
        np.testing.assert_allclose(I[0], Ie, rtol=1e-8)
        np.testing.assert_allclose(th[0] - 0.3, shift, atol=1e-8)

    def test_collision_event(self):
        # positive atoms drift together in angle and eventually merge
        cfg = DiracConfig(P1, [1.0, 0.5, 0.8], [0.0, 2.0, 4.0])
        tr = integrate(cfg, 1e5, gap_tol=1e-2)
        assert tr.event is not None and tr.event.kind == "collision"
        assert min_gap(P1, tr.angles[-1]) == pytest.approx(1e-2, rel=1e-3)

    @pytest.mark.parametrize("seed", range(6))
    def test_dichotomy_nonpositive_sum_blows_up(self, seed):
        cfg = random_config(np.random.default_rng(seed), P1, 3, sign="nonpositive")
        tr = integrate(cfg, 1e6)
        assert tr.event is not None and tr.event.kind in ("blowup", "overflow")

    def test_positive_atoms_decay(self):
        # antipodal equal atoms form an exact two-fold orbit: I ~ 1/t
        cfg = DiracConfig(P1, [1.0, 1.0], [0.0, np.pi])
        tr = integrate(cfg, 1000.0)
        assert tr.event is None
        assert np.all(np.diff(tr.total_intensity) < 0)
        assert decay_exponent(tr, 100.0, 1000.0) == pytest.approx(-1.0, abs=0.01)

    def test_merging_atoms_relax_to_single_orbit(self):
        # sum I * t tends to the single-atom self-similar value 2 tanh(pi)
        cfg = DiracConfig(P1, [1.0, 0.5, 0.8], [0.0, 2.0, 4.0])
        tr = integrate(cfg, 2e4)
        I, _ = tr.at(2e4)
        assert 2e4 * I.sum() == pytest.approx(2 * np.tanh(np.pi), rel=0.3)

    def test_decay_window_checked(self):
        tr = integrate(DiracConfig(P1, [1.0], [0.0]), 10.0)
        with pytest.raises(ValueError):
            decay_exponent(tr, 5.0, 20.0)


class TestRandomConfig:
    @pytest.mark.parametrize("sign", ["positive", "nonpositive"])
    def test_signs(self, sign):
        rng = np.random.default_rng(0)
        for beta in (1.0, -1.0):
            p = SpiralParams(beta, 1)
            for _ in range(20):
                cfg = random_config(rng, p, 3, sign=sign)
                if sign == "positive":
                    assert np.all(beta * cfg.intensities > 0)
                else:
                    assert beta * cfg.intensities.sum() <= 0

    def test_reproducible(self):
        a = random_config(np.random.default_rng(5), P1, 4)
        b = random_config(np.random.default_rng(5), P1, 4)
        np.testing.assert_array_equal(a.angles, b.angles)
        np.testing.assert_array_equal(a.intensities, b.intensities)

    def test_unknown_sign(self):
        with pytest.raises(ValueError):
            random_config(np.random.default_rng(0), P1, 2, sign="weird")

import numpy as np
import pytest

from logspiral.dirac import DiracConfig, integrate
from logspiral.field import AngularField, intensity, lp_norm
from logspiral.kernel import SpiralParams
from logspiral.sheet_limit import (
    MollifierSpec,
    convergence_study,
    extract_atoms,
    fit_rate,
    min_grid_size,
    mollify,
)
from logspiral.transport import EvolutionConfig, run

BETA_ONE = SpiralParams(1.0, 1)


class TestMollifier:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            MollifierSpec("gaussian", 0.1)
        with pytest.raises(ValueError):
            MollifierSpec("patch", 0.0)

    @pytest.mark.parametrize("shape", ["patch", "smooth_bump"])
    def test_cdf_is_unit_mass(self, shape):
        spec = MollifierSpec(shape, 0.1)
        assert spec.cdf(-1.0) == pytest.approx(0.0, abs=1e-15)
        assert spec.cdf(1.0) == pytest.approx(1.0, abs=1e-15)
        assert spec.cdf(0.0) == pytest.approx(0.5, abs=1e-15)
        x = np.linspace(-1, 1, 101)
        assert np.all(np.diff(spec.cdf(x)) >= 0)

    def test_patch_height(self):
        cfg = DiracConfig(BETA_ONE, [2.0], [np.pi])
        eps = 0.1
        h = mollify(cfg, MollifierSpec("patch", eps), 1024)
        # I/(2 eps) in the interior of the patch
        assert np.max(h.values) == pytest.approx(10.0, rel=1e-12)

    @pytest.mark.parametrize("shape", ["patch", "smooth_bump"])
    def test_exact_mass(self, shape):
        cfg = DiracConfig(BETA_ONE, [1.0, -0.4, 0.7], [0.0, 2.0, 4.0])
        h = mollify(cfg, MollifierSpec(shape, 0.05), 2048)
        assert intensity(h) == pytest.approx(1.3, rel=1e-13)
        est = extract_atoms(h, cfg.angles, 0.5)
        np.testing.assert_allclose([e.intensity for e in est], cfg.intensities, rtol=1e-12)

    def test_mfold_mass_on_fundamental_domain(self):
        p = SpiralParams(1.0, 3)
        cfg = DiracConfig(p, [1.0], [0.5])
        h = mollify(cfg, MollifierSpec("smooth_bump", 0.05), 2048)
        # one atom per period, m periods on the circle
        assert intensity(h) == pytest.approx(3.0, rel=1e-12)

    def test_resolution_guard(self):
        cfg = DiracConfig(BETA_ONE, [1.0], [0.0])
        with pytest.raises(ValueError, match="resolution guard"):
            mollify(cfg, MollifierSpec("patch", 0.1), 512)
        assert min_grid_size(0.1) == 1024
        assert min_grid_size(0.05) == 2048
        mollify(cfg, MollifierSpec("patch", 0.1), min_grid_size(0.1))

    def test_overlap_rejected(self):
        cfg = DiracConfig(BETA_ONE, [1.0, 1.0], [0.0, 0.15])
        with pytest.raises(ValueError, match="overlap"):
            mollify(cfg, MollifierSpec("patch", 0.1), 1024)

    def test_overlap_across_seam_rejected(self):
        cfg = DiracConfig(BETA_ONE, [1.0, 1.0], [0.05, 2 * np.pi - 0.05])
        with pytest.raises(ValueError, match="overlap"):
            mollify(cfg, MollifierSpec("patch", 0.1), 1024)


class TestExtraction:
    def test_symmetric_bump_centre(self):
        cfg = DiracConfig(BETA_ONE, [1.5], [np.pi])
        h = mollify(cfg, MollifierSpec("smooth_bump", 0.1), 1024)
        (est,) = extract_atoms(h, [np.pi + 0.05], 0.5)
        assert est.theta == pytest.approx(np.pi, abs=1e-12)
        assert est.intensity == pytest.approx(1.5, rel=1e-12)
        assert not est.escaped

    def test_window_across_seam(self):
        cfg = DiracConfig(BETA_ONE, [1.0], [0.02])
        h = mollify(cfg, MollifierSpec("smooth_bump", 0.1), 1024)
        (est,) = extract_atoms(h, [0.0], 0.5)
        # off-grid centre: the discrete centre of mass is accurate to O(dx^k)
        assert est.theta == pytest.approx(0.02, abs=1e-8)
        assert est.intensity == pytest.approx(1.0, rel=1e-12)

    def test_escape_flag(self):
        h = AngularField(BETA_ONE, np.ones(256))
        (est,) = extract_atoms(h, [np.pi], 0.3)
        assert est.escaped

    def test_lost_mass_raises(self):
        cfg = DiracConfig(BETA_ONE, [1.0], [0.0])
        h = mollify(cfg, MollifierSpec("patch", 0.1), 1024)
        with pytest.raises(ValueError, match="lost its mass"):
            extract_atoms(h, [np.pi], 0.3, mass_floor=1e-8)


class TestRates:
    def test_exact_power_law(self):
        eps = np.array([0.1, 0.05, 0.025, 0.0125])
        fit = fit_rate(eps, 3.0 * eps**1.5)
        assert fit.order == pytest.approx(1.5, abs=1e-12)
        assert fit.constant == pytest.approx(3.0, rel=1e-10)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_noisy_fit_r2_below_one(self):
        eps = np.array([0.1, 0.05, 0.025])
        fit = fit_rate(eps, eps * np.array([1.0, 1.3, 0.8]))
        assert fit.r2 < 1.0

    def test_eps_must_decrease(self):
        cfg = DiracConfig(BETA_ONE, [1.0, 1.0], [0.0, np.pi])
        with pytest.raises(ValueError, match="decreasing"):
            convergence_study(cfg, [0.1, 0.2], 0.1)

    def test_guard_on_fixed_n(self):
        cfg = DiracConfig(BETA_ONE, [1.0, 1.0], [0.0, np.pi])
        with pytest.raises(ValueError, match="resolution guard"):
            convergence_study(cfg, [0.2, 0.1], 0.1, n=512)

    def test_ode_stopping_rejected(self):
        cfg = DiracConfig(BETA_ONE, [-1.0], [0.0])
        with pytest.raises(ValueError, match="stops before"):
            convergence_study(cfg, [0.2, 0.1], 5.0)

    def test_errors_vanish_at_start_and_shrink_with_epsilon(self):
        cfg = DiracConfig(BETA_ONE, [1.0, 0.5], [0.0, 2.5])
        rep = convergence_study(cfg, [0.2, 0.1, 0.05], 0.3, n_samples=4, workers=3)
        for r in rep.results:
            tab = r.table()
            assert tab[0, 1] < 1e-8 and tab[0, 2] < 1e-12
            assert r.max_edge_fraction < 1e-3
            assert r.mass_mismatch < 1e-5  # spectral tails outside the windows
        ea = [r.angle_error for r in rep.results]
        ei = [r.intensity_error for r in rep.results]
        assert ea[0] > ea[1] > ea[2]
        assert ei[0] > ei[1] > ei[2]
        assert rep.angle_rate.order > 0.7
        assert rep.intensity_rate.order > 0.7


def test_negative_atom_l1_grows_as_width_shrinks():
    cfg = DiracConfig(BETA_ONE, [-1.0], [0.0])
    ode = integrate(cfg, 10.0)
    assert ode.blew_up
    t_star = ode.event.blowup_time
    l1 = []
    for eps in (0.2, 0.1, 0.05):
        h0 = mollify(cfg, MollifierSpec("patch", eps), min_grid_size(eps))
        traj = run(h0, EvolutionConfig(t_end=t_star, keep_states=False))
        assert traj.outcome != "blowup_suspected" or eps == 0.05
        l1.append(lp_norm(traj.final, 1))
    assert l1[0] < l1[1] < l1[2]
    slopes = -np.diff(np.log(l1)) / np.diff(np.log([0.2, 0.1, 0.05]))
    assert np.all(slopes > 0.5)

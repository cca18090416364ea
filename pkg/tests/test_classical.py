import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import C1, RESONANT_RABI, large_ratio, params
from rabistark import classical
from rabistark.classical import (chaotic_area_fraction, integrate, lift_seed, lyapunov_estimate,
                                 poincare_section, section_footprint, section_portrait, visited_cells)
from rabistark.errors import EnergyDriftError, SingularityError
from rabistark.model import ModelParams, PhasePoint, hcl_energy


def test_origin_is_constant():
    tr = integrate(large_ratio(-0.3), (0, 0, 0, 0), t_end=10.0)
    assert np.all(tr.states == 0.0)
    assert tr.times[-1] == 10.0


def test_energy_budget_large_ratio():
    par = large_ratio(-0.3)
    tr = integrate(par, lift_seed(par, 7.0, 0.0, -0.9), t_end=500.0, tol=1e-10)
    assert tr.relative_drift < 1e-8
    assert np.all(np.diff(tr.times) > 0)


def test_drift_budget_enforced_on_samples():
    tr = integrate(RESONANT_RABI, C1, t_end=200.0, tol=1e-9)
    e = np.array([hcl_energy(RESONANT_RABI, s) for s in tr.states])
    assert np.max(np.abs(e - e[0])) / max(1.0, abs(e[0])) <= 100 * 1e-9


def test_impossible_budget_raises():
    with pytest.raises(EnergyDriftError):
        integrate(large_ratio(0.0), lift_seed(large_ratio(0.0), 7.0, 0.0, -0.9), t_end=200.0, tol=1e-6,
                  drift_factor=1e-6)


def test_self_convergence():
    par = large_ratio(0.3)
    init = lift_seed(par, 7.0, 0.3, -0.5)
    t = np.linspace(0, 20, 81)
    ref = integrate(par, init, t_end=20.0, tol=1e-13)(t)
    errs = [np.max(np.abs(integrate(par, init, t_end=20.0, tol=tol, drift_factor=1e12)(t) - ref))
            for tol in (1e-6, 1e-8, 1e-10)]
    assert errs[0] > errs[1] > errs[2]


def test_dense_output_hits_steps():
    tr = integrate(RESONANT_RABI, C1, t_end=30.0)
    assert np.allclose(tr(tr.times[::7]), tr.states[::7], atol=1e-12)


# seeds on regular islands; on chaotic orbits round-off grows like exp(lambda t)
REGULAR = {-0.3: (-1.2, -0.6), 0.0: (0.6, 1.2), 0.3: (0.0, -0.3)}


@pytest.mark.parametrize("U", sorted(REGULAR))
def test_time_reversal(U):
    par = large_ratio(U)
    init = lift_seed(par, 7.0, *REGULAR[U])
    fwd = integrate(par, init, t_end=50.0, tol=1e-10).states[-1]
    q1, p1, q2, p2 = fwd
    back = integrate(par, (q1, -p1, q2, -p2), t_end=50.0, tol=1e-10).states[-1]
    assert np.allclose(back * [1, -1, 1, -1], init.as_array(), atol=1e-6)


def test_singularity_reports_time():
    # strong coupling drives the atom onto the pole, where the canonical chart breaks
    par = ModelParams(1.0, 1.0, 3.0, 0.0)
    with pytest.raises(SingularityError) as exc:
        integrate(par, (0.0, 1.4, 1.0, 0.0), t_end=50.0, margin=1e-2)
    assert 0.0 < exc.value.t <= 50.0


def test_deterministic():
    a = integrate(RESONANT_RABI, C1, t_end=50.0)
    b = integrate(RESONANT_RABI, C1, t_end=50.0)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)


class TestSection:
    def test_seed_on_section_is_first_crossing(self):
        cr = poincare_section(RESONANT_RABI, C1, t_end=100.0)
        assert cr[0].t == 0.0 and (cr[0].q1, cr[0].p1) == (C1.q1, C1.p1)

    def test_tangential_start_not_recorded(self):
        cr = poincare_section(RESONANT_RABI, (0.5, -0.2, 0.0, 0.0), t_end=30.0)
        assert all(c.t > 0 for c in cr)

    @given(params(g_max=1.0), st.floats(0.0, 1.3), st.floats(-1.0, 1.0))
    @settings(max_examples=15)
    def test_crossings_refined(self, par, q1, p1):
        if q1 * q1 + p1 * p1 >= 1.9:
            return
        E = hcl_energy(par, (q1, p1, 0.0, 1.0))
        try:
            cr = poincare_section(par, (q1, p1, 0.0, 1.0), t_end=60.0, tol=1e-9)
        except (SingularityError, EnergyDriftError):
            return
        ts = [c.t for c in cr]
        assert ts == sorted(ts)
        for c in cr:
            assert abs(c.q2) < 1e-10 and c.p2 > 0
            assert abs(c.energy - E) < 1e-6 * max(1.0, abs(E))

    @staticmethod
    def _radial_jump(cr):
        """Largest radius jump between angular neighbours about the centroid."""
        pts = np.array([(c.q1, c.p1) for c in cr])
        d = pts - pts.mean(axis=0)
        order = np.argsort(np.arctan2(d[:, 1], d[:, 0]))
        rad = np.hypot(d[:, 0], d[:, 1])[order]
        return float(np.max(np.abs(np.diff(np.append(rad, rad[0])))))

    def test_island_orbit_is_a_ring(self):
        # a regular seed traces a closed curve: radius about the centre varies smoothly with angle,
        # while a chaotic seed scatters over an area
        par = large_ratio(0.0)
        ring = poincare_section(par, lift_seed(par, 7.0, *REGULAR[0.0]), t_end=500.0, max_crossings=300)
        sea = poincare_section(par, lift_seed(par, 7.0, 0.3, 0.3), t_end=500.0, max_crossings=300)
        assert len(ring) > 100 and len(sea) > 40
        assert self._radial_jump(ring) < 0.05 < self._radial_jump(sea)

    def test_max_crossings(self):
        cr = poincare_section(RESONANT_RABI, C1, t_end=1000.0, max_crossings=5)
        assert len(cr) == 5


class TestPortrait:
    def test_below_minimum_all_skipped(self):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            por = section_portrait(RESONANT_RABI, -5.0, [(0, 0), (0.5, 0.5)], t_end=10.0)
        assert por.crossings == [] and set(por.skipped) == {0, 1}
        assert all(v == "off-surface" for v in por.skipped.values())
        assert any(issubclass(x.category, RuntimeWarning) for x in w)

    def test_single_seed_equals_section(self):
        por = section_portrait(RESONANT_RABI, 1.3, [(0.0, -0.9)], t_end=100.0)
        cr = poincare_section(RESONANT_RABI, C1.__class__(0.0, -0.9, 0.0, lift_seed(RESONANT_RABI, 1.3, 0.0, -0.9).p2),
                              t_end=100.0, max_crossings=classical.DEFAULT_MAX_CROSSINGS)
        assert [(c.t, c.q1, c.p1) for c in por.crossings] == [(c.t, c.q1, c.p1) for c in cr]

    def test_worker_count_does_not_matter(self):
        seeds = [(0.0, -0.9), (0.3, 0.2), (-0.5, 0.4), (0.8, 0.1)]
        a = section_portrait(RESONANT_RABI, 1.3, seeds, t_end=80.0, workers=1)
        b = section_portrait(RESONANT_RABI, 1.3, seeds, t_end=80.0, workers=3)
        assert a.crossings == b.crossings

    def test_area_fraction_bounds(self):
        por = section_portrait(RESONANT_RABI, 1.3, [(0.0, -0.9), (0.5, 0.5)], t_end=100.0)
        fp = section_footprint(RESONANT_RABI, 1.3, 40)
        f = chaotic_area_fraction(por, [0, 1], n_cells=40, footprint=fp)
        assert 0.0 < f <= 1.0
        assert chaotic_area_fraction(por, [], n_cells=40, footprint=fp) == 0.0
        assert visited_cells(por, None, 40).sum() >= visited_cells(por, [0], 40).sum()


class TestLyapunov:
    def test_stable_origin(self):
        # with omega (omega0 - U) > 4 g^2 the origin is elliptic; the estimate decays like log(t)/t
        lam = lyapunov_estimate(RESONANT_RABI, (0, 0, 0, 0), t_end=2000.0)
        assert 0.0 <= lam < 5e-3

    def test_regular_island_large_ratio(self):
        par = large_ratio(0.3)
        assert lyapunov_estimate(par, lift_seed(par, 7.0, *REGULAR[0.3])) < classical.LYAP_THRESHOLD

    def test_chaotic_sea_large_ratio(self):
        par = large_ratio(-0.3)
        assert lyapunov_estimate(par, lift_seed(par, 7.0, 0.9, 0.0)) > classical.LYAP_THRESHOLD

    def test_regular_decays(self):
        par = large_ratio(0.3)
        init = lift_seed(par, 7.0, *REGULAR[0.3])
        assert lyapunov_estimate(par, init, t_end=4000.0) < lyapunov_estimate(par, init, t_end=500.0)

"""Steady-state and propagation checks against closed-form decay laws."""

import numpy as np
import pytest

from ionpair import atom, dynamics
from ionpair.params import ExperimentParams, TWO_PI, get_preset
from ionpair.dynamics import (DegenerateSteadyStateError, NumericalError,
                              populations, propagate, steady_state)


def _decay_only(gamma_sp=TWO_PI * 20.7e6, gamma_dp=TWO_PI * 1.69e6):
    return ExperimentParams(omega_397=0.0, omega_866=0.0, delta_397=0.0,
                            delta_866=0.0, b_field=3.5,
                            gamma_sp=gamma_sp, gamma_dp=gamma_dp)


class TestPureDecay:
    def test_exponential_p_decay_and_branching(self):
        """Start in P+1/2; closed form: rho_PP = exp(-G t), ground levels fill
        according to branching fractions."""
        p = _decay_only()
        lv = atom.build_liouvillian(p)
        g_tot = p.gamma_sp + p.gamma_dp
        rho0 = np.zeros((8, 8), complex)
        rho0[atom.P_PLUS, atom.P_PLUS] = 1.0
        grid = np.linspace(0.0, 5.0 / g_tot, 40)
        pops = populations(propagate(lv, rho0, grid))
        decay = np.exp(-g_tot * grid)
        assert pops[:, atom.P_PLUS] == pytest.approx(decay, abs=1e-9)
        # branching out of P+1/2: S gets 2/3, 1/3 of gamma_sp;
        # D-1/2, D+1/2, D+3/2 get 1/6, 1/3, 1/2 of gamma_dp
        filled = 1.0 - decay
        assert pops[:, atom.S_MINUS] == pytest.approx(
            (2 / 3) * (p.gamma_sp / g_tot) * filled, abs=1e-9)
        assert pops[:, atom.S_PLUS] == pytest.approx(
            (1 / 3) * (p.gamma_sp / g_tot) * filled, abs=1e-9)
        assert pops[:, atom.D_M12] == pytest.approx(
            (1 / 6) * (p.gamma_dp / g_tot) * filled, abs=1e-9)
        assert pops[:, atom.D_P32] == pytest.approx(
            (1 / 2) * (p.gamma_dp / g_tot) * filled, abs=1e-9)
        assert pops[:, atom.D_M32] == pytest.approx(np.zeros(40), abs=1e-12)

    def test_coherence_decays_at_half_total_rate(self):
        p = _decay_only()
        lv = atom.build_liouvillian(p)
        g_tot = p.gamma_sp + p.gamma_dp
        rho0 = np.zeros((8, 8), complex)
        rho0[atom.S_MINUS, atom.S_MINUS] = 0.5
        rho0[atom.P_MINUS, atom.P_MINUS] = 0.5
        rho0[atom.S_MINUS, atom.P_MINUS] = 0.4
        rho0[atom.P_MINUS, atom.S_MINUS] = 0.4
        grid = np.linspace(0.0, 3.0 / g_tot, 16)
        states = propagate(lv, rho0, grid)
        coh = states[:, atom.S_MINUS, atom.P_MINUS]
        assert np.abs(coh) == pytest.approx(0.4 * np.exp(-0.5 * g_tot * grid),
                                            abs=1e-9)


class TestPropagate:
    def test_semigroup_property(self):
        lv = atom.build_liouvillian(get_preset("weak"))
        rho0 = np.zeros((8, 8), complex)
        rho0[1, 1] = 1.0
        t = 80e-9
        one = propagate(lv, rho0, np.array([0.0, t]))[-1]
        two = propagate(lv, rho0, np.array([0.0, 0.3 * t, t]))[-1]
        assert np.allclose(one, two, atol=1e-12)

    def test_positivity_and_trace_on_long_run(self):
        lv = atom.build_liouvillian(get_preset("strong"))
        rho0 = np.zeros((8, 8), complex)
        rho0[0, 0] = 1.0
        grid = np.arange(0.0, 4000e-9, 2e-9)
        states = propagate(lv, rho0, grid)
        traces = np.einsum("kii->k", states).real
        assert np.abs(traces - 1.0).max() < 1e-10
        eigs = np.linalg.eigvalsh(states[::100])
        assert eigs.min() > -1e-10

    def test_relaxes_to_steady_state(self):
        lv = atom.build_liouvillian(get_preset("strong"))
        rss = steady_state(lv)
        rho0 = np.zeros((8, 8), complex)
        rho0[1, 1] = 1.0
        final = propagate(lv, rho0, np.array([0.0, 40e-6]))[-1]
        assert np.allclose(final, rss, atol=1e-8)

    def test_grid_validation(self):
        lv = atom.build_liouvillian(get_preset("weak"))
        rho0 = np.eye(8, dtype=complex) / 8
        with pytest.raises(ValueError):
            propagate(lv, rho0, np.array([1e-9, 2e-9]))  # must start at 0
        with pytest.raises(ValueError):
            propagate(lv, rho0, np.array([0.0, 2e-9, 1e-9]))
        with pytest.raises(ValueError):
            propagate(lv, rho0, np.array([]))

    def test_rho0_validation(self):
        lv = atom.build_liouvillian(get_preset("weak"))
        with pytest.raises(ValueError):
            propagate(lv, np.eye(8) * 2.0, np.array([0.0, 1e-9]))
        with pytest.raises(ValueError):
            propagate(lv, np.eye(4), np.array([0.0, 1e-9]))


class TestSteadyState:
    def test_residual_and_trace(self):
        for name in ("weak", "strong", "spectrum"):
            lv = atom.build_liouvillian(get_preset(name))
            rss = steady_state(lv)
            resid = np.linalg.norm(lv.matrix @ rss.reshape(-1))
            resid /= np.linalg.norm(lv.matrix, ord=np.inf)
            assert resid < 1e-10
            assert np.trace(rss).real == pytest.approx(1.0, abs=1e-12)
            assert np.allclose(rss, rss.conj().T)
            assert np.linalg.eigvalsh(rss).min() > -1e-12

    def test_frozen_excited_populations(self):
        """Values frozen from an independently written prototype of the
        same physics; regression anchors for everything downstream."""
        lv = atom.build_liouvillian(get_preset("weak"))
        rss = steady_state(lv)
        assert rss[2, 2].real == pytest.approx(0.0069562, rel=1e-4)
        assert rss[3, 3].real == pytest.approx(0.0069562, rel=1e-4)
        lv = atom.build_liouvillian(get_preset("strong"))
        rss = steady_state(lv)
        assert rss[2, 2].real == pytest.approx(0.074253, rel=1e-4)
        assert rss[3, 3].real == pytest.approx(0.074253, rel=1e-4)

    def test_sigma_symmetry_of_perpendicular_drive(self):
        # equal sigma+/sigma- amplitudes pin the two P populations equal
        lv = atom.build_liouvillian(get_preset("weak"))
        rss = steady_state(lv)
        assert rss[2, 2].real == pytest.approx(rss[3, 3].real, rel=1e-9)

    def test_pure_decay_steady_state_not_unique(self):
        # with no drives every ground mixture is stationary
        lv = atom.build_liouvillian(_decay_only())
        with pytest.raises(DegenerateSteadyStateError):
            steady_state(lv, check_unique=True)

    def test_decoupled_d_manifold_detected(self):
        # no repumper and no D decay: D populations never move
        p = ExperimentParams(omega_397=TWO_PI * 5e6, omega_866=0.0,
                             delta_397=0.0, delta_866=0.0, b_field=3.5,
                             gamma_dp=0.0)
        lv = atom.build_liouvillian(p)
        with pytest.raises(DegenerateSteadyStateError):
            steady_state(lv, check_unique=True)

    def test_unique_steady_state_passes_svd_check(self):
        lv = atom.build_liouvillian(get_preset("weak"))
        rss = steady_state(lv, check_unique=True)
        assert np.trace(rss).real == pytest.approx(1.0)

    def test_error_type_hierarchy(self):
        assert issubclass(DegenerateSteadyStateError, NumericalError)

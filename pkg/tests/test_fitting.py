"""Fit round trips on synthetic data with known ground truth."""

import math

import numpy as np
import pytest

from ionpair.correlations import ErrorModel, apply_error_model, \
    excitation_spectrum, g2_pair
from ionpair.fitting import DataSet, FitResult, fit_g2_joint, fit_spectrum
from ionpair.params import TWO_PI, get_preset


class TestDataSet:
    def test_default_err_is_poisson(self):
        d = DataSet("spectrum", [0.0, 1.0], [100.0, 0.25])
        assert d.err[0] == pytest.approx(10.0)
        assert d.err[1] == 1.0  # floor at one count

    def test_kinds(self):
        for kind in ("spectrum", "total", "sigma-|sigma+", "sigma+|sigma+"):
            DataSet(kind, [0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            DataSet("sigma-|pi", [0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            DataSet("g2", [0.0, 1.0], [1.0, 2.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            DataSet("spectrum", [0.0, 1.0], [1.0])
        with pytest.raises(ValueError):
            DataSet("spectrum", [0.0, np.nan], [1.0, 2.0])
        with pytest.raises(ValueError):
            DataSet("spectrum", [0.0, 1.0], [1.0, 2.0], err=[1.0, 0.0])
        with pytest.raises(ValueError):
            DataSet("total", [-1e-9, 1e-9], [1.0, 2.0])
        with pytest.raises(ValueError):
            DataSet("total", [1e-9, 1e-9], [1.0, 2.0])


@pytest.fixture(scope="module")
def spectrum_truth():
    # counting statistics chosen so the dip widths actually resolve
    # omega_866 against the (omega_866, scale) ridge
    truth = get_preset("spectrum")
    grid = np.linspace(-TWO_PI * 30e6, TWO_PI * 30e6, 161)
    scale, background = 64000.0, 50.0
    clean = excitation_spectrum(truth, grid, scale=scale,
                                background=background).values
    rng = np.random.default_rng(99)
    noisy = clean + rng.standard_normal(grid.size) * np.sqrt(clean)
    data = DataSet("spectrum", grid, noisy, err=np.sqrt(clean))
    return truth, data, scale, background


class TestFitSpectrum:
    def test_recovers_rabi_and_field(self, spectrum_truth):
        truth, data, scale, background = spectrum_truth
        init = truth.replace(omega_866=truth.omega_866 * 1.2, b_field=3.0)
        res = fit_spectrum(data, init,
                           free=("omega_866", "b_field", "scale",
                                 "background"),
                           restarts=3, maxfev=800, seed=1)
        assert res.converged
        assert res.params["omega_866"] == pytest.approx(truth.omega_866,
                                                        rel=0.03)
        assert res.params["b_field"] == pytest.approx(truth.b_field,
                                                      rel=0.08)
        assert res.params["scale"] == pytest.approx(scale, rel=0.1)
        assert res.reduced_chi2() < 1.5
        assert res.experiment.omega_866 == res.params["omega_866"]

    def test_sigma_brackets_truth(self, spectrum_truth):
        truth, data, scale, background = spectrum_truth
        init = truth.replace(omega_866=truth.omega_866 * 1.2, b_field=3.0)
        res = fit_spectrum(data, init,
                           free=("omega_866", "b_field", "scale",
                                 "background"),
                           restarts=3, maxfev=800, seed=1)
        assert res.sigma is not None
        assert set(res.sigma) == set(res.params)
        assert all(v > 0 for v in res.sigma.values())
        pull = abs(res.params["omega_866"] - truth.omega_866) \
            / res.sigma["omega_866"]
        assert pull < 5.0
        assert res.cov.shape == (4, 4)

    def test_affine_only_is_a_linear_solve(self, spectrum_truth):
        truth, data, scale, background = spectrum_truth
        res = fit_spectrum(data, truth, free=("scale", "background"),
                           restarts=1)
        assert res.nfev == 1
        assert res.params["scale"] == pytest.approx(scale, rel=0.05)
        assert res.params["background"] == pytest.approx(background, abs=15.0)
        assert res.dof == len(data) - 2

    def test_rejects_wrong_kind_and_names(self, spectrum_truth):
        truth, data, _, _ = spectrum_truth
        g2data = DataSet("sigma-|sigma+", [0.0, 1e-9], [1.0, 2.0])
        with pytest.raises(ValueError):
            fit_spectrum(g2data, truth)
        with pytest.raises(ValueError):
            fit_spectrum(data, truth, free=("eps_init",))
        with pytest.raises(ValueError):
            fit_spectrum(data, truth, free=())
        with pytest.raises(ValueError):
            fit_spectrum(data, truth, free=("scale", "scale"))


@pytest.fixture(scope="module")
def g2_truth():
    truth = get_preset("weak")
    grid = np.arange(0.0, 400e-9, 2.0e-9)
    minus, plus = g2_pair(truth, "sigma-", grid)
    rng = np.random.default_rng(7)
    sig = 0.25
    sets = []
    for curve, kind in ((minus, "sigma-|sigma-"), (plus, "sigma-|sigma+")):
        y = curve.values + sig * rng.standard_normal(grid.size)
        sets.append(DataSet(kind, grid, y, err=np.full(grid.size, sig)))
    return truth, sets


class TestFitG2Joint:
    def test_joint_recovers_shared_rabi(self, g2_truth):
        truth, sets = g2_truth
        init = truth.replace(omega_397=truth.omega_397 * 1.25,
                             omega_866=truth.omega_866 * 0.8)
        res = fit_g2_joint(sets, init, free=("omega_397", "omega_866"),
                           restarts=2, maxfev=400, seed=3)
        assert res.converged
        assert res.params["omega_397"] == pytest.approx(truth.omega_397,
                                                        rel=0.03)
        assert res.params["omega_866"] == pytest.approx(truth.omega_866,
                                                        rel=0.10)
        assert 0.5 < res.reduced_chi2() < 1.5
        assert res.errors is None
        assert res.dof == 2 * len(sets[0]) - 2

    def test_recovers_error_model(self):
        truth = get_preset("weak")
        em_true = ErrorModel(eps_init=0.10, eps_minus=0.05, eps_plus=0.05)
        grid = np.arange(0.0, 300e-9, 3.0e-9)
        minus, plus = apply_error_model(truth, em_true, grid, "sigma-")
        sig = 0.02
        sets = [DataSet("sigma-|sigma-", grid, minus.values,
                        err=np.full(grid.size, sig)),
                DataSet("sigma-|sigma+", grid, plus.values,
                        err=np.full(grid.size, sig))]
        res = fit_g2_joint(sets, truth, free=("eps_init", "eps_minus"),
                           errors=ErrorModel(eps_plus=0.05),
                           restarts=2, maxfev=400, seed=5)
        assert res.errors is not None
        assert res.errors.eps_plus == 0.05  # held fixed
        assert res.params["eps_init"] == pytest.approx(0.10, abs=0.02)
        assert res.params["eps_minus"] == pytest.approx(0.05, abs=0.02)
        assert res.chi2 < res.dof

    def test_grid_without_zero_is_accepted(self):
        truth = get_preset("weak")
        grid = np.arange(1, 60) * 5e-9
        curve = g2_pair(truth, "sigma-", np.concatenate([[0.0], grid]))[1]
        data = DataSet("sigma-|sigma+", grid, curve.values[1:],
                       err=np.full(grid.size, 0.05))
        res = fit_g2_joint(data, truth.replace(
            omega_397=truth.omega_397 * 1.1), free=("omega_397",),
            restarts=1, maxfev=200, seed=1)
        assert res.params["omega_397"] == pytest.approx(truth.omega_397,
                                                        rel=0.02)

    def test_rejects_bad_input(self, g2_truth):
        truth, sets = g2_truth
        sdata = DataSet("spectrum", [0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            fit_g2_joint([sdata], truth)
        with pytest.raises(ValueError):
            fit_g2_joint(sets, truth, free=("scale",))
        with pytest.raises(ValueError):
            fit_g2_joint([], truth)

"""Least-squares parameter estimation from measured curves.

Physics parameters enter only through the eight-level model, so every
objective evaluation re-solves the master equation.  Fits therefore run
Nelder-Mead over a small set of named free parameters, in rescaled
coordinates so frequencies (1e8 rad/s) and angles (order 1) live on the
same footing.  For spectra the affine nuisance pair (scale, background)
is profiled out analytically at every step instead of being searched.
Restarts from perturbed starting points guard against local minima;
uncertainties come from the curvature of chi^2 at the optimum,
cov = 2 H^-1 with H the finite-difference Hessian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .correlations import (SIGMA_MINUS, SIGMA_PLUS, ErrorModel,
                           apply_error_model, excitation_spectrum, g2_pair,
                           g2_total)
from .dynamics import NumericalError
from .params import TWO_PI, ExperimentParams

PHYSICS_PARAMS = ("omega_397", "omega_866", "delta_397", "delta_866",
                  "b_field", "alpha_397", "alpha_866")
AFFINE_PARAMS = ("scale", "background")
ERROR_PARAMS = ("eps_init", "eps_minus", "eps_plus")

_BOUNDS = {
    "omega_397": (0.0, math.inf),
    "omega_866": (0.0, math.inf),
    "delta_397": (-math.inf, math.inf),
    "delta_866": (-math.inf, math.inf),
    "b_field": (0.0, math.inf),
    "alpha_397": (0.0, math.pi),
    "alpha_866": (0.0, math.pi),
    "scale": (0.0, math.inf),
    "background": (0.0, math.inf),
    "eps_init": (0.0, 0.5),
    "eps_minus": (0.0, 0.5),
    "eps_plus": (0.0, 0.5),
}

# internal optimizer units: frequencies in 2pi MHz, everything else native
_UNIT = {
    "omega_397": TWO_PI * 1e6, "omega_866": TWO_PI * 1e6,
    "delta_397": TWO_PI * 1e6, "delta_866": TWO_PI * 1e6,
    "b_field": 1.0, "alpha_397": 1.0, "alpha_866": 1.0,
    "eps_init": 1.0, "eps_minus": 1.0, "eps_plus": 1.0,
}

# additive spread used when drawing restart points
_RESTART_SCALE = {
    "omega_397": TWO_PI * 2e6, "omega_866": TWO_PI * 0.5e6,
    "delta_397": TWO_PI * 3e6, "delta_866": TWO_PI * 3e6,
    "b_field": 0.5, "alpha_397": 0.1 * math.pi, "alpha_866": 0.1 * math.pi,
    "eps_init": 0.03, "eps_minus": 0.03, "eps_plus": 0.03,
}


@dataclass
class DataSet:
    """One measured curve.

    kind: "spectrum" (x = repumper detuning in rad/s, y = counts),
          "total" (x = delay in s, y = polarization-blind g2), or a
          conditioned pair label "first|second" such as "sigma-|sigma+".
    err:  one-sigma uncertainty per point; defaults to the Poisson
          counting estimate sqrt(max(y, 1)).
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    err: np.ndarray | None = None

    def __post_init__(self):
        _parse_kind(self.kind)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ValueError("x and y must be aligned 1-D arrays")
        if self.x.size < 2:
            raise ValueError("need at least two data points")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("data must be finite")
        if self.err is None:
            self.err = np.sqrt(np.maximum(self.y, 1.0))
        else:
            self.err = np.asarray(self.err, dtype=float)
            if self.err.shape != self.y.shape:
                raise ValueError("err must align with y")
            if not np.all(np.isfinite(self.err)) or np.any(self.err <= 0):
                raise ValueError("err must be finite and positive")
        if self.kind != "spectrum":
            if self.x[0] < 0 or np.any(np.diff(self.x) <= 0):
                raise ValueError(
                    "correlation delays must increase from tau >= 0")

    def __len__(self) -> int:
        return int(self.x.size)


@dataclass
class FitResult:
    """Optimum of one fit plus goodness and uncertainty information."""

    params: dict                  # free parameter -> fitted value
    experiment: ExperimentParams  # init with the fitted physics applied
    chi2: float
    dof: int
    cov: np.ndarray | None        # ordered like `params`; None if singular
    sigma: dict | None            # one-sigma errors from the curvature
    converged: bool
    nfev: int
    message: str
    errors: ErrorModel | None = None

    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan


def _parse_kind(kind: str):
    if kind in ("spectrum", "total"):
        return kind, None
    first, sep, second = kind.partition("|")
    if sep and first in (SIGMA_MINUS, SIGMA_PLUS) \
            and second in (SIGMA_MINUS, SIGMA_PLUS):
        return "pair", (first, second)
    raise ValueError(f"unknown dataset kind {kind!r}")


def _check_free(free, allowed) -> tuple:
    free = tuple(free)
    if not free:
        raise ValueError("free parameter list is empty")
    if len(set(free)) != len(free):
        raise ValueError("duplicate free parameter")
    bad = [n for n in free if n not in allowed]
    if bad:
        raise ValueError(f"free parameter(s) {bad} not supported here; "
                         f"allowed: {sorted(allowed)}")
    return free


def _with_physics(params: ExperimentParams, vals: dict) -> ExperimentParams:
    upd = {k: v for k, v in vals.items() if k in PHYSICS_PARAMS}
    return params.replace(**upd) if upd else params


def _chi2(y: np.ndarray, err: np.ndarray, model: np.ndarray) -> float:
    r = (y - model) / err
    return float(np.dot(r, r))


def _clip(name: str, value: float) -> float:
    lo, hi = _BOUNDS[name]
    return min(max(value, lo), hi)


def _perturb(x0, names, rng):
    out = np.empty(len(x0))
    for i, (v, n) in enumerate(zip(x0, names)):
        w = v + (0.25 * abs(v) + _RESTART_SCALE[n]) * rng.standard_normal()
        lo, hi = _BOUNDS[n]
        if math.isfinite(hi):
            w = min(w, hi - 1e-9 * (hi - lo))
        out[i] = max(w, lo)
    return out


def _minimize(objective, x0, names, maxfev, restarts, seed, target):
    """Nelder-Mead in scaled coordinates with seeded restarts.

    Stops early once chi^2 drops below `target` (a statistically perfect
    fit); otherwise keeps the best of all starts.
    """
    units = np.array([_UNIT[n] for n in names])
    bounds = scipy.optimize.Bounds(
        np.array([_BOUNDS[n][0] for n in names]) / units,
        np.array([_BOUNDS[n][1] for n in names]) / units)
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=float)
    starts = [x0] + [_perturb(x0, names, rng)
                     for _ in range(max(restarts - 1, 0))]
    best = None
    nfev = 0
    for start in starts:
        res = scipy.optimize.minimize(
            lambda t: objective(t * units), start / units,
            method="Nelder-Mead", bounds=bounds,
            options={"maxfev": maxfev, "xatol": 1e-3, "fatol": 1e-3,
                     "adaptive": len(names) > 2})
        nfev += res.nfev
        if best is None or res.fun < best.fun:
            best = res
        if best.fun <= target:
            break
    return best.x * units, float(best.fun), bool(best.success), nfev, \
        str(best.message)


def _step(name: str, value: float) -> float:
    floor = {"omega_397": TWO_PI * 100.0, "omega_866": TWO_PI * 100.0,
             "delta_397": TWO_PI * 100.0, "delta_866": TWO_PI * 100.0,
             "b_field": 1e-5, "alpha_397": 1e-5, "alpha_866": 1e-5,
             "eps_init": 1e-5, "eps_minus": 1e-5, "eps_plus": 1e-5,
             "scale": 1e-12, "background": 1e-6}[name]
    return max(1e-4 * abs(value), floor)


def _covariance(fun, theta, names):
    """cov = 2 H^-1 from a central-difference Hessian of chi^2."""
    n = len(theta)
    theta = np.asarray(theta, dtype=float)
    h = np.array([_step(nm, v) for nm, v in zip(names, theta)])
    hess = np.empty((n, n))
    try:
        f0 = fun(theta)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h[i]
            hess[i, i] = (fun(theta + e) - 2.0 * f0 + fun(theta - e)) / h[i] ** 2
        for i in range(n):
            for j in range(i + 1, n):
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = h[i]
                ej[j] = h[j]
                hess[i, j] = hess[j, i] = (
                    fun(theta + ei + ej) - fun(theta + ei - ej)
                    - fun(theta - ei + ej) + fun(theta - ei - ej)
                ) / (4.0 * h[i] * h[j])
        cov = 2.0 * np.linalg.inv(hess)
    except (np.linalg.LinAlgError, NumericalError):
        return None, None
    diag = np.diag(cov)
    if not np.all(np.isfinite(cov)) or np.any(diag <= 0.0):
        return None, None
    sigma = {nm: math.sqrt(v) for nm, v in zip(names, diag)}
    return cov, sigma


def _solve_affine(y, w, s, a0, b0, fit_a, fit_b):
    """Weighted least-squares scale/background for a fixed shape s.

    Negative solutions are clamped to zero (both are count-like), and a
    degenerate normal matrix falls back to the initial values.
    """
    if fit_a and fit_b:
        sw = w.sum()
        sws = (w * s).sum()
        swss = (w * s * s).sum()
        swy = (w * y).sum()
        swsy = (w * s * y).sum()
        det = swss * sw - sws * sws
        if det <= 1e-14 * max(swss * sw, 1e-300):
            return a0, b0
        a = (swsy * sw - swy * sws) / det
        b = (swss * swy - sws * swsy) / det
        if b < 0.0:
            b = 0.0
            a = swsy / swss if swss > 0.0 else a0
        if a < 0.0:
            a = 0.0
            b = max(swy / sw, 0.0)
        return a, b
    if fit_a:
        swss = (w * s * s).sum()
        if swss <= 0.0:
            return a0, b0
        return max((w * s * (y - b0)).sum() / swss, 0.0), b0
    if fit_b:
        return a0, max((w * (y - a0 * s)).sum() / w.sum(), 0.0)
    return a0, b0


def fit_spectrum(data: DataSet, params_init: ExperimentParams,
                 free=("omega_866", "b_field", "scale", "background"),
                 scale: float = 1.0, background: float = 0.0,
                 restarts: int = 5, seed: int = 0,
                 maxfev: int = 2000) -> FitResult:
    """Fit the eight-level excitation spectrum to a measured scan.

    data.x is the absolute repumper detuning axis in rad/s; a free
    "delta_866" acts as a calibration offset added to that axis.  When
    "scale" or "background" are free they are profiled out analytically,
    so Nelder-Mead only searches the physics parameters.  `scale` and
    `background` arguments are the fixed values when not free.
    """
    if _parse_kind(data.kind)[0] != "spectrum":
        raise ValueError(f"fit_spectrum needs a spectrum dataset, "
                         f"got kind {data.kind!r}")
    free = _check_free(free, PHYSICS_PARAMS + AFFINE_PARAMS)
    phys = [n for n in free if n in PHYSICS_PARAMS]
    fit_scale = "scale" in free
    fit_bg = "background" in free
    w = 1.0 / data.err ** 2
    penalty = data.y + 1e3 * data.err   # stands in for failed solver points

    def shape_curve(vals: dict) -> np.ndarray:
        p = _with_physics(params_init, vals)
        grid = data.x + vals.get("delta_866", 0.0)
        return excitation_spectrum(p, grid).values

    def model_curve(vals: dict, a: float, b: float) -> np.ndarray:
        s = shape_curve(vals)
        good = np.isfinite(s)
        return np.where(good, a * s + b, penalty), s, good

    def profiled(vals: dict):
        s = shape_curve(vals)
        good = np.isfinite(s)
        if np.any(good):
            a, b = _solve_affine(data.y[good], w[good], s[good],
                                 scale, background, fit_scale, fit_bg)
        else:
            a, b = scale, background
        model = np.where(good, a * s + b, penalty)
        return _chi2(data.y, data.err, model), a, b

    dof = len(data) - len(free)
    target = dof + math.sqrt(2.0 * max(dof, 1))

    if phys:
        def objective(theta):
            try:
                return profiled(dict(zip(phys, theta)))[0]
            except NumericalError:
                return 1e30

        x0 = [getattr(params_init, n) for n in phys]
        theta, chi2, ok, nfev, message = _minimize(
            objective, x0, phys, maxfev, restarts, seed, target)
        vals = dict(zip(phys, theta))
    else:
        vals = {}
        chi2, ok, nfev, message = math.nan, True, 1, "profiled affine solve"
    chi2, a_fit, b_fit = profiled(vals)

    fitted = dict(vals)
    if fit_scale:
        fitted["scale"] = a_fit
    if fit_bg:
        fitted["background"] = b_fit
    theta_full = np.array([fitted[n] for n in free])

    def chi2_full(vec):
        v = {n: _clip(n, x) for n, x in zip(free, vec)}
        model, _, _ = model_curve(v, v.get("scale", scale),
                                  v.get("background", background))
        return _chi2(data.y, data.err, model)

    cov, sigma = _covariance(chi2_full, theta_full, free)
    return FitResult(
        params={n: float(fitted[n]) for n in free},
        experiment=_with_physics(params_init, fitted),
        chi2=chi2, dof=dof, cov=cov, sigma=sigma,
        converged=ok, nfev=nfev, message=message)


def fit_g2_joint(datasets, params_init: ExperimentParams,
                 free=("omega_397", "omega_866"),
                 errors: ErrorModel | None = None,
                 restarts: int = 5, seed: int = 0,
                 maxfev: int = 2000) -> FitResult:
    """Joint fit of one or more correlation curves sharing the physics.

    All datasets are predicted from a single parameter set, so e.g. the
    two Rabi frequencies are shared between a sigma-|sigma- and a
    sigma-|sigma+ curve fitted together.  Conditioned-pair datasets may
    carry the three detection error parameters as free names; they apply
    to pair curves only, never to a "total" dataset.  Delay grids are
    used exactly as given (a tau = 0 point is prepended internally when
    missing, the propagator needs it).
    """
    if isinstance(datasets, DataSet):
        datasets = [datasets]
    datasets = list(datasets)
    if not datasets:
        raise ValueError("need at least one dataset")
    specs = []
    for d in datasets:
        mode, pair = _parse_kind(d.kind)
        if mode == "spectrum":
            raise ValueError("spectrum data belongs in fit_spectrum")
        specs.append((mode, pair, d))
    free = _check_free(free, PHYSICS_PARAMS + ERROR_PARAMS)
    base_err = errors if errors is not None else ErrorModel()
    use_err = errors is not None or any(n in ERROR_PARAMS for n in free)

    # deduplicate model grids so curves sharing first photon and delays
    # cost one propagation per objective evaluation
    unique: list[np.ndarray] = []
    layout = []   # per dataset: (mode, first, second, grid index, slice)
    for mode, pair, d in specs:
        grid = d.x if d.x[0] == 0.0 else np.concatenate([[0.0], d.x])
        sl = slice(0, None) if d.x[0] == 0.0 else slice(1, None)
        for gi, g in enumerate(unique):
            if np.array_equal(g, grid):
                break
        else:
            unique.append(grid)
            gi = len(unique) - 1
        first, second = pair if pair else (None, None)
        layout.append((mode, first, second, gi, sl, d))

    def error_model(vals: dict) -> ErrorModel:
        return ErrorModel(
            eps_init=_clip("eps_init", vals.get("eps_init",
                                                base_err.eps_init)),
            eps_minus=_clip("eps_minus", vals.get("eps_minus",
                                                  base_err.eps_minus)),
            eps_plus=_clip("eps_plus", vals.get("eps_plus",
                                                base_err.eps_plus)))

    def chi2_of(vals: dict) -> float:
        p = _with_physics(params_init, vals)
        em = error_model(vals) if use_err else None
        cache: dict = {}
        total = 0.0
        for mode, first, second, gi, sl, d in layout:
            key = (mode, first, gi)
            if key not in cache:
                if mode == "total":
                    cache[key] = (g2_total(p, unique[gi]),)
                elif em is not None:
                    cache[key] = apply_error_model(p, em, unique[gi], first)
                else:
                    cache[key] = g2_pair(p, first, unique[gi])
            got = cache[key]
            curve = got[0] if mode == "total" or second == SIGMA_MINUS \
                else got[1]
            total += _chi2(d.y, d.err, curve.values[sl])
        return total

    def objective(theta):
        try:
            return chi2_of({n: _clip(n, v) for n, v in zip(free, theta)})
        except NumericalError:
            return 1e30

    n_points = sum(len(d) for d in datasets)
    dof = n_points - len(free)
    target = dof + math.sqrt(2.0 * max(dof, 1))
    x0 = [getattr(params_init, n) if n in PHYSICS_PARAMS
          else getattr(base_err, n) for n in free]
    theta, chi2, ok, nfev, message = _minimize(
        objective, x0, free, maxfev, restarts, seed, target)
    vals = dict(zip(free, theta))

    cov, sigma = _covariance(objective, theta, free)
    return FitResult(
        params={n: float(v) for n, v in vals.items()},
        experiment=_with_physics(params_init, vals),
        chi2=chi2, dof=dof, cov=cov, sigma=sigma,
        converged=ok, nfev=nfev, message=message,
        errors=error_model(vals) if use_err else None)

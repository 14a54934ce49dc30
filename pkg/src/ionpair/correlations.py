"""Conditioned photon-pair correlation functions and derived observables.

All correlations refer to blue (397 nm) photons emitted on the two sigma
channels.  A sigma- photon comes from the |P,-1/2> -> |S,+1/2> decay and
leaves the atom in |S,+1/2>; a sigma+ photon mirrors it.  Detecting the
first photon therefore prepares a known ground state, and the correlation
g2(first, second, tau) is the rate of second-channel emission at delay
tau after that preparation, normalized to its steady-state value:

    g2(tau) = rho_P(tau | prepared) / rho_P(infinity)

where rho_P is the population of the P sublevel feeding the second
channel.  The sigma branching factors cancel in the ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import atom
from .atom import P_MINUS, P_PLUS, S_MINUS, S_PLUS
from .dynamics import NumericalError, populations, propagate, steady_state
from .params import ExperimentParams

SIGMA_MINUS = "sigma-"
SIGMA_PLUS = "sigma+"

# After detecting this photon the atom sits in this ground state.
_PREPARED_STATE = {SIGMA_MINUS: S_PLUS, SIGMA_PLUS: S_MINUS}
# This P sublevel feeds that emission channel.
_SOURCE_LEVEL = {SIGMA_MINUS: P_MINUS, SIGMA_PLUS: P_PLUS}


def _check_pol(pol: str) -> str:
    if pol not in (SIGMA_MINUS, SIGMA_PLUS):
        raise ValueError(f"polarization must be 'sigma-' or 'sigma+', got {pol!r}")
    return pol


def _check_feeding_population(value: float) -> float:
    """Guard the g2 normalization against dark-state trapping.

    At B = 0 the degenerate D manifold holds superpositions decoupled
    from any single repumper polarization, the steady P population is
    numerically zero and the normalized correlation is meaningless.
    """
    if value < 1e-12:
        raise NumericalError(
            f"steady feeding population {value:.2e} is consistent with zero; "
            "the atom is trapped in a dark state (B = 0?)")
    return value


@dataclass
class CorrelationCurve:
    """A sampled g2(tau) curve with its conditioning labels."""

    tau: np.ndarray          # delays in seconds, starting at 0
    values: np.ndarray
    kind: str                # e.g. "sigma-|sigma+" (first|second) or "total"
    meta: dict = field(default_factory=dict)

    def peak(self) -> tuple[float, float]:
        """(tau, value) of the global maximum."""
        i = int(np.argmax(self.values))
        return float(self.tau[i]), float(self.values[i])

    def value_at(self, tau: float) -> float:
        return float(np.interp(tau, self.tau, self.values))


def default_grid(t_max: float = 1000e-9, dt: float = 0.5e-9) -> np.ndarray:
    if dt <= 0 or t_max < dt:
        raise ValueError(f"need t_max >= dt > 0, got t_max={t_max}, dt={dt}")
    n = int(round(t_max / dt))
    return np.arange(n + 1) * dt


def _conditioned_populations(params: ExperimentParams, rho0: np.ndarray,
                             grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lv = atom.build_liouvillian(params)
    rss = steady_state(lv)
    pops = populations(propagate(lv, rho0, grid))
    return pops, np.real(np.diag(rss))


def _ground_state(level: int) -> np.ndarray:
    rho = np.zeros((atom.N_LEVELS, atom.N_LEVELS), dtype=complex)
    rho[level, level] = 1.0
    return rho


def g2_pair(params: ExperimentParams, first: str,
            grid: np.ndarray | None = None
            ) -> tuple[CorrelationCurve, CorrelationCurve]:
    """Both conditioned curves (second = sigma-, sigma+) after one
    detected `first` photon; a single propagation serves both."""
    _check_pol(first)
    if grid is None:
        grid = default_grid()
    rho0 = _ground_state(_PREPARED_STATE[first])
    pops, steady = _conditioned_populations(params, rho0, grid)
    curves = []
    for second in (SIGMA_MINUS, SIGMA_PLUS):
        lvl = _SOURCE_LEVEL[second]
        _check_feeding_population(steady[lvl])
        curves.append(CorrelationCurve(
            tau=grid.copy(),
            values=pops[:, lvl] / steady[lvl],
            kind=f"{first}|{second}",
            meta={"params": params.fingerprint()},
        ))
    return curves[0], curves[1]


def g2_conditioned(params: ExperimentParams, first: str, second: str,
                   grid: np.ndarray | None = None) -> CorrelationCurve:
    """g2(tau) for a `second` photon at delay tau after a `first` photon."""
    _check_pol(second)
    minus, plus = g2_pair(params, first, grid)
    return minus if second == SIGMA_MINUS else plus


def g2_total(params: ExperimentParams,
             grid: np.ndarray | None = None) -> CorrelationCurve:
    """Polarization-blind g2 of the 397 sigma fluorescence.

    The first photon projects the atom into a ground mixture weighted by
    the steady feeding populations; the second is either sigma channel.
    """
    if grid is None:
        grid = default_grid()
    lv = atom.build_liouvillian(params)
    rss = steady_state(lv)
    p33, p44 = rss[P_MINUS, P_MINUS].real, rss[P_PLUS, P_PLUS].real
    norm = _check_feeding_population(p33 + p44)
    rho0 = np.zeros((atom.N_LEVELS, atom.N_LEVELS), dtype=complex)
    rho0[S_PLUS, S_PLUS] = p33 / norm    # sigma- photon came from P-1/2
    rho0[S_MINUS, S_MINUS] = p44 / norm
    pops = populations(propagate(lv, rho0, grid))
    return CorrelationCurve(
        tau=grid.copy(),
        values=(pops[:, P_MINUS] + pops[:, P_PLUS]) / norm,
        kind="total",
        meta={"params": params.fingerprint()},
    )


# -- short-time behaviour ----------------------------------------------

def short_time_exponent(curve: CorrelationCurve,
                        window: tuple[float, float] = (0.1e-9, 1.0e-9)) -> float:
    """Log-log slope of g2 over the given delay window."""
    lo, hi = window
    mask = (curve.tau >= lo) & (curve.tau <= hi)
    if mask.sum() < 4:
        raise ValueError(
            f"need at least 4 samples in [{lo}, {hi}] s, have {int(mask.sum())}")
    vals = curve.values[mask]
    if np.any(vals <= 0.0):
        raise ValueError("g2 must be positive over the fit window")
    slope, _ = np.polyfit(np.log(curve.tau[mask]), np.log(vals), 1)
    return float(slope)


def short_time_grid(dt: float = 0.02e-9, t_max: float = 1.2e-9) -> np.ndarray:
    return default_grid(t_max, dt)


# -- pair purity --------------------------------------------------------

def _integrals(minus: CorrelationCurve, plus: CorrelationCurve):
    if minus.tau.shape != plus.tau.shape or not np.allclose(minus.tau, plus.tau):
        raise ValueError("purity needs both curves on the same delay grid")
    from scipy.integrate import cumulative_trapezoid
    im = cumulative_trapezoid(minus.values, minus.tau, initial=0.0)
    ip = cumulative_trapezoid(plus.values, plus.tau, initial=0.0)
    return im, ip


def purity_curve(minus: CorrelationCurve, plus: CorrelationCurve
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Ratio of integrated sigma- to sigma+ correlations versus window
    length: p(T) = int_0^T g2(sigma-) / int_0^T g2(sigma+).

    Returns (tau[1:], p) since the ratio is undefined at T = 0.
    """
    im, ip = _integrals(minus, plus)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = im[1:] / ip[1:]
    return minus.tau[1:].copy(), p


def purity(minus: CorrelationCurve, plus: CorrelationCurve, t_window: float) -> float:
    """p(T) for one coincidence window length T (must lie on the grid)."""
    tau, p = purity_curve(minus, plus)
    idx = np.argmin(np.abs(tau - t_window))
    if abs(tau[idx] - t_window) > 1e-12 + 1e-9 * abs(t_window):
        raise ValueError(f"window {t_window} s is not on the curve grid")
    return float(p[idx])


def pair_probability(p: float) -> float:
    """Probability that the partner photon carries the opposite
    polarization, p/(1+p)."""
    if p < 0:
        raise ValueError("purity ratio must be non-negative")
    if math.isinf(p):
        return 1.0
    return p / (1.0 + p)


# -- detection error model ---------------------------------------------

@dataclass(frozen=True)
class ErrorModel:
    """Three-parameter detection imperfection model.

    eps_init:  probability that the heralding first photon projected the
               atom into the wrong ground state.
    eps_minus: fraction of the measured sigma- curve fed by true sigma+
               light (polarizer leakage on the second photon).
    eps_plus:  mirror image for the measured sigma+ curve.
    """

    eps_init: float = 0.0
    eps_minus: float = 0.0
    eps_plus: float = 0.0

    def __post_init__(self):
        for name in ("eps_init", "eps_minus", "eps_plus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5], got {v}")


def apply_error_model(params: ExperimentParams, errors: ErrorModel,
                      grid: np.ndarray | None = None,
                      first: str = SIGMA_MINUS
                      ) -> tuple[CorrelationCurve, CorrelationCurve]:
    """Conditioned curves as measured with imperfect state preparation
    and polarization analysis.

    The first-photon error mixes the prepared ground state; the analyzer
    errors mix the two ideal second-photon curves.
    """
    _check_pol(first)
    if grid is None:
        grid = default_grid()
    good = _ground_state(_PREPARED_STATE[first])
    other = SIGMA_PLUS if first == SIGMA_MINUS else SIGMA_MINUS
    bad = _ground_state(_PREPARED_STATE[other])
    rho0 = (1.0 - errors.eps_init) * good + errors.eps_init * bad
    pops, steady = _conditioned_populations(params, rho0, grid)
    gm = pops[:, P_MINUS] / _check_feeding_population(steady[P_MINUS])
    gp = pops[:, P_PLUS] / _check_feeding_population(steady[P_PLUS])
    meta = {"params": params.fingerprint(),
            "eps_init": errors.eps_init,
            "eps_minus": errors.eps_minus,
            "eps_plus": errors.eps_plus}
    measured_minus = CorrelationCurve(
        tau=grid.copy(),
        values=(1.0 - errors.eps_minus) * gm + errors.eps_minus * gp,
        kind=f"{first}|sigma- (measured)", meta=dict(meta))
    measured_plus = CorrelationCurve(
        tau=grid.copy(),
        values=(1.0 - errors.eps_plus) * gp + errors.eps_plus * gm,
        kind=f"{first}|sigma+ (measured)", meta=dict(meta))
    return measured_minus, measured_plus


# -- photon budget ------------------------------------------------------

def emission_rate(params: ExperimentParams, pol: str) -> float:
    """Steady-state emission rate (photons/s) of one 397 sigma channel."""
    _check_pol(pol)
    rss = steady_state(atom.build_liouvillian(params))
    lvl = _SOURCE_LEVEL[pol]
    return (2.0 / 3.0) * params.gamma_sp * rss[lvl, lvl].real


def mean_photon_number(params: ExperimentParams, pol: str, t_window: float,
                       dt: float = 0.25e-9) -> float:
    """Expected number of `pol` photons within t_window after a detected
    `pol` photon.

    The detection prepares the corresponding ground state, so this is the
    integral of the conditioned channel rate Gamma_sp * (2/3) * rho_P(tau),
    not t_window times the steady rate.
    """
    _check_pol(pol)
    if t_window <= 0:
        raise ValueError("t_window must be positive")
    n = max(int(math.ceil(t_window / dt)), 8)
    grid = np.linspace(0.0, t_window, n + 1)
    rho0 = _ground_state(_PREPARED_STATE[pol])
    lv = atom.build_liouvillian(params)
    pops = populations(propagate(lv, rho0, grid))
    rate = (2.0 / 3.0) * params.gamma_sp * pops[:, _SOURCE_LEVEL[pol]]
    return float(np.trapezoid(rate, grid))


# -- excitation spectrum ------------------------------------------------

@dataclass
class SpectrumCurve:
    """Fluorescence rate versus repumper detuning."""

    delta_866: np.ndarray    # rad/s
    values: np.ndarray       # scale * (P population) + background
    ok: np.ndarray           # per-point solver success
    meta: dict = field(default_factory=dict)


def _detuning_generator() -> np.ndarray:
    """Superoperator d L / d delta_866 (row-major)."""
    k = np.zeros((atom.N_LEVELS, atom.N_LEVELS))
    for i in atom.D_LEVELS:
        k[i, i] = 1.0
    eye = np.eye(atom.N_LEVELS)
    return -1j * (np.kron(k, eye) - np.kron(eye, k))


def excitation_spectrum(params: ExperimentParams, delta_grid: np.ndarray,
                        scale: float = 1.0, background: float = 0.0
                        ) -> SpectrumCurve:
    """Steady 397 fluorescence for each repumper detuning in delta_grid.

    The Liouvillian is linear in delta_866, so one base matrix is reused
    for every grid point.  Points where the linear solve fails are
    flagged in `ok` and carry NaN, they do not raise.
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    base = atom.build_liouvillian(params.replace(delta_866=0.0)).matrix
    slope = _detuning_generator()
    n = atom.N_LEVELS
    trace_row = np.zeros(n * n, dtype=complex)
    trace_row[:: n + 1] = 1.0
    b = np.zeros(n * n, dtype=complex)
    b[0] = 1.0
    values = np.empty(delta_grid.size)
    ok = np.ones(delta_grid.size, dtype=bool)
    for i, d in enumerate(delta_grid):
        a = base + d * slope
        a[0] = trace_row
        try:
            v = np.linalg.solve(a, b)
            pops = v.reshape(n, n).diagonal().real
            fluor = pops[P_MINUS] + pops[P_PLUS]
            if not np.isfinite(fluor) or fluor < -1e-9:
                raise np.linalg.LinAlgError("unphysical solution")
            values[i] = background + scale * fluor
        except np.linalg.LinAlgError:
            values[i] = np.nan
            ok[i] = False
    return SpectrumCurve(delta_866=delta_grid.copy(), values=values, ok=ok,
                         meta={"params": params.fingerprint(),
                               "scale": scale, "background": background})


def default_spectrum_grid(lo: float = -2.0 * math.pi * 40e6,
                          hi: float = 2.0 * math.pi * 40e6,
                          points: int = 401) -> np.ndarray:
    return np.linspace(lo, hi, points)


def raman_positions(params: ExperimentParams) -> np.ndarray:
    """Repumper detunings (rad/s) satisfying the two-photon resonance
    delta_397 + zeeman(S) = delta_866 + zeeman(D) for the four S/D pairs
    connected purely by sigma transitions (m_D - m_S in {-2, 0, +2}).

    Only these support a trapped dark superposition when the drive has no
    or weak pi component, so exactly four dips appear in the spectrum.
    """
    shifts = atom.zeeman_shifts(params.b_field)
    out = []
    for s in atom.S_LEVELS:
        for d in atom.D_LEVELS:
            if abs(atom.M_J[d] - atom.M_J[s]) in (0.0, 2.0):
                out.append(params.delta_397 + shifts[s] - shifts[d])
    return np.sort(np.array(out))


def find_dips(spectrum: SpectrumCurve, min_prominence: float = 0.1) -> np.ndarray:
    """Detunings (rad/s) of the dark-resonance dips.

    A dip counts when its prominence exceeds min_prominence of the full
    curve swing.  Shallower ripples occur at two-photon conditions whose
    S/D pair couples to both P sublevels at once; no trapped dark state
    exists there and the fluorescence only partially drops.  Positions
    are refined with a parabola through the minimum and its neighbours.
    """
    import scipy.signal

    v = spectrum.values
    x = spectrum.delta_866
    if np.any(~spectrum.ok):
        raise NumericalError("spectrum contains failed points; cannot locate dips")
    swing = v.max() - v.min()
    if swing <= 0.0:
        return np.array([])
    idx, _ = scipy.signal.find_peaks(-v, prominence=min_prominence * swing)
    dips = []
    for i in idx:
        denom = v[i - 1] - 2.0 * v[i] + v[i + 1]
        offset = 0.5 * (v[i - 1] - v[i + 1]) / denom if denom > 0 else 0.0
        dips.append(x[i] + offset * (x[i + 1] - x[i]))
    return np.array(dips)


# -- CSV serialization --------------------------------------------------

def write_table_csv(path, x: np.ndarray, columns: dict[str, np.ndarray],
                    x_label: str, meta: dict | None = None) -> None:
    """Write aligned columns with '# key = value' provenance comments."""
    for label, col in columns.items():
        if len(col) != len(x):
            raise ValueError(f"column {label!r} length mismatch")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key in sorted(meta or {}):
            fh.write(f"# {key} = {(meta or {})[key]}\n")
        writer = csv.writer(fh)
        writer.writerow([x_label, *columns.keys()])
        for i in range(len(x)):
            writer.writerow([f"{x[i]:.10g}",
                             *(f"{col[i]:.10g}" for col in columns.values())])


def read_table_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray], dict]:
    """Inverse of write_table_csv: (x, columns, meta)."""
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    header: list[str] | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key.strip()] = val.strip()
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = cells
            else:
                rows.append(cells)
    if header is None or not rows:
        raise ValueError(f"{path}: no tabular data found")
    data = np.array([[float(c) for c in row] for row in rows])
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    x = data[:, 0]
    columns = {name: data[:, j + 1] for j, name in enumerate(header[1:])}
    return x, columns, meta

"""
Photon statistics: the g2(tau) model and fit, background correction,
signal fraction, emitter counting and saturation curves.
"""
from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np

from . import csvio
from .errors import DomainError, InputError
from .fitting import FitProblem, Param, fit

__all__ = [
    "G2Histogram", "G2FitParams", "G2Fit", "g2_model", "fit_g2",
    "signal_fraction", "correct_g2_background", "mix_g2_background",
    "EmitterCount", "emitter_count", "SaturationSeries", "SaturationParams",
    "SaturationFit", "saturation_model", "fit_saturation",
    "NegativeG2Warning",
]


class NegativeG2Warning(UserWarning):
    """Background-corrected g2 dipped below -0.1 (noise or wrong rho)."""


@dataclass(frozen=True)
class G2Histogram:
    """Normalised coincidence histogram.

    ``counts`` and ``expected`` are filled when the histogram comes from
    :func:`pbvlab.emitter_sim.coincidence_histogram`; ``corrected`` marks a
    background-corrected histogram, which may hold negative values.
    """
    tau: np.ndarray
    g2: np.ndarray
    counts: np.ndarray = None
    expected: np.ndarray = None
    corrected: bool = False

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "g2", g2)
        if tau.shape != g2.shape or tau.ndim != 1:
            raise InputError("tau and g2 must be 1-d arrays of equal length")
        csvio.check_increasing(tau, "tau")
        if not self.corrected:
            csvio.check_nonnegative(g2, "g2")

    @classmethod
    def from_csv(cls, text):
        tau, g2 = csvio.read_table(text, ("tau_ns", "g2"), min_rows=1)
        return cls(tau, g2)

    def to_csv(self):
        return csvio.format_table(("tau_ns", "g2"), (self.tau, self.g2))


@dataclass(frozen=True)
class G2FitParams:
    c: float
    b: float
    tau1: float
    tau2: float


def g2_model(tau, p):
    """``1 - c[(1 + b) exp(-|tau|/tau1) - b exp(-|tau|/tau2)]``."""
    a = np.abs(np.asarray(tau, dtype=float))
    out = 1.0 - p.c * ((1.0 + p.b) * np.exp(-a / p.tau1) - p.b * np.exp(-a / p.tau2))
    return float(out) if out.ndim == 0 else out


def _g2_internal(q, tau):
    # q = (c, b, tau1, r) with tau2 = tau1 * (1 + r)
    c, b, tau1, r = q
    a = np.abs(tau)
    return 1.0 - c * ((1.0 + b) * np.exp(-a / tau1) - b * np.exp(-a / (tau1 * (1.0 + r))))


@dataclass
class G2Fit:
    params: G2FitParams
    stderr: G2FitParams
    fit: object
    g2_zero: float
    lifetime_ns: float = None
    warnings: list = field(default_factory=list)


def _g2_initial_guess(tau, g2):
    gmin = float(g2.min())
    c0 = min(max(1.0 - gmin, 0.01), 1.0)
    b0 = max(float(g2.max()) - 1.0, 1e-3)
    i0 = int(np.argmin(g2))
    level = gmin + 0.5 * (1.0 - gmin)
    spacing = float(np.median(np.diff(tau)))
    half = None
    for idx in range(i0, tau.size):
        if g2[idx] >= level:
            half = abs(tau[idx] - tau[i0])
            break
    tau1 = max(half / math.log(2.0) if half else 10 * spacing, spacing)
    return c0, b0, tau1


def fit_g2(h, low_power=False, **fit_options):
    """Fit the three-level antibunching model to a histogram.

    Parameters
    ----------
    h : G2Histogram
    low_power : bool
        When true, ``tau1`` is reported as the excited-state lifetime.

    Returns
    -------
    G2Fit
    """
    if h.tau.size < 8:
        raise InputError(f"g2 fit needs at least 8 bins, got {h.tau.size}")
    if not (h.tau.min() < 0 < h.tau.max()):
        raise InputError("g2 histogram must cover negative and positive delays")
    notes = []
    if float(h.g2.min()) >= 1.0:
        notes.append("no antibunching signature")
    c0, b0, t0 = _g2_initial_guess(h.tau, h.g2)
    params = [
        Param("c", c0, "log"),
        Param("b", b0, "log", scale=max(b0, 0.1)),
        Param("tau1", t0, "log"),
        Param("tau2_excess", 9.0, "log"),
    ]
    res = fit(FitProblem(_g2_internal, h.tau, h.g2, params), **fit_options)
    c, b, tau1, r = res.params
    tau2 = tau1 * (1.0 + r)
    # delta method for tau2 = tau1 (1 + r)
    grad = np.array([0.0, 0.0, 1.0 + r, tau1])
    var_tau2 = float(grad @ res.covariance @ grad)
    se = res.stderr
    stderr = G2FitParams(float(se[0]), float(se[1]), float(se[2]),
                         math.sqrt(var_tau2) if var_tau2 >= 0 else float("nan"))
    p = G2FitParams(float(c), float(b), float(tau1), float(tau2))
    return G2Fit(params=p, stderr=stderr, fit=res, g2_zero=g2_model(0.0, p),
                 lifetime_ns=float(tau1) if low_power else None, warnings=notes)


def signal_fraction(signal, background):
    """``rho = S / (S + B)``."""
    if not signal > 0:
        raise DomainError(f"signal must be positive, got {signal!r}")
    if not background >= 0:
        raise DomainError(f"background must be non-negative, got {background!r}")
    return signal / (signal + background)


def _check_rho(rho):
    if not 0 < rho <= 1:
        raise DomainError(f"signal fraction must lie in (0, 1], got {rho!r}")


def correct_g2_background(g2, rho):
    """Remove uncorrelated background: ``(g2 - (1 - rho^2)) / rho^2``.

    Works on a scalar, an array or a :class:`G2Histogram`.  Values are not
    clamped; a :class:`NegativeG2Warning` is issued when any drops below -0.1.
    """
    _check_rho(rho)
    r2 = rho * rho
    if isinstance(g2, G2Histogram):
        vals = (g2.g2 - (1.0 - r2)) / r2
        _warn_negative(vals)
        return replace(g2, g2=vals, corrected=True)
    vals = (np.asarray(g2, dtype=float) - (1.0 - r2)) / r2
    _warn_negative(vals)
    return float(vals) if vals.ndim == 0 else vals


def _warn_negative(vals):
    if np.any(vals < -0.1):
        warnings.warn(f"corrected g2 reaches {float(np.min(vals)):.3f} < -0.1",
                      NegativeG2Warning, stacklevel=3)


def mix_g2_background(g2_clean, rho):
    """Forward direction of the correction: ``1 - rho^2 (1 - g2_clean)``."""
    _check_rho(rho)
    return 1.0 - rho * rho * (1.0 - np.asarray(g2_clean, dtype=float))


@dataclass(frozen=True)
class EmitterCount:
    n_real: float
    n_int: int
    margin: float


def emitter_count(g2_0):
    """Number of emitters from ``g2(0) = 1 - 1/n``."""
    if not g2_0 < 1:
        raise DomainError(f"g2(0) = {g2_0!r} >= 1 gives no finite emitter count")
    n_real = 1.0 / (1.0 - g2_0)
    n_int = max(1, int(math.floor(n_real + 0.5)))
    return EmitterCount(n_real, n_int, abs(n_real - n_int))


@dataclass(frozen=True)
class SaturationSeries:
    power: np.ndarray
    intensity: np.ndarray
    kind: str = "total"

    def __post_init__(self):
        P = np.asarray(self.power, dtype=float)
        intensity = np.asarray(self.intensity, dtype=float)
        object.__setattr__(self, "power", P)
        object.__setattr__(self, "intensity", intensity)
        if self.kind not in ("total", "background", "corrected"):
            raise InputError(f"unknown series kind {self.kind!r}")
        if P.shape != intensity.shape or P.ndim != 1:
            raise InputError("power and intensity must be 1-d arrays of equal length")
        csvio.check_increasing(P, "power")
        csvio.check_nonnegative(P, "power")
        if self.kind != "corrected":
            csvio.check_nonnegative(intensity, "intensity")

    @classmethod
    def from_csv(cls, text, kind="total"):
        P, intensity = csvio.read_table(text, ("power_mw", "intensity_kcps"))
        return cls(P, intensity, kind)

    def to_csv(self):
        return csvio.format_table(("power_mw", "intensity_kcps"), (self.power, self.intensity))


@dataclass(frozen=True)
class SaturationParams:
    i_inf: float
    p_sat: float


def saturation_model(P, p):
    """``I = I_inf P / (P + P_sat)``."""
    P = np.asarray(P, dtype=float)
    out = p.i_inf * P / (P + p.p_sat)
    return float(out) if out.ndim == 0 else out


def _sat_internal(q, P):
    return q[0] * P / (P + q[1])


def _fit_saturation_curve(P, intensity, weights=None, **fit_options):
    pos = (P > 0) & (intensity > 0)
    i0, p0 = 1.5 * float(np.max(intensity)), float(np.median(P[P > 0])) if np.any(P > 0) else 1.0
    if np.count_nonzero(pos) >= 2:
        # 1/I = 1/I_inf + (P_sat/I_inf) / P
        slope, icept = np.polyfit(1.0 / P[pos], 1.0 / intensity[pos], 1)
        if icept > 0 and slope > 0:
            i0, p0 = 1.0 / icept, slope / icept
    params = [Param("i_inf", max(i0, 1e-12), "log"), Param("p_sat", max(p0, 1e-12), "log")]
    return fit(FitProblem(_sat_internal, P, intensity, params, weights=weights), **fit_options)


@dataclass
class SaturationFit:
    params: SaturationParams
    stderr: SaturationParams
    fit: object
    raw: object
    background_slope: float = None
    background_intercept: float = None
    corrected: SaturationSeries = None
    flags: list = field(default_factory=list)


def fit_saturation(total, background=None, **fit_options):
    """Fit ``I = I_inf P/(P + P_sat)``, optionally after background removal.

    The background series is modelled as a straight line in power, fitted by
    ordinary least squares and subtracted from ``total``.  The fit on the
    raw total is always reported in ``raw``.  Total points where the measured
    background exceeds the total are flagged and get zero weight.
    Extra keyword arguments go to :func:`pbvlab.fitting.fit`.
    """
    if total.power.size < 4:
        raise InputError(f"saturation fit needs at least 4 points, got {total.power.size}")
    raw = _fit_saturation_curve(total.power, total.intensity, **fit_options)
    flags = []
    if background is None:
        flags.append("uncorrected")
        return SaturationFit(params=SaturationParams(*map(float, raw.params)),
                             stderr=SaturationParams(*map(float, raw.stderr)),
                             fit=raw, raw=raw, flags=flags)
    if background.power.size < 2:
        raise InputError("background series needs at least 2 points")
    P = total.power
    if background.power.shape == P.shape and np.allclose(background.power, P, rtol=0.01, atol=0.0):
        bg_meas = background.intensity
    else:
        bg_meas = np.interp(P, background.power, background.intensity)
    slope, icept = np.polyfit(background.power, background.intensity, 1)
    corrected = total.intensity - (slope * P + icept)
    weights = np.ones_like(P)
    exceed = bg_meas > total.intensity
    if np.any(exceed):
        flags.append("background_exceeds_total")
        weights[exceed] = 0.0
    if np.any(corrected < 0):
        flags.append("negative_corrected_intensity")
    res = _fit_saturation_curve(P, corrected, weights, **fit_options)
    return SaturationFit(params=SaturationParams(*map(float, res.params)),
                         stderr=SaturationParams(*map(float, res.stderr)),
                         fit=res, raw=raw, background_slope=float(slope),
                         background_intercept=float(icept),
                         corrected=SaturationSeries(P, corrected, "corrected"),
                         flags=flags)

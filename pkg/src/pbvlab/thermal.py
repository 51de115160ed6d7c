"""Temperature laws for ZPL linewidth (w0 + a3 T^3) and position (l0 + b2 T^2 + b4 T^4)."""
from dataclasses import dataclass

import numpy as np

from . import csvio
from .errors import InputError
from .fitting import FitProblem, Param, fit

__all__ = ["ThermalSeries", "LinewidthParams", "ShiftParams", "linewidth_model",
           "shift_model", "fit_linewidth_series", "fit_shift_series"]

MODES = ("linewidth", "shift")


@dataclass(frozen=True)
class ThermalSeries:
    """Values versus temperature.

    ``value`` is a FWHM in GHz for ``mode="linewidth"`` and a peak center
    (normally nm) for ``mode="shift"``.
    """
    temperature: np.ndarray
    value: np.ndarray
    mode: str
    label: str = ""

    def __post_init__(self):
        T = np.asarray(self.temperature, dtype=float)
        v = np.asarray(self.value, dtype=float)
        object.__setattr__(self, "temperature", T)
        object.__setattr__(self, "value", v)
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if T.shape != v.shape or T.ndim != 1:
            raise InputError("temperature and value must be 1-d arrays of equal length")
        if T.size < 4:
            raise InputError(f"a temperature series needs at least 4 points, got {T.size}")
        if np.any(T <= 0):
            raise InputError("temperatures must be positive")
        csvio.check_increasing(T, "temperature")

    @classmethod
    def from_csv(cls, text, mode, label=""):
        T, v = csvio.read_table(text, ("temperature_k", "value"), min_rows=4)
        return cls(T, v, mode, label)


@dataclass(frozen=True)
class LinewidthParams:
    w0: float
    a3: float


@dataclass(frozen=True)
class ShiftParams:
    l0: float
    b2: float
    b4: float


def linewidth_model(T, p):
    T = np.asarray(T, dtype=float)
    out = p.w0 + p.a3 * T ** 3
    return float(out) if out.ndim == 0 else out


def shift_model(T, p):
    T = np.asarray(T, dtype=float)
    T2 = T * T
    out = p.l0 + p.b2 * T2 + p.b4 * T2 * T2
    return float(out) if out.ndim == 0 else out


def _linear_start(T, v, powers):
    with np.errstate(over="ignore"):
        A = np.column_stack([T ** k for k in powers])
    if not np.all(np.isfinite(A)):
        raise InputError(f"T^{max(powers)} overflows; temperatures must be physical (kelvin)")
    return np.linalg.lstsq(A, v, rcond=None)[0]


def fit_linewidth_series(s, **fit_options):
    """Fit ``w0 + a3 T^3`` with both coefficients kept positive.

    Returns ``(LinewidthParams, FitResult)``.
    """
    if s.mode != "linewidth":
        raise InputError(f"expected a linewidth series, got mode {s.mode!r}")
    T, v = s.temperature, s.value
    w0, a3 = _linear_start(T, v, (0, 3))
    tmax = float(T.max())
    spread = max(float(np.ptp(v)), 1e-12 * max(abs(float(v.mean())), 1.0))
    w0 = w0 if w0 > 0 else max(float(v.min()), 1e-6 * spread)
    a3 = a3 if a3 > 0 else spread / tmax ** 3
    params = [Param("w0", w0, "log"), Param("a3", a3, "log")]
    res = fit(FitProblem(lambda p, x: p[0] + p[1] * x ** 3, T, v, params), **fit_options)
    return LinewidthParams(*map(float, res.params)), res


def fit_shift_series(s, **fit_options):
    """Fit ``l0 + b2 T^2 + b4 T^4``; ``l0 > 0``, ``b2`` and ``b4`` of either sign.

    Returns ``(ShiftParams, FitResult)``.
    """
    if s.mode != "shift":
        raise InputError(f"expected a shift series, got mode {s.mode!r}")
    T, v = s.temperature, s.value
    l0, b2, b4 = _linear_start(T, v, (0, 2, 4))
    if l0 <= 0:
        raise InputError("extrapolated zero-temperature position is not positive")
    tmax = float(T.max())
    spread = max(float(np.ptp(v)), 1e-9 * abs(l0))
    params = [Param("l0", l0, "log"),
              Param("b2", b2, "free", scale=spread / tmax ** 2),
              Param("b4", b4, "free", scale=spread / tmax ** 4)]
    res = fit(FitProblem(lambda p, x: shift_model(x, ShiftParams(*p)), T, v, params),
              **fit_options)
    return ShiftParams(*map(float, res.params)), res

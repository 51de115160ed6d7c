"""
Dipole polarization of D3d centers viewed through a (001) surface.

Each center is oriented along one of the four <111> axes.  Its frame has
z along the axis, x along the <11-2>-type companion and y = z cross x.  The
detected intensity behind a polarizer at angle theta (from u = [110]) is
the incoherent sum ``sum_i w_i (p_i,u cos theta + p_i,v sin theta)^2`` of the
transverse dipole projections.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import csvio
from .errors import DomainError, InputError
from .fitting import FitProblem, Param, fit

__all__ = [
    "VARIANTS", "DefectFrame", "DipoleConfig", "PolarizationSeries",
    "PolarizationFit", "defect_frame", "project_dipole", "polar_intensity_curve",
    "dipole_visibility", "visibility", "fit_polarization", "orthogonality",
    "XY_EQUAL_VISIBILITY_LITERATURE",
]

VARIANTS = {
    "111": (1, 1, 1),
    "-111": (-1, 1, 1),
    "1-11": (1, -1, 1),
    "11-1": (1, 1, -1),
}

U_AXIS = np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0)    # [110]
V_AXIS = np.array([-1.0, 1.0, 0.0]) / math.sqrt(2.0)   # [-110]
VIEW_AXIS = np.array([0.0, 0.0, 1.0])                 # [001]

# Reported for an equal X+Y mixture from a full emission-pattern calculation;
# the transverse-projection model used here gives 0.5 instead.
XY_EQUAL_VISIBILITY_LITERATURE = 0.268


@dataclass(frozen=True)
class DefectFrame:
    variant: str
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray

    def matrix(self):
        """Rows are the x, y, z unit vectors in crystal coordinates."""
        return np.vstack([self.x_axis, self.y_axis, self.z_axis])


def defect_frame(variant="111"):
    """Orthonormal right-handed frame for a <111> orientation.

    ``variant`` is one of ``"111"``, ``"-111"``, ``"1-11"``, ``"11-1"``.
    For axis ``(s1, s2, s3)`` the x axis is ``(s1, s2, -2 s3)/sqrt(6)``.
    """
    try:
        s = np.array(VARIANTS[str(variant)], dtype=float)
    except KeyError:
        raise DomainError(f"unknown <111> variant {variant!r}; use one of {list(VARIANTS)}") from None
    z = s / math.sqrt(3.0)
    x = np.array([s[0], s[1], -2.0 * s[2]]) / math.sqrt(6.0)
    y = np.cross(z, x)
    return DefectFrame(str(variant), x, y, z)


def project_dipole(d):
    """Transverse (u, v) components of a unit dipole seen along [001]."""
    d = np.asarray(d, dtype=float)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise DomainError(f"dipole must be a unit 3-vector, got {d!r}")
    return np.array([d @ U_AXIS, d @ V_AXIS])


@dataclass(frozen=True)
class DipoleConfig:
    """Incoherent mixture of the frame's x, y, z dipoles with weights."""
    frame: DefectFrame
    weights: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != 3 or any(v < 0 for v in w) or not any(v > 0 for v in w):
            raise DomainError(f"weights must be three non-negative numbers, not all zero: {self.weights!r}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def z(cls, variant="111"):
        return cls(defect_frame(variant), (0.0, 0.0, 1.0))

    @classmethod
    def xy(cls, variant="111"):
        return cls(defect_frame(variant), (1.0, 1.0, 0.0))

    def tensor(self):
        """2x2 matrix M with I(theta) = e(theta)^T M e(theta)."""
        M = np.zeros((2, 2))
        for w, axis in zip(self.weights, self.frame.matrix()):
            p = project_dipole(axis)
            M += w * np.outer(p, p)
        return M


def polar_intensity_curve(cfg, angles_deg, normalize=False):
    """Intensity behind the polarizer at each angle (degrees from u)."""
    th = np.radians(np.asarray(angles_deg, dtype=float))
    M = cfg.tensor()
    c, s = np.cos(th), np.sin(th)
    out = M[0, 0] * c * c + 2.0 * M[0, 1] * c * s + M[1, 1] * s * s
    if normalize:
        out = out / np.max(out)
    return out


def dipole_visibility(cfg):
    """Exact visibility of a model configuration from the extrema of I(theta).

    The extrema of a quadratic form on the unit circle are the eigenvalues
    of its matrix.
    """
    lo, hi = np.linalg.eigvalsh(cfg.tensor())
    lo = max(lo, 0.0)
    if hi <= 0:
        raise DomainError("configuration has no transverse dipole component")
    return (hi - lo) / (hi + lo)


@dataclass(frozen=True)
class PolarizationSeries:
    angle_deg: np.ndarray
    intensity: np.ndarray
    label: str = ""

    def __post_init__(self):
        a = np.asarray(self.angle_deg, dtype=float)
        i = np.asarray(self.intensity, dtype=float)
        object.__setattr__(self, "angle_deg", a)
        object.__setattr__(self, "intensity", i)
        if a.shape != i.shape or a.ndim != 1:
            raise InputError("angle and intensity must be 1-d arrays of equal length")
        if a.size < 4:
            raise InputError(f"need at least 4 angles, got {a.size}")
        csvio.check_increasing(a, "angle")
        csvio.check_nonnegative(i, "intensity")
        # a grid 0, 10, ..., 170 covers a full period: count one step past the end
        if a[-1] - a[0] + float(np.median(np.diff(a))) < 180.0 - 1e-9:
            raise InputError("polarizer angles must span at least 180 degrees")

    @classmethod
    def from_csv(cls, text, label=""):
        a, i = csvio.read_table(text, ("angle_deg", "intensity"), min_rows=4)
        return cls(a, i, label)

    def to_csv(self):
        return csvio.format_table(("angle_deg", "intensity"), (self.angle_deg, self.intensity))


@dataclass
class PolarizationFit:
    amplitude: float
    offset: float
    theta0_deg: float
    visibility: float
    stderr: dict
    fit: object

    def model(self, angles_deg):
        return _cos2_model(np.array([self.amplitude, self.offset, self.theta0_deg]),
                           np.asarray(angles_deg, dtype=float))


def _cos2_model(p, theta_deg):
    a, c, t0 = p
    return a * np.cos(np.radians(theta_deg - t0)) ** 2 + c


def fit_polarization(s, **fit_options):
    """Fit ``A cos^2(theta - theta0) + C`` and derive ``V = A / (A + 2C)``.

    Starting values come from the exact linear fit of
    ``a0 + a1 cos 2theta + a2 sin 2theta``.  ``theta0`` is reported in
    ``[0, 180)``.
    """
    th = np.radians(s.angle_deg)
    X = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    a0, a1, a2 = np.linalg.lstsq(X, s.intensity, rcond=None)[0]
    amp0 = 2.0 * math.hypot(a1, a2)
    t00 = math.degrees(0.5 * math.atan2(a2, a1))
    off0 = a0 - amp0 / 2.0
    if amp0 <= 0:
        amp0 = 1e-9 * max(float(s.intensity.max()), 1.0)
    scale_i = max(float(s.intensity.max()), 1e-300)
    params = [Param("amplitude", amp0, "log"),
              Param("offset", off0, "free", scale=scale_i),
              Param("theta0", t00, "free", scale=90.0)]
    res = fit(FitProblem(_cos2_model, s.angle_deg, s.intensity, params), **fit_options)
    amp, off, t0 = map(float, res.params)
    if amp + 2.0 * off <= 0:
        raise DomainError("fitted curve has no positive mean intensity")
    # dV/dA = 2C/(A+2C)^2, dV/dC = -2A/(A+2C)^2
    den = (amp + 2.0 * off) ** 2
    grad = np.array([2.0 * off / den, -2.0 * amp / den, 0.0])
    v_err = math.sqrt(max(float(grad @ res.covariance @ grad), 0.0)) \
        if np.all(np.isfinite(res.covariance)) else float("nan")
    return PolarizationFit(
        amplitude=amp, offset=off, theta0_deg=t0 % 180.0,
        visibility=amp / (amp + 2.0 * off),
        stderr={"amplitude": float(res.stderr[0]), "offset": float(res.stderr[1]),
                "theta0_deg": float(res.stderr[2]), "visibility": v_err},
        fit=res)


def orthogonality(fit_a, fit_b):
    """Angle between two fitted polarization axes, folded into [0, 90] degrees."""
    d = (fit_b.theta0_deg - fit_a.theta0_deg) % 180.0
    return min(d, 180.0 - d)


def visibility(data):
    """Visibility of a model configuration, a fitted curve or a data series.

    * :class:`DipoleConfig`: exact extrema of the model curve.
    * :class:`PolarizationSeries`: from the fitted cos^2 curve, so that noise
      does not inflate the raw max/min contrast.
    * array of intensities from a noiseless model curve: raw extrema.
    """
    if isinstance(data, DipoleConfig):
        return dipole_visibility(data)
    if isinstance(data, PolarizationSeries):
        if not np.any(data.intensity > 0):
            raise DomainError("all intensities are zero")
        return fit_polarization(data).visibility
    if isinstance(data, PolarizationFit):
        return data.visibility
    vals = np.asarray(data, dtype=float)
    if vals.size < 4:
        raise InputError("need at least 4 samples")
    hi, lo = float(vals.max()), float(vals.min())
    if hi <= 0:
        raise DomainError("all intensities are zero")
    return (hi - lo) / (hi + lo)

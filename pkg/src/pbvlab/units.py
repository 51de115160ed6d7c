"""Physical constants and the spectroscopic conversions used throughout.

Wavelengths are vacuum wavelengths in nm, frequencies and frequency
intervals are in GHz, wavenumbers in cm^-1, temperatures in K.  Quantities
are plain floats (or numpy arrays where noted); validation happens at the
function boundary.
"""
import math

import numpy as np

from .errors import DomainError

# CODATA exact values (SI 2019)
H = 6.62607015e-34      # Planck constant, J s
K_B = 1.380649e-23      # Boltzmann constant, J / K
C = 2.99792458e8        # speed of light, m / s

# c expressed in nm * GHz, so that nu[GHz] = C_NM_GHZ / lambda[nm]
C_NM_GHZ = C  # 1 m/s = 1e9 nm / 1e9 1/s
# h / k_B in K per GHz: h * nu / (k T) = H_OVER_K * nu[GHz] / T[K]
H_OVER_K = H * 1e9 / K_B

DIAMOND_RAMAN_SHIFT_CM = 1332.5


def _check_wavelength(lam, name="wavelength"):
    arr = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be positive and finite, got {lam!r}")
    return arr


def wavelength_to_frequency(lam_nm):
    """Optical frequency in GHz of a vacuum wavelength in nm.

    Accepts scalars or array-likes; returns the same shape.
    """
    arr = _check_wavelength(lam_nm)
    nu = C_NM_GHZ / arr
    return float(nu) if nu.ndim == 0 else nu


def frequency_to_wavelength(nu_ghz):
    """Inverse of :func:`wavelength_to_frequency`."""
    arr = np.asarray(nu_ghz, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"frequency must be positive and finite, got {nu_ghz!r}")
    lam = C_NM_GHZ / arr
    return float(lam) if lam.ndim == 0 else lam


def splitting_from_wavelengths(lam_short, lam_long):
    """Frequency splitting (GHz, > 0) between two lines given in nm.

    The shorter-wavelength line is the higher-frequency one, so the
    result is ``nu(lam_short) - nu(lam_long)``.
    """
    _check_wavelength(lam_short, "lam_short")
    _check_wavelength(lam_long, "lam_long")
    if not lam_short < lam_long:
        raise DomainError(
            f"need lam_short < lam_long, got {lam_short!r} >= {lam_long!r}")
    return wavelength_to_frequency(lam_short) - wavelength_to_frequency(lam_long)


def linewidth_to_ghz(lam_center, dlam):
    """Convert a wavelength interval at ``lam_center`` to GHz.

    First-order conversion ``c * dlam / lam_center**2``; exact enough for
    line widths far below the center wavelength.
    """
    lam = _check_wavelength(lam_center, "lam_center")
    d = np.asarray(dlam, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise DomainError(f"interval must be non-negative, got {dlam!r}")
    out = C_NM_GHZ * d / lam ** 2
    return float(out) if out.ndim == 0 else out


def ghz_to_linewidth(lam_center, dnu_ghz):
    """Inverse of :func:`linewidth_to_ghz` (GHz interval -> nm interval)."""
    lam = _check_wavelength(lam_center, "lam_center")
    d = np.asarray(dnu_ghz, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise DomainError(f"interval must be non-negative, got {dnu_ghz!r}")
    out = d * lam ** 2 / C_NM_GHZ
    return float(out) if out.ndim == 0 else out


def raman_line(excitation_nm, shift_cm=DIAMOND_RAMAN_SHIFT_CM):
    """Wavelength (nm) of the Stokes Raman line for a given excitation.

    Parameters
    ----------
    excitation_nm : float
        Excitation wavelength in nm.
    shift_cm : float
        Raman shift in cm^-1; defaults to the first-order diamond line.

    Raises
    ------
    DomainError
        If the shift would push the line to zero or negative wavenumber.
    """
    lam = float(_check_wavelength(excitation_nm, "excitation"))
    if not math.isfinite(shift_cm):
        raise DomainError(f"shift must be finite, got {shift_cm!r}")
    k_exc = 1e7 / lam  # cm^-1
    if shift_cm >= k_exc:
        raise DomainError(
            f"Raman shift {shift_cm} cm^-1 >= excitation wavenumber {k_exc:.3f} cm^-1")
    return 1e7 / (k_exc - shift_cm)


def ghz_to_kelvin(nu_ghz):
    """Temperature equivalent h*nu/k of a frequency in GHz."""
    return H_OVER_K * nu_ghz

"""
PL spectra: ingestion, peak detection, multi-peak fitting and C/D doublet
assignment with exclusion of the diamond Raman line.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.signal import find_peaks, peak_widths

from . import csvio, units
from .errors import DomainError, InputError
from .fitting import FitProblem, Param, fit

__all__ = [
    "Spectrum", "PeakFit", "DoubletAssignment", "MultiPeakFit", "SHAPES",
    "parse_spectrum", "detect_peaks", "fit_peaks", "fit_doublet", "fit_doublets",
    "line_profile", "synthesize",
]

SHAPES = ("lorentzian", "gaussian", "voigt")
_GAUSS_K = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class Spectrum:
    """One PL acquisition: strictly increasing vacuum wavelengths (nm) and counts."""
    wavelength: np.ndarray
    counts: np.ndarray
    temperature_k: float = None
    excitation_nm: float = None
    label: str = ""

    def __post_init__(self):
        lam = np.asarray(self.wavelength, dtype=float)
        cnt = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "wavelength", lam)
        object.__setattr__(self, "counts", cnt)
        if lam.shape != cnt.shape or lam.ndim != 1:
            raise InputError("wavelength and counts must be 1-d arrays of equal length")
        if lam.size < 8:
            raise InputError(f"a spectrum needs at least 8 points, got {lam.size}")
        csvio.check_increasing(lam, "wavelength")
        csvio.check_nonnegative(cnt, "counts")
        if lam[0] <= 0:
            raise InputError("wavelengths must be positive")

    def to_csv(self):
        return csvio.format_table(("wavelength_nm", "counts"), (self.wavelength, self.counts))


def parse_spectrum(text, **meta):
    """Parse ``wavelength_nm,counts`` CSV text into a :class:`Spectrum`.

    Rows must already be in strictly increasing wavelength order; out of
    order or duplicated wavelengths are rejected, never re-sorted.
    """
    lam, cnt = csvio.read_table(text, ("wavelength_nm", "counts"), min_rows=8)
    return Spectrum(lam, cnt, **meta)


@dataclass(frozen=True)
class PeakFit:
    center: float
    fwhm_ghz: float
    amplitude: float
    baseline: float
    shape: str = "lorentzian"
    eta: float = None
    stderr: dict = field(default_factory=dict)

    @property
    def fwhm_nm(self):
        return units.ghz_to_linewidth(self.center, self.fwhm_ghz)


@dataclass(frozen=True)
class DoubletAssignment:
    c_peak: PeakFit
    d_peak: PeakFit
    splitting_ghz: float
    splitting_stderr_ghz: float = float("nan")
    excluded_raman: PeakFit = None
    fit: object = None


@dataclass
class MultiPeakFit:
    peaks: list
    baseline: float
    shape: str
    fit: object

    def model(self, wavelength):
        return _multi_model(self._vector(), np.asarray(wavelength, dtype=float),
                            self.shape, len(self.peaks))

    def _vector(self):
        v = []
        for p in self.peaks:
            v += [p.center, p.fwhm_nm, p.amplitude]
            if self.shape == "voigt":
                v.append(p.eta)
        return np.array(v + [self.baseline])


def line_profile(x, center, fwhm, shape="lorentzian", eta=0.5):
    """Unit-height line profile; ``fwhm`` in the units of ``x``."""
    dx = (np.asarray(x, dtype=float) - center) / fwhm
    lor = 1.0 / (1.0 + 4.0 * dx * dx)
    if shape == "lorentzian":
        return lor
    gau = np.exp(-_GAUSS_K * dx * dx)
    if shape == "gaussian":
        return gau
    if shape == "voigt":
        return eta * lor + (1.0 - eta) * gau
    raise ValueError(f"unknown line shape {shape!r}")


def _multi_model(p, x, shape, n_peaks):
    per = 4 if shape == "voigt" else 3
    y = np.full_like(x, p[-1], dtype=float)
    for i in range(n_peaks):
        q = p[i * per:(i + 1) * per]
        eta = q[3] if shape == "voigt" else 0.5
        y = y + q[2] * line_profile(x, q[0], q[1], shape, eta)
    return y


def synthesize(wavelength, peaks, baseline=0.0, shape="lorentzian"):
    """Noise-free spectrum counts for ``peaks`` given as (center_nm, fwhm_nm, amplitude[, eta])."""
    x = np.asarray(wavelength, dtype=float)
    y = np.full_like(x, baseline)
    for pk in peaks:
        eta = pk[3] if len(pk) > 3 else 0.5
        y = y + pk[2] * line_profile(x, pk[0], pk[1], shape, eta)
    return y


def _baseline_estimate(counts):
    return float(np.percentile(counts, 10))


def detect_peaks(s, min_prominence=0.05, window=3):
    """Candidate peak centers (nm), ordered by wavelength.

    A candidate is a local maximum whose prominence exceeds
    ``min_prominence * (max(counts) - baseline)`` with the baseline taken
    as the 10th percentile of the counts; maxima closer than ``window``
    samples are merged (the taller wins).
    """
    base = _baseline_estimate(s.counts)
    span = float(s.counts.max()) - base
    if span <= 0:
        return []
    idx, _ = find_peaks(s.counts, prominence=min_prominence * span,
                        distance=max(int(window), 1))
    return [float(s.wavelength[i]) for i in idx]


def _seed_peaks(s, candidates, base):
    seeds = []
    lam, cnt = s.wavelength, s.counts
    for c in candidates:
        i = int(np.argmin(np.abs(lam - c)))
        amp = max(float(cnt[i]) - base, 1e-12 * max(float(cnt.max()), 1.0))
        try:
            w_samples = peak_widths(cnt, [i], rel_height=0.5)[0][0]
        except ValueError:
            w_samples = 0.0
        step = float(np.median(np.diff(lam)))
        fwhm = max(w_samples * step, 2 * step)
        seeds.append((float(lam[i]), fwhm, amp))
    return seeds


def fit_peaks(s, candidates, shape="lorentzian", **fit_options):
    """Simultaneous fit of one line per candidate plus a constant baseline."""
    if shape not in SHAPES:
        raise ValueError(f"unknown line shape {shape!r}")
    if not candidates:
        raise InputError("no peak candidates to fit")
    base = _baseline_estimate(s.counts)
    seeds = _seed_peaks(s, sorted(candidates), base)
    params = []
    for k, (c, w, a) in enumerate(seeds):
        params += [Param(f"center{k}", c, "free"),
                   Param(f"fwhm{k}", w, "log"),
                   Param(f"amp{k}", a, "log")]
        if shape == "voigt":
            params.append(Param(f"eta{k}", 0.5, "bounded", bounds=(0.0, 1.0)))
    params.append(Param("baseline", base, "free", scale=max(abs(base), 1e-3 * (s.counts.max() or 1.0))))
    n = len(seeds)
    res = fit(FitProblem(lambda p, x: _multi_model(p, x, shape, n),
                         s.wavelength, s.counts, params), **fit_options)
    per = 4 if shape == "voigt" else 3
    baseline = float(res.params[-1])
    peaks = []
    for k in range(n):
        q = res.params[k * per:(k + 1) * per]
        e = res.stderr[k * per:(k + 1) * per]
        center, fwhm_nm, amp = map(float, q[:3])
        peaks.append(PeakFit(
            center=center,
            fwhm_ghz=units.linewidth_to_ghz(center, fwhm_nm),
            amplitude=amp, baseline=baseline, shape=shape,
            eta=float(q[3]) if shape == "voigt" else None,
            stderr={"center": float(e[0]),
                    "fwhm_ghz": units.C_NM_GHZ * float(e[1]) / center ** 2,
                    "amplitude": float(e[2]),
                    "baseline": float(res.stderr[-1]),
                    **({"eta": float(e[3])} if shape == "voigt" else {})}))
    return MultiPeakFit(peaks=peaks, baseline=baseline, shape=shape, fit=res)


def _splitting_stderr(c, d):
    # d(nu_c - nu_d) = -c/lc^2 dlc + c/ld^2 dld  (centers fitted jointly; covariance ignored)
    return math.hypot(units.C_NM_GHZ * c.stderr.get("center", 0.0) / c.center ** 2,
                      units.C_NM_GHZ * d.stderr.get("center", 0.0) / d.center ** 2)


def fit_doublets(s, candidates=None, shape="lorentzian", excitation_nm=None,
                 n_doublets=1, raman_shift_cm=units.DIAMOND_RAMAN_SHIFT_CM,
                 raman_window_nm=0.5, **fit_options):
    """Fit all candidates and assign ``n_doublets`` C/D doublets.

    A fitted peak within ``raman_window_nm`` of the diamond Raman line for
    ``excitation_nm`` is kept in the fit but excluded from assignment.  The
    remaining peaks are sorted by wavelength; with ``n_doublets = N`` the
    first ``N`` are C lines and the next ``N`` D lines, paired in order.

    Returns
    -------
    list of DoubletAssignment
        All share the same :class:`MultiPeakFit` in their ``fit`` field.
    """
    if candidates is None:
        candidates = detect_peaks(s)
    if n_doublets < 1:
        raise DomainError("n_doublets must be >= 1")
    mp = fit_peaks(s, candidates, shape, **fit_options)
    raman = None
    kept = list(mp.peaks)
    if excitation_nm is not None:
        target = units.raman_line(excitation_nm, raman_shift_cm)
        near = [p for p in kept if abs(p.center - target) <= raman_window_nm]
        if near:
            raman = min(near, key=lambda p: abs(p.center - target))
            kept.remove(raman)
    kept.sort(key=lambda p: p.center)
    need = 2 * n_doublets
    if len(kept) < need:
        raise InputError(f"need {need} non-Raman peaks for {n_doublets} doublet(s), "
                         f"found {len(kept)}")
    if len(kept) > need:
        # keep the strongest lines, preserving wavelength order
        strongest = sorted(kept, key=lambda p: -p.amplitude)[:need]
        kept = sorted(strongest, key=lambda p: p.center)
    out = []
    for c, d in zip(kept[:n_doublets], kept[n_doublets:need]):
        out.append(DoubletAssignment(
            c_peak=c, d_peak=d,
            splitting_ghz=units.splitting_from_wavelengths(c.center, d.center),
            splitting_stderr_ghz=_splitting_stderr(c, d),
            excluded_raman=raman, fit=mp))
    return out


def fit_doublet(s, candidates=None, shape="lorentzian", excitation_nm=None, **kwargs):
    """Single-doublet form of :func:`fit_doublets`."""
    return fit_doublets(s, candidates, shape, excitation_nm, n_doublets=1, **kwargs)[0]

"""
Kinetic Monte Carlo simulation of a three-level emitter.

States are ground (g), excited (e) and a metastable shelf (s)::

    g --k_exc--> e --k_rad--> g   (photon, detected with probability eta)
                 e --k_sh---> s --k_des--> g

Waiting times are exponential (Gillespie).  Uncorrelated background clicks
are added as an independent Poisson process.  The inner loop runs in the
compiled kernel when available; both backends consume the same random
stream and produce bit-identical results.
"""
from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy.optimize import brentq

from . import csvio, kernels
from .errors import DomainError, InputError
from .photostats import G2FitParams, G2Histogram, SaturationParams

__all__ = [
    "EmitterRates", "ClickStream", "simulate_stream", "merge_streams",
    "coincidence_histogram", "steady_state_intensity", "analytic_g2_params",
    "saturation_params_from_rates", "rates_for_antibunching_time",
]

_BLOCK = 1 << 16
_OUT = 1 << 16


@dataclass(frozen=True)
class EmitterRates:
    """Transition rates in 1/ns, detection efficiency and background (counts/ns)."""
    k_exc: float
    k_rad: float
    k_sh: float = 0.0
    k_des: float = 0.0
    eta: float = 1.0
    r_bg: float = 0.0

    def __post_init__(self):
        for name in ("k_exc", "k_rad", "k_sh", "k_des", "r_bg"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")
        if not self.k_rad > 0:
            raise DomainError(f"k_rad must be positive, got {self.k_rad!r}")
        if not 0 <= self.eta <= 1:
            raise DomainError(f"eta must lie in [0, 1], got {self.eta!r}")

    @classmethod
    def from_dict(cls, d):
        known = {k: float(d[k]) for k in ("k_exc", "k_rad", "k_sh", "k_des", "eta", "r_bg") if k in d}
        try:
            return cls(**known)
        except TypeError as exc:
            raise InputError(f"invalid emitter rates: {exc}") from None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ClickStream:
    timestamps: np.ndarray
    duration: float
    seed: object = None

    @property
    def rate(self):
        return self.timestamps.size / self.duration

    def to_csv(self):
        return csvio.format_table(("timestamp_ns",), (self.timestamps,))


def _seed_sequence(seed):
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def simulate_stream(rates, duration, seed=0, jitter_ns=0.0, backend=None):
    """Simulate detector clicks from one emitter plus background.

    Parameters
    ----------
    rates : EmitterRates
    duration : float
        Simulated time in ns.
    seed : int or numpy.random.SeedSequence
        The stream is a deterministic function of ``(rates, duration, seed)``.
    jitter_ns : float
        Standard deviation of optional Gaussian timing jitter (default off).
    backend : {"cython", "python"}, optional
        Kernel implementation; defaults to the active one.

    Returns
    -------
    ClickStream
        The emitter starts in the ground state at ``t = 0``.
    """
    if not duration > 0:
        raise DomainError(f"duration must be positive, got {duration!r}")
    kern = kernels.get(backend)
    ss = _seed_sequence(seed)
    emit_ss, bg_ss, jit_ss = ss.spawn(3)
    rng = np.random.default_rng(emit_ss)

    chunks = []
    if rates.eta > 0:
        out = np.empty(_OUT)
        state, t, done = 0, 0.0, False
        while not done:
            exps = rng.standard_exponential(_BLOCK)
            unis = rng.random(_BLOCK)
            pos = 0
            while pos < _BLOCK and not done:
                state, t, used, n_out, done = kern.emitter_chunk(
                    state, t, exps[pos:], unis[pos:], rates.k_exc, rates.k_rad,
                    rates.k_sh, rates.k_des, rates.eta, float(duration), out)
                if n_out:
                    chunks.append(out[:n_out].copy())
                pos += used
    emitted = np.concatenate(chunks) if chunks else np.empty(0)

    if rates.r_bg > 0:
        bg_rng = np.random.default_rng(bg_ss)
        n_bg = bg_rng.poisson(rates.r_bg * duration)
        bg = np.sort(bg_rng.uniform(0.0, duration, n_bg))
        clicks = np.sort(np.concatenate([emitted, bg]), kind="stable")
    else:
        clicks = emitted
    if jitter_ns > 0 and clicks.size:
        jit = np.random.default_rng(jit_ss).normal(0.0, jitter_ns, clicks.size)
        clicks = np.sort(np.clip(clicks + jit, 0.0, duration))
    return ClickStream(clicks, float(duration), seed)


def merge_streams(*streams):
    """Superpose independent streams recorded over the same duration."""
    if not streams:
        raise ValueError("nothing to merge")
    duration = streams[0].duration
    if any(s.duration != duration for s in streams):
        raise ValueError("streams must share one duration")
    t = np.sort(np.concatenate([s.timestamps for s in streams]), kind="stable")
    return ClickStream(t, duration, tuple(s.seed for s in streams))


def coincidence_histogram(stream, bin_width, max_delay, backend=None):
    """Normalised pair-delay histogram of a click stream.

    Every unordered pair of clicks with delay ``d < (K + 1/2) w`` contributes
    to the bins at ``+d`` and ``-d`` (the bin at zero gets both orientations),
    where ``K = round(max_delay / w)`` and bin ``k`` spans
    ``[(k - 1/2) w, (k + 1/2) w)``.  Counts are divided by the uncorrelated
    expectation ``N**2 * w / T`` (rate squared x duration x bin width), so
    ``g2 -> 1`` at large delay.  The result is exactly symmetric in tau.
    """
    n = stream.timestamps.size
    if n < 100:
        raise InputError(f"need at least 100 clicks for a histogram, got {n}")
    if not (bin_width > 0 and max_delay >= bin_width):
        raise DomainError("need bin_width > 0 and max_delay >= bin_width")
    nbins = int(round(max_delay / bin_width))
    pos = np.zeros(nbins + 1, dtype=np.int64)
    kernels.get(backend).pair_counts(np.ascontiguousarray(stream.timestamps, dtype=float),
                                     float(bin_width), nbins, pos)
    counts = np.concatenate([pos[:0:-1], [2 * pos[0]], pos[1:]])
    k = np.arange(-nbins, nbins + 1)
    expected = np.full(k.size, n * n * bin_width / stream.duration)
    return G2Histogram(tau=k * bin_width, g2=counts / expected,
                       counts=counts, expected=expected)


def _populations(r):
    """Steady-state (p_g, p_e, p_s)."""
    if r.k_sh > 0 and r.k_des == 0:
        return 0.0, 0.0, 1.0
    shelf = r.k_sh / r.k_des if r.k_sh > 0 else 0.0
    if r.k_exc == 0:
        return 1.0, 0.0, 0.0
    # p_g = p_e (k_rad + k_sh) / k_exc,  p_s = p_e k_sh / k_des
    p_e = 1.0 / (1.0 + (r.k_rad + r.k_sh) / r.k_exc + shelf)
    return p_e * (r.k_rad + r.k_sh) / r.k_exc, p_e, p_e * shelf


def steady_state_intensity(rates):
    """Mean detected count rate (counts/ns): ``eta k_rad p_e + r_bg``."""
    _, p_e, _ = _populations(rates)
    return rates.eta * rates.k_rad * p_e + rates.r_bg


def saturation_params_from_rates(rates, k_exc_per_mw):
    """Saturation law implied by ``k_exc = sigma * P`` (P in mW).

    Returns ``SaturationParams`` in counts/ns and mW (background excluded).
    """
    if not k_exc_per_mw > 0:
        raise DomainError("k_exc_per_mw must be positive")
    shelf = rates.k_sh / rates.k_des if rates.k_sh > 0 else 0.0
    if rates.k_sh > 0 and rates.k_des == 0:
        raise DomainError("a shelf without de-shelving never saturates to a finite level")
    i_inf = rates.eta * rates.k_rad / (1.0 + shelf)
    p_sat = (rates.k_rad + rates.k_sh) / (k_exc_per_mw * (1.0 + shelf))
    return SaturationParams(i_inf, p_sat)


def analytic_g2_params(rates):
    """Exact g2 parameters of the background-free three-level emitter.

    The rate matrix has eigenvalues ``0, -1/tau1, -1/tau2``; the
    excited-state population after a detection (emitter reset to g) gives
    ``g2 = 1 - c[(1 + b) e^{-|t|/tau1} - b e^{-|t|/tau2}]`` with ``c = 1``.
    """
    a, r, s, d = rates.k_exc, rates.k_rad, rates.k_sh, rates.k_des
    _, p_e, _ = _populations(rates)
    if p_e == 0:
        raise DomainError("no steady-state emission; g2 undefined")
    B = a + r + s + d
    C = a * s + a * d + r * d + s * d
    disc = B * B - 4 * C
    if disc < 0:
        raise DomainError("rate matrix has complex eigenvalues; g2 oscillates")
    root = math.sqrt(disc)
    lam_fast = -(B + root) / 2.0
    lam_slow = -(B - root) / 2.0
    if lam_slow == lam_fast:
        raise DomainError("degenerate eigenvalues")
    # p_e(t) = p_e + A_f e^{lam_f t} + A_s e^{lam_s t}, p_e(0) = 0, p_e'(0) = k_exc
    A_s = (a + lam_fast * p_e) / (lam_slow - lam_fast)
    A_f = -p_e - A_s
    b = A_s / p_e
    tau2 = -1.0 / lam_slow if lam_slow < 0 else math.inf
    return G2FitParams(c=-(A_f + A_s) / p_e, b=b, tau1=-1.0 / lam_fast, tau2=tau2)


def rates_for_antibunching_time(tau1, k_exc, k_sh=0.0, k_des=0.0, eta=1.0, r_bg=0.0):
    """Choose ``k_rad`` so that the analytic antibunching time equals ``tau1``."""
    if not tau1 > 0:
        raise DomainError("tau1 must be positive")

    def gap(k_rad):
        return analytic_g2_params(EmitterRates(k_exc, k_rad, k_sh, k_des, eta, r_bg)).tau1 - tau1

    # tau1 falls with k_rad; where eigenvalues turn complex the gap is undefined,
    # so scan a geometric grid for the first defined sign change
    prev = None
    for k in np.geomspace(1e-9, 10.0 / tau1, 400):
        try:
            g = gap(k)
        except DomainError:
            prev = None
            continue
        if prev is not None and prev[1] > 0 >= g:
            break
        prev = (k, g)
    else:
        raise DomainError(f"no radiative rate reaches tau1 = {tau1} ns with these rates")
    if g == 0:
        return EmitterRates(k_exc, float(k), k_sh, k_des, eta, r_bg)
    k_rad = brentq(gap, prev[0], k, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return EmitterRates(k_exc, k_rad, k_sh, k_des, eta, r_bg)

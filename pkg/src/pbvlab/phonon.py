"""
Phonon-mediated upward transition rate between split ground-state branches.

The rate scales as ``Delta^3 / (exp(h Delta / k T) - 1)`` times a material
prefactor.  That prefactor is not identifiable from optical data, so every
public output is normalised to a reference species at a reference
temperature, where it cancels.
"""
from dataclasses import dataclass
import json
import math

import numpy as np

from . import defaults
from .errors import DomainError, InputError
from .units import H_OVER_K

__all__ = [
    "CenterSpecies", "RateReference", "RateTable", "relative_rate",
    "log_relative_rate", "normalized_rate", "equivalent_temperature",
    "rate_table", "builtin_species", "default_reference", "load_species",
    "find_species",
]

_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class CenterSpecies:
    name: str
    delta_gs_ghz: float
    delta_es_ghz: float = None
    source: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.delta_gs_ghz) and self.delta_gs_ghz > 0):
            raise DomainError(f"{self.name}: ground-state splitting must be positive")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(name=str(d["name"]), delta_gs_ghz=float(d["delta_gs_ghz"]),
                       delta_es_ghz=None if d.get("delta_es_ghz") is None else float(d["delta_es_ghz"]),
                       source=str(d.get("source", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid species entry {d!r}: {exc}") from None

    def to_dict(self):
        return {"name": self.name, "delta_gs_ghz": self.delta_gs_ghz,
                "delta_es_ghz": self.delta_es_ghz, "source": self.source}


@dataclass(frozen=True)
class RateReference:
    species: CenterSpecies
    temperature_k: float

    def __post_init__(self):
        if not self.temperature_k > 0:
            raise DomainError("reference temperature must be positive")

    @property
    def label(self):
        return f"{self.species.name}@{self.temperature_k:g}K"


def _check(delta, T):
    if not (math.isfinite(delta) and delta > 0):
        raise DomainError(f"splitting must be positive, got {delta!r}")
    if not (math.isfinite(T) and T > 0):
        raise DomainError(f"temperature must be positive, got {T!r}")


def relative_rate(delta_ghz, T, prefactor=1.0):
    """``prefactor * Delta^3 / (exp(h Delta / k T) - 1)`` in GHz^3.

    Returns exactly 0 once ``h Delta / k T`` exceeds 700.
    """
    _check(delta_ghz, T)
    x = H_OVER_K * delta_ghz / T
    if x > _EXP_LIMIT:
        return 0.0
    return prefactor * delta_ghz ** 3 / math.expm1(x)


def log_relative_rate(delta_ghz, T):
    """Natural log of :func:`relative_rate` (prefactor 1), without underflow."""
    _check(delta_ghz, T)
    x = H_OVER_K * delta_ghz / T
    log_den = x + math.log1p(-math.exp(-x)) if x > 30.0 else math.log(math.expm1(x))
    return 3.0 * math.log(delta_ghz) - log_den


def normalized_rate(delta_ghz, T, ref, prefactor=1.0):
    """Rate relative to ``ref``; the prefactor cancels.

    Raises
    ------
    DomainError
        If the reference rate itself underflows to zero.
    """
    ref_rate = relative_rate(ref.species.delta_gs_ghz, ref.temperature_k, prefactor)
    if ref_rate == 0.0:
        raise DomainError(f"reference rate underflows at {ref.label}")
    _check(delta_ghz, T)
    if prefactor == 1.0:
        return math.exp(log_relative_rate(delta_ghz, T)
                        - log_relative_rate(ref.species.delta_gs_ghz, ref.temperature_k))
    return relative_rate(delta_ghz, T, prefactor) / ref_rate


def _dlog_rate_dlogT(delta_ghz, T):
    x = H_OVER_K * delta_ghz / T
    return x / -math.expm1(-x)


def equivalent_temperature(delta_ghz, ref, rel_tol=1e-9, max_iter=200):
    """Temperature at which ``delta_ghz`` has the reference rate.

    The log-rate is strictly increasing in log T, so the root is unique.
    A bracket is grown geometrically, then refined by Newton steps in
    log T, falling back to bisection whenever a step leaves the bracket.
    Iteration stops once ``|normalized_rate - 1|`` is below ``rel_tol / 100``
    or the bracket has collapsed to machine precision.
    """
    _check(delta_ghz, ref.temperature_k)
    target = log_relative_rate(ref.species.delta_gs_ghz, ref.temperature_k)

    def f(s):
        return log_relative_rate(delta_ghz, math.exp(s)) - target

    s = math.log(ref.temperature_k * delta_ghz / ref.species.delta_gs_ghz)
    fs = f(s)
    if fs == 0.0:
        return math.exp(s)
    step = math.log(2.0)
    lo = hi = s
    if fs < 0:
        while f(hi) < 0:
            lo, hi = hi, hi + step
    else:
        while f(lo) > 0:
            lo, hi = lo - step, lo
    tol = rel_tol / 100.0
    for _ in range(max_iter):
        fs = f(s)
        if abs(fs) <= tol:
            break
        if fs < 0:
            lo = max(lo, s)
        else:
            hi = min(hi, s)
        s_new = s - fs / _dlog_rate_dlogT(delta_ghz, math.exp(s))
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= 4 * np.finfo(float).eps * max(abs(s), 1.0):
            s = s_new
            break
        s = s_new
    return math.exp(s)


@dataclass
class RateTable:
    species: list
    temperatures: np.ndarray
    rates: np.ndarray
    reference: RateReference

    def row(self, name):
        for i, sp in enumerate(self.species):
            if sp.name == name:
                return self.rates[i]
        raise KeyError(name)


def rate_table(species, temperatures, ref):
    """Normalised rate for every species (rows) and temperature (columns)."""
    T = np.asarray(temperatures, dtype=float)
    if T.ndim != 1 or T.size == 0 or np.any(~np.isfinite(T)) or np.any(T <= 0):
        raise DomainError("temperature grid must be a non-empty list of positive values")
    rates = np.array([[normalized_rate(sp.delta_gs_ghz, t, ref) for t in T] for sp in species])
    return RateTable(list(species), T, rates, ref)


def builtin_species():
    """Species table from the active defaults file."""
    return [CenterSpecies.from_dict(d) for d in defaults.load_defaults()["species"]]


def load_species(path):
    """Read a JSON species list (``[{name, delta_gs_ghz, delta_es_ghz, source}, ...]``)."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict):
        data = data.get("species", [])
    if not isinstance(data, list) or not data:
        raise InputError(f"{path}: expected a non-empty list of species")
    return [CenterSpecies.from_dict(d) for d in data]


def find_species(name, species=None):
    species = builtin_species() if species is None else species
    for sp in species:
        if sp.name.lower().replace("-", "") == name.lower().replace("-", ""):
            return sp
    raise InputError(f"unknown species {name!r}; known: {[s.name for s in species]}")


def default_reference(species=None):
    ref = defaults.load_defaults()["reference"]
    return RateReference(find_species(ref["species"], species), float(ref["temperature_k"]))


def parse_reference(text, species=None):
    """Parse ``name@T`` (e.g. ``siv2@0.4``) into a :class:`RateReference`."""
    try:
        name, temp = text.split("@")
        T = float(temp.rstrip("kK"))
    except ValueError:
        raise InputError(f"reference must look like NAME@TEMPERATURE, got {text!r}") from None
    aliases = {"siv1": "SiV-I", "siv2": "SiV-II"}
    return RateReference(find_species(aliases.get(name.lower(), name), species), T)

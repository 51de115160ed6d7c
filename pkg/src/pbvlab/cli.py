"""
Command-line front end.

Every analysis subcommand writes a JSON report (``--out`` or stdout)::

    {
      "schema_version": 1,
      "tool": "pbvlab", "version": "...",
      "command": "fit-g2",
      "options": {...},                      # analysis options that were used
      "inputs": [{"name": "g2.csv", "sha256": "..."}],
      "params": {"tau1": {"value": 3.7, "stderr": 0.02}, ...},
      "derived": {...},                      # splitting, lifetime, visibility, ...
      "models": [{"label": ..., "kind": ..., "params": {...}}],
      "curve": {"x_name": ..., "x_min": ..., "x_max": ..., "points": ..., "spacing": ...},
      "fit": [{"label": ..., "converged": ..., "n_iter": ..., ...}],
      "warnings": [...],
      "converged": true,
      "generated_at": "..."                  # the only run-dependent field
    }

``models`` and ``curve`` are enough to regenerate the ``--plot-data``
samples exactly (:func:`evaluate_report`).  Non-finite numbers are written
as ``null``.

Exit codes: 0 success, 2 usage error, 3 input validation error,
4 fit failure or non-convergence (the report is still written).
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
import datetime
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__, csvio, defaults, emitter_sim, phonon, photostats
from . import polarization, spectra, svgplot, thermal
from .errors import FitError, InputError, NonFiniteModelError, PbvlabError

SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_FIT = 0, 2, 3, 4


class UsageError(Exception):
    pass


# --------------------------------------------------------------- helpers

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(report):
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _read_input(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError:
        raise InputError(f"{path}: not UTF-8 text") from None
    return text, {"name": os.path.basename(path), "sha256": hashlib.sha256(raw).hexdigest()}


def _param(value, stderr):
    return {"value": value, "stderr": stderr}


def _fit_summary(res, label=""):
    return {"label": label, "converged": res.converged, "n_iter": res.n_iter,
            "cost": res.cost, "dof": res.dof, "reduced_chi2": res.reduced_chi2,
            "rank_deficient": res.rank_deficient, "flags": list(res.flags),
            "message": res.message}


def _curve(x_name, x_min, x_max, points, spacing="linear"):
    return {"x_name": x_name, "x_min": float(x_min), "x_max": float(x_max),
            "points": int(points), "spacing": spacing}


def curve_grid(curve):
    if curve["spacing"] == "log":
        return np.geomspace(curve["x_min"], curve["x_max"], curve["points"])
    return np.linspace(curve["x_min"], curve["x_max"], curve["points"])


def evaluate_model(model, x):
    """Re-evaluate one ``models`` entry of a report on ``x``."""
    kind, p = model["kind"], model["params"]
    x = np.asarray(x, dtype=float)
    if kind == "multi_peak":
        return spectra.synthesize(x, [tuple(pk) for pk in p["peaks"]], p["baseline"], p["shape"])
    if kind == "linewidth":
        return np.asarray(thermal.linewidth_model(x, thermal.LinewidthParams(**p)), dtype=float)
    if kind == "shift":
        return np.asarray(thermal.shift_model(x, thermal.ShiftParams(**p)), dtype=float)
    if kind == "g2":
        return np.asarray(photostats.g2_model(x, photostats.G2FitParams(**p)), dtype=float)
    if kind == "saturation":
        return np.asarray(photostats.saturation_model(x, photostats.SaturationParams(**p)), dtype=float)
    if kind == "cos2":
        return polarization._cos2_model(np.array([p["amplitude"], p["offset"], p["theta0_deg"]]), x)
    if kind == "dipole":
        cfg = polarization.DipoleConfig(polarization.defect_frame(p["orientation"]), tuple(p["weights"]))
        return polarization.polar_intensity_curve(cfg, x, normalize=p["normalize"])
    if kind == "phonon_rate":
        ref = phonon.RateReference(phonon.CenterSpecies("ref", p["ref_delta_ghz"]), p["ref_temperature_k"])
        return np.array([phonon.normalized_rate(p["delta_gs_ghz"], t, ref) for t in x])
    raise ValueError(f"unknown model kind {kind!r}")


def evaluate_report(report):
    """``(x, {label: y})`` curve samples described by a report."""
    x = curve_grid(report["curve"])
    return x, {m["label"]: evaluate_model(m, x) for m in report["models"]}


def plot_data_csv(report):
    x, ys = evaluate_report(report)
    labels = list(ys)
    return csvio.format_table((report["curve"]["x_name"], *labels), (x, *(ys[k] for k in labels)))


def _fit_opts(opts):
    m = getattr(opts, "max_iter", None)
    return {} if m is None else {"max_iter": m}


def _new_report(command, options, inputs):
    return {"schema_version": SCHEMA_VERSION, "tool": "pbvlab", "version": __version__,
            "command": command, "options": options, "inputs": inputs,
            "params": {}, "derived": {}, "models": [], "curve": None, "fit": [],
            "warnings": [], "converged": True}


def _finish(report, fits):
    report["fit"] = [_fit_summary(res, label) for label, res in fits]
    report["converged"] = all(res.converged for _, res in fits)
    return report


# -------------------------------------------------------------- analyses
# Each returns (report, plot) where plot is None or a dict of svgplot.render
# keyword arguments for the measured points.

def analyze_spectrum(path, opts):
    text, digest = _read_input(path)
    cfg = defaults.load_defaults()
    s = spectra.parse_spectrum(text, excitation_nm=opts.excitation_nm)
    options = {"shape": opts.shape, "excitation_nm": opts.excitation_nm,
               "doublets": opts.doublets, "raman_shift_cm": cfg["diamond_raman_shift_cm"],
               "raman_window_nm": cfg["raman_exclusion_nm"]}
    rep = _new_report("fit-spectrum", options, [digest])
    ds = spectra.fit_doublets(s, None, opts.shape, opts.excitation_nm, opts.doublets,
                              raman_shift_cm=cfg["diamond_raman_shift_cm"],
                              raman_window_nm=cfg["raman_exclusion_nm"], **_fit_opts(opts))
    mp = ds[0].fit
    for k, pk in enumerate(mp.peaks):
        rep["params"][f"center{k}_nm"] = _param(pk.center, pk.stderr["center"])
        rep["params"][f"fwhm{k}_ghz"] = _param(pk.fwhm_ghz, pk.stderr["fwhm_ghz"])
        rep["params"][f"amplitude{k}"] = _param(pk.amplitude, pk.stderr["amplitude"])
        if pk.eta is not None:
            rep["params"][f"eta{k}"] = _param(pk.eta, pk.stderr["eta"])
    rep["params"]["baseline"] = _param(mp.baseline, mp.peaks[0].stderr["baseline"])
    rep["derived"]["doublets"] = [
        {"c_center_nm": d.c_peak.center, "d_center_nm": d.d_peak.center,
         "c_fwhm_ghz": d.c_peak.fwhm_ghz, "d_fwhm_ghz": d.d_peak.fwhm_ghz,
         "splitting_ghz": d.splitting_ghz, "splitting_stderr_ghz": d.splitting_stderr_ghz}
        for d in ds]
    raman = ds[0].excluded_raman
    if raman is not None:
        expected = spectra.units.raman_line(opts.excitation_nm, cfg["diamond_raman_shift_cm"])
        rep["derived"]["raman_excluded"] = {"center_nm": raman.center, "expected_nm": expected}
        rep["warnings"].append(f"peak at {raman.center:.3f} nm excluded from assignment as the "
                               f"diamond Raman line (expected {expected:.3f} nm)")
    else:
        rep["derived"]["raman_excluded"] = None
    res_ghz = cfg["spectrometer_resolution_ghz"]
    for k, pk in enumerate(mp.peaks):
        if pk.fwhm_ghz < res_ghz:
            rep["warnings"].append(f"peak {k} FWHM {pk.fwhm_ghz:.1f} GHz is below the "
                                   f"spectrometer resolution ({res_ghz:g} GHz)")
    rep["models"] = [{"label": "model", "kind": "multi_peak", "params": {
        "shape": mp.shape, "baseline": mp.baseline,
        "peaks": [[p.center, p.fwhm_nm, p.amplitude] + ([p.eta] if p.eta is not None else [])
                  for p in mp.peaks]}}]
    rep["curve"] = _curve("wavelength_nm", s.wavelength[0], s.wavelength[-1], 2001)
    _finish(rep, [("peaks", mp.fit)])
    return rep, {"points": (s.wavelength, s.counts), "xlabel": "wavelength (nm)", "ylabel": "counts"}


def analyze_temperature(path, opts):
    text, digest = _read_input(path)
    s = thermal.ThermalSeries.from_csv(text, opts.mode)
    rep = _new_report("fit-temperature", {"mode": opts.mode}, [digest])
    if opts.mode == "linewidth":
        p, res = thermal.fit_linewidth_series(s, **_fit_opts(opts))
        names, ylabel = ("w0", "a3"), "FWHM (GHz)"
    else:
        p, res = thermal.fit_shift_series(s, **_fit_opts(opts))
        names, ylabel = ("l0", "b2", "b4"), "peak position"
    for name, se in zip(names, res.stderr):
        rep["params"][name] = _param(getattr(p, name), se)
    rep["models"] = [{"label": "model", "kind": opts.mode, "params": {n: getattr(p, n) for n in names}}]
    rep["curve"] = _curve("temperature_k", s.temperature[0], s.temperature[-1], 201)
    if opts.mode == "shift":
        y = evaluate_model(rep["models"][0], curve_grid(rep["curve"]))
        d = np.diff(y)
        rep["derived"]["trend"] = ("nondecreasing" if np.all(d >= 0) else
                                   "nonincreasing" if np.all(d <= 0) else "non-monotone")
    else:
        rep["derived"]["broadening_at_t_max_ghz"] = p.a3 * float(s.temperature[-1]) ** 3
    _finish(rep, [("model", res)])
    return rep, {"points": (s.temperature, s.value), "xlabel": "temperature (K)", "ylabel": ylabel}


def analyze_g2(path, opts):
    text, digest = _read_input(path)
    h = photostats.G2Histogram.from_csv(text)
    rho = opts.rho
    if rho is None and opts.signal is not None:
        rho = photostats.signal_fraction(opts.signal, opts.background)
    options = {"rho": rho, "signal": opts.signal, "background": opts.background,
               "low_power": opts.low_power}
    rep = _new_report("fit-g2", options, [digest])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if rho is not None:
            h = photostats.correct_g2_background(h, rho)
        g = photostats.fit_g2(h, low_power=opts.low_power, **_fit_opts(opts))
    rep["warnings"] += [str(w.message) for w in caught] + list(g.warnings)
    for name in ("c", "b", "tau1", "tau2"):
        rep["params"][name] = _param(getattr(g.params, name), getattr(g.stderr, name))
    rep["derived"]["background_corrected"] = rho is not None
    rep["derived"]["rho"] = rho
    rep["derived"]["g2_zero"] = g.g2_zero
    rep["derived"]["lifetime_ns"] = g.lifetime_ns
    try:
        n = photostats.emitter_count(g.g2_zero)
        rep["derived"]["emitter_count"] = {"n_real": n.n_real, "n_int": n.n_int, "margin": n.margin}
    except PbvlabError as exc:
        rep["derived"]["emitter_count"] = None
        rep["warnings"].append(str(exc))
    rep["models"] = [{"label": "model", "kind": "g2", "params": {
        k: getattr(g.params, k) for k in ("c", "b", "tau1", "tau2")}}]
    rep["curve"] = _curve("tau_ns", h.tau[0], h.tau[-1], 801)
    _finish(rep, [("g2", g.fit)])
    return rep, {"points": (h.tau, h.g2), "xlabel": "delay (ns)",
                 "ylabel": "g2 (corrected)" if rho is not None else "g2"}


def analyze_saturation(path, opts):
    text, digest = _read_input(path)
    total = photostats.SaturationSeries.from_csv(text)
    inputs, bg = [digest], None
    if opts.background_csv:
        btext, bdigest = _read_input(opts.background_csv)
        bg = photostats.SaturationSeries.from_csv(btext, kind="background")
        inputs.append(bdigest)
    rep = _new_report("fit-saturation", {"background": bg is not None}, inputs)
    sf = photostats.fit_saturation(total, bg, **_fit_opts(opts))
    rep["params"]["i_inf"] = _param(sf.params.i_inf, sf.stderr.i_inf)
    rep["params"]["p_sat"] = _param(sf.params.p_sat, sf.stderr.p_sat)
    rep["derived"]["raw"] = {"i_inf": float(sf.raw.params[0]), "p_sat": float(sf.raw.params[1]),
                             "converged": sf.raw.converged}
    rep["derived"]["background_slope"] = sf.background_slope
    rep["derived"]["background_intercept"] = sf.background_intercept
    rep["warnings"] += list(sf.flags)
    rep["models"] = [{"label": "model", "kind": "saturation",
                      "params": {"i_inf": sf.params.i_inf, "p_sat": sf.params.p_sat}}]
    rep["curve"] = _curve("power_mw", 0.0, total.power[-1], 201)
    fits = [("corrected" if bg is not None else "total", sf.fit)]
    _finish(rep, fits)
    shown = sf.corrected if sf.corrected is not None else total
    return rep, {"points": (shown.power, shown.intensity), "xlabel": "power (mW)",
                 "ylabel": "intensity (kcps)"}


def analyze_polarization_fit(paths, opts):
    series, inputs = [], []
    for k, path in enumerate(paths, start=1):
        text, digest = _read_input(path)
        series.append(polarization.PolarizationSeries.from_csv(text, label=f"s{k}"))
        inputs.append(digest)
    rep = _new_report("polarization fit", {}, inputs)
    fits = [polarization.fit_polarization(s, **_fit_opts(opts)) for s in series]
    vis = {}
    for s, f in zip(series, fits):
        for name, value in (("amplitude", f.amplitude), ("offset", f.offset),
                            ("theta0_deg", f.theta0_deg)):
            rep["params"][f"{s.label}.{name}"] = _param(value, f.stderr[name])
        vis[s.label] = {"value": f.visibility, "stderr": f.stderr["visibility"]}
        rep["models"].append({"label": s.label, "kind": "cos2", "params": {
            "amplitude": f.amplitude, "offset": f.offset, "theta0_deg": f.theta0_deg}})
    rep["derived"]["visibility"] = vis
    rep["derived"]["orthogonality_deg"] = (polarization.orthogonality(fits[0], fits[1])
                                           if len(fits) == 2 else None)
    rep["curve"] = _curve("angle_deg", 0.0, 360.0, 361)
    _finish(rep, [(s.label, f.fit) for s, f in zip(series, fits)])
    pts = (np.concatenate([s.angle_deg for s in series]), np.concatenate([s.intensity for s in series]))
    return rep, {"points": pts, "xlabel": "polarizer angle (deg)", "ylabel": "intensity"}


def analyze_polarization_predict(opts):
    frame = polarization.defect_frame(opts.orientation)
    weights = {"z": (0.0, 0.0, 1.0), "xy": (1.0, 1.0, 0.0)}[opts.dipole]
    cfg = polarization.DipoleConfig(frame, weights)
    rep = _new_report("polarization predict",
                      {"dipole": opts.dipole, "orientation": opts.orientation}, [])
    rep["derived"]["visibility"] = polarization.dipole_visibility(cfg)
    rep["derived"]["projection_magnitudes"] = {
        axis: float(np.linalg.norm(polarization.project_dipole(v)))
        for axis, v in zip("xyz", frame.matrix())}
    if opts.dipole == "xy":
        rep["warnings"].append(
            "transverse-projection model; a full emission-pattern calculation reports "
            f"{polarization.XY_EQUAL_VISIBILITY_LITERATURE:.3f} for an equal X+Y mixture")
    rep["models"] = [{"label": f"{opts.dipole}[{opts.orientation}]", "kind": "dipole", "params": {
        "orientation": opts.orientation, "weights": list(weights), "normalize": True}}]
    rep["curve"] = _curve("angle_deg", 0.0, 360.0, opts.points)
    return rep, {"xlabel": "polarizer angle (deg)", "ylabel": "normalized intensity"}


def _species_and_ref(opts):
    species = phonon.load_species(opts.species) if getattr(opts, "species", None) else phonon.builtin_species()
    if opts.ref:
        ref = phonon.parse_reference(opts.ref, species + phonon.builtin_species())
    else:
        ref = phonon.default_reference(phonon.builtin_species())
    return species, ref


def analyze_phonon_table(opts):
    inputs = []
    if opts.species:
        inputs.append(_read_input(opts.species)[1])
    species, ref = _species_and_ref(opts)
    if not 0 < opts.tmin < opts.tmax:
        raise InputError("need 0 < tmin < tmax")
    if opts.points < 2:
        raise InputError("need at least 2 temperature points")
    rep = _new_report("phonon table", {"tmin": opts.tmin, "tmax": opts.tmax, "points": opts.points,
                                       "spacing": opts.spacing, "reference": ref.label}, inputs)
    rep["curve"] = _curve("temperature_k", opts.tmin, opts.tmax, opts.points, opts.spacing)
    table = phonon.rate_table(species, curve_grid(rep["curve"]), ref)
    rep["derived"]["species"] = [sp.to_dict() for sp in species]
    rep["derived"]["equivalent_temperature_k"] = {
        sp.name: phonon.equivalent_temperature(sp.delta_gs_ghz, ref) for sp in species}
    rep["models"] = [{"label": sp.name, "kind": "phonon_rate", "params": {
        "delta_gs_ghz": sp.delta_gs_ghz, "ref_delta_ghz": ref.species.delta_gs_ghz,
        "ref_temperature_k": ref.temperature_k}} for sp in species]
    with np.errstate(divide="ignore"):
        curves = [(table.temperatures, np.log10(row)) for row in table.rates]
    return rep, {"curves": curves, "xlabel": "temperature (K)",
                 "ylabel": f"log10 rate / rate({ref.label})"}


def analyze_phonon_equiv(opts):
    _, ref = _species_and_ref(opts)
    rep = _new_report("phonon equiv-temp", {"delta_ghz": opts.delta_ghz, "reference": ref.label}, [])
    T = phonon.equivalent_temperature(opts.delta_ghz, ref)
    rep["derived"]["equivalent_temperature_k"] = T
    rep["derived"]["residual"] = abs(phonon.normalized_rate(opts.delta_ghz, T, ref) - 1.0)
    return rep, None


# ------------------------------------------------------------- simulate

def _load_sim_config(path):
    text, _ = _read_input(path)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: expected a JSON object")
    rates = cfg.get("rates", cfg)
    try:
        r = emitter_sim.EmitterRates.from_dict(rates)
    except KeyError as exc:
        raise InputError(f"{path}: missing rate {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return cfg, r


def simulate(opts):
    """CSV text for ``simulate stream|g2|saturation``.

    Config keys: ``rates`` (EmitterRates fields), ``duration_ns``,
    ``jitter_ns``, ``emitters`` (identical independent copies, g2 and
    stream), ``bin_width_ns``, ``max_delay_ns`` (g2), ``powers_mw`` and
    ``k_exc_per_mw`` (saturation; ``k_exc`` is then ignored).
    """
    cfg, rates = _load_sim_config(opts.config)
    duration = float(cfg.get("duration_ns", 1e7))
    jitter = float(cfg.get("jitter_ns", 0.0))
    ss = np.random.SeedSequence(opts.seed)
    if opts.what in ("stream", "g2"):
        n = int(cfg.get("emitters", 1))
        if n < 1:
            raise InputError("emitters must be >= 1")
        streams = [emitter_sim.simulate_stream(rates, duration, child, jitter)
                   for child in ss.spawn(n)]
        stream = emitter_sim.merge_streams(*streams) if n > 1 else streams[0]
        if opts.what == "stream":
            return stream.to_csv()
        h = emitter_sim.coincidence_histogram(stream, float(cfg.get("bin_width_ns", 0.5)),
                                              float(cfg.get("max_delay_ns", 100.0)))
        return h.to_csv()
    powers = np.asarray(cfg.get("powers_mw", []), dtype=float)
    sigma = cfg.get("k_exc_per_mw")
    if powers.size < 2 or sigma is None:
        raise InputError("saturation simulation needs powers_mw (>= 2 values) and k_exc_per_mw")
    out = []
    for P, child in zip(powers, ss.spawn(powers.size)):
        r = emitter_sim.EmitterRates(float(sigma) * P, rates.k_rad, rates.k_sh, rates.k_des,
                                     rates.eta, rates.r_bg)
        s = emitter_sim.simulate_stream(r, duration, child, jitter)
        out.append(s.rate * 1e6)   # counts/ns -> kcps
    return csvio.format_table(("power_mw", "intensity_kcps"), (powers, np.array(out)))


# ---------------------------------------------------------------- driver

_SINGLE = {
    "fit-spectrum": analyze_spectrum,
    "fit-temperature": analyze_temperature,
    "fit-g2": analyze_g2,
    "fit-saturation": analyze_saturation,
}


def _batch_one(command, path, opts):
    """Worker for batch mode: ``(exit_code, report_or_error)``."""
    try:
        rep, _ = _SINGLE[command](path, opts)
    except (InputError, PbvlabError, ValueError) as exc:
        code = EXIT_FIT if isinstance(exc, (FitError, NonFiniteModelError)) else EXIT_INPUT
        return code, {"input": os.path.basename(path), "error": str(exc), "exit_code": code}
    return (EXIT_OK if rep["converged"] else EXIT_FIT), rep


def _stamp(rep):
    rep["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return rep


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_plots(rep, plot, opts):
    if getattr(opts, "plot_data", None) and rep.get("curve"):
        with open(opts.plot_data, "w", encoding="utf-8") as fh:
            fh.write(plot_data_csv(rep))
    if getattr(opts, "plot", None) and plot is not None:
        kw = dict(plot)
        if rep.get("curve"):
            x, ys = evaluate_report(rep)
            curves = [(x, y) for y in ys.values()]
            if rep["command"] == "polarization predict":
                kw.setdefault("points", None)
            kw["curves"] = kw.get("curves", []) or curves
        svgplot.write(opts.plot, title=rep["command"], **kw)


def _add_output_opts(p, plots=True):
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    if plots:
        p.add_argument("--plot", metavar="SVG", help="write a data + model plot")
        p.add_argument("--plot-data", metavar="CSV", help="write model curve samples")


def _add_fit_opts(p):
    p.add_argument("--max-iter", type=int, default=None,
                   help="iteration limit for the fit (default 200)")


def _add_batch_opts(p):
    p.add_argument("--jobs", type=int, default=1, help="analyze several inputs in parallel")
    _add_fit_opts(p)


def build_parser():
    ap = argparse.ArgumentParser(prog="pbvlab", description="Photophysics analysis of color-center data.")
    ap.add_argument("--version", action="version", version=f"pbvlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-spectrum", help="fit ZPL lines and assign C/D doublets")
    p.add_argument("inputs", nargs="+", metavar="csv")
    p.add_argument("--shape", choices=spectra.SHAPES, default="lorentzian")
    p.add_argument("--excitation-nm", type=float, default=None)
    p.add_argument("--doublets", type=int, default=1)
    _add_output_opts(p)
    _add_batch_opts(p)

    p = sub.add_parser("fit-temperature", help="fit linewidth (T^3) or shift (T^2 + T^4) laws")
    p.add_argument("inputs", nargs="+", metavar="csv")
    p.add_argument("--mode", choices=thermal.MODES, required=True)
    _add_output_opts(p)
    _add_batch_opts(p)

    p = sub.add_parser("fit-g2", help="fit an antibunching histogram")
    p.add_argument("inputs", nargs="+", metavar="csv")
    p.add_argument("--rho", type=float, default=None, help="signal fraction S/(S+B)")
    p.add_argument("--signal", type=float, default=None)
    p.add_argument("--background", type=float, default=None)
    p.add_argument("--low-power", action="store_true", help="report tau1 as the lifetime")
    _add_output_opts(p)
    _add_batch_opts(p)

    p = sub.add_parser("fit-saturation", help="fit I_inf P / (P + P_sat)")
    p.add_argument("inputs", nargs="+", metavar="csv")
    p.add_argument("--background", dest="background_csv", default=None, metavar="csv")
    _add_output_opts(p)
    _add_batch_opts(p)

    pol = sub.add_parser("polarization", help="polarization analysis").add_subparsers(
        dest="action", required=True)
    p = pol.add_parser("fit", help="fit one or two polarizer-angle series")
    p.add_argument("inputs", nargs="+", metavar="csv")
    _add_output_opts(p)
    _add_fit_opts(p)
    p = pol.add_parser("predict", help="model curve for a dipole configuration")
    p.add_argument("--dipole", choices=("z", "xy"), required=True)
    p.add_argument("--orientation", choices=list(polarization.VARIANTS), default="111")
    p.add_argument("--points", type=int, default=361)
    _add_output_opts(p)

    ph = sub.add_parser("phonon", help="phonon-mediated transition rates").add_subparsers(
        dest="action", required=True)
    p = ph.add_parser("table", help="normalised rate versus temperature")
    p.add_argument("--species", default=None, help="JSON species list")
    p.add_argument("--ref", default=None, help="reference NAME@T, e.g. siv2@0.4")
    p.add_argument("--tmin", type=float, default=0.3)
    p.add_argument("--tmax", type=float, default=20.0)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--spacing", choices=("log", "linear"), default="log")
    _add_output_opts(p)
    p = ph.add_parser("equiv-temp", help="temperature matching the reference rate")
    p.add_argument("--delta-ghz", type=float, required=True)
    p.add_argument("--ref", default=None, help="reference NAME@T, e.g. siv2@0.4")
    _add_output_opts(p, plots=False)

    p = sub.add_parser("simulate", help="synthetic data from the three-level emitter model")
    p.add_argument("what", choices=("stream", "g2", "saturation"))
    p.add_argument("--config", required=True, help="JSON emitter configuration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the CSV here instead of stdout")
    return ap


def _dispatch(opts):
    cmd = opts.command
    if getattr(opts, "max_iter", None) is not None and opts.max_iter < 1:
        raise UsageError("--max-iter must be >= 1")
    if cmd == "simulate":
        _emit(simulate(opts), opts.out)
        return EXIT_OK
    if cmd in _SINGLE:
        if cmd == "fit-g2":
            if opts.rho is not None and (opts.signal is not None or opts.background is not None):
                raise UsageError("use either --rho or --signal/--background")
            if (opts.signal is None) != (opts.background is None):
                raise UsageError("--signal and --background go together")
        if opts.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if len(opts.inputs) > 1:
            if opts.plot or opts.plot_data:
                raise UsageError("--plot/--plot-data need a single input")
            if opts.jobs > 1:
                with ProcessPoolExecutor(max_workers=opts.jobs) as ex:
                    results = list(ex.map(_batch_one, [cmd] * len(opts.inputs), opts.inputs,
                                          [opts] * len(opts.inputs)))
            else:
                results = [_batch_one(cmd, path, opts) for path in opts.inputs]
            reports = [_stamp(r) if "schema_version" in r else r for _, r in results]
            _emit(dumps({"schema_version": SCHEMA_VERSION, "command": cmd, "reports": reports}), opts.out)
            return max(code for code, _ in results)
        rep, plot = _SINGLE[cmd](opts.inputs[0], opts)
    elif cmd == "polarization" and opts.action == "fit":
        if len(opts.inputs) > 2:
            raise UsageError("polarization fit takes one or two series")
        rep, plot = analyze_polarization_fit(opts.inputs, opts)
    elif cmd == "polarization":
        if opts.points < 2:
            raise UsageError("--points must be >= 2")
        rep, plot = analyze_polarization_predict(opts)
    elif opts.action == "table":
        rep, plot = analyze_phonon_table(opts)
    else:
        rep, plot = analyze_phonon_equiv(opts)
    _write_plots(rep, plot, opts)
    _emit(dumps(_stamp(rep)), opts.out)
    return EXIT_OK if rep["converged"] else EXIT_FIT


def run(argv=None):
    """Run the CLI and return the exit code."""
    ap = build_parser()
    try:
        opts = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _dispatch(opts)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"pbvlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, NonFiniteModelError) as exc:
        print(f"pbvlab: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (PbvlabError, ValueError) as exc:
        print(f"pbvlab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

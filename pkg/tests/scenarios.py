"""
Deterministic synthetic data shared by the CLI and acceptance suites.

Running this file rewrites the golden reports::

    python3 tests/scenarios.py --regen
"""
import json
import os
import sys

import numpy as np

from pbvlab import emitter_sim, photostats, polarization, spectra, thermal

GOLDEN = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")

# the C/D doublet near 550/554 nm with a diamond Raman line from 515 nm excitation
SPECTRUM_PEAKS = [(550.0, 0.1, 1000.0), (552.9452, 0.04, 300.0), (554.0, 0.1, 800.0)]
SAT_TRUTH = photostats.SaturationParams(222.0, 1.8)
SAT_BG = (9.0, 0.5)                     # slope (kcps/mW), intercept (kcps)
SAT_POWERS = np.linspace(0.1, 5.0, 12)
LW_TRUTH = thermal.LinewidthParams(w0=80.0, a3=2.5e-5)
SHIFT_TRUTH = thermal.ShiftParams(l0=550.0, b2=1.2e-6, b4=3.0e-11)
TEMPS = np.geomspace(5.7, 263.0, 14)
RHO = 0.76


def spectrum_csv(seed=0, noise=5.0):
    lam = np.round(np.arange(546.0, 558.0, 0.01), 6)
    y = spectra.synthesize(lam, SPECTRUM_PEAKS, 20.0, "lorentzian")
    y = y + np.random.default_rng(seed).normal(0.0, noise, lam.size)
    return spectra.Spectrum(lam, np.clip(y, 0.0, None)).to_csv()


def saturation_series(noise=0.0, seed=0):
    """Total signal ``model + linear background`` and the background alone."""
    P = SAT_POWERS
    bg = SAT_BG[0] * P + SAT_BG[1]
    total = photostats.saturation_model(P, SAT_TRUTH) + bg
    if noise:
        total = total * (1 + noise * np.random.default_rng(seed).standard_normal(P.size))
    return (photostats.SaturationSeries(P, total),
            photostats.SaturationSeries(P, bg, kind="background"))


def linewidth_series():
    return thermal.ThermalSeries(TEMPS, thermal.linewidth_model(TEMPS, LW_TRUTH), "linewidth")


def shift_series():
    return thermal.ThermalSeries(TEMPS, thermal.shift_model(TEMPS, SHIFT_TRUTH), "shift")


def thermal_csv(series):
    return "temperature_k,value\n" + "".join(
        f"{t!r},{v!r}\n" for t, v in zip(series.temperature.tolist(), series.value.tolist()))


def polarization_pair(theta0=30.0):
    a = np.arange(0.0, 360.0, 10.0)
    s1 = 100 * np.cos(np.radians(a - theta0)) ** 2 + 10
    s2 = 100 * np.cos(np.radians(a - theta0 - 90)) ** 2 + 10
    return (polarization.PolarizationSeries(a, s1, "s1"),
            polarization.PolarizationSeries(a, s2, "s2"))


def closure_rates(rho=RHO, tau1=3.7):
    """Low-power three-level emitter with antibunching time ``tau1`` and
    Poisson background giving signal fraction ``rho``."""
    r = emitter_sim.rates_for_antibunching_time(tau1, k_exc=0.02, k_sh=0.004, k_des=0.01)
    signal = emitter_sim.steady_state_intensity(r)
    return emitter_sim.EmitterRates(r.k_exc, r.k_rad, r.k_sh, r.k_des, r.eta,
                                    r_bg=signal * (1 - rho) / rho)


def closure_duration(rates, clicks=1e6):
    return clicks / emitter_sim.steady_state_intensity(rates)


def sim_config(rates, duration, **extra):
    cfg = {"rates": rates.to_dict(), "duration_ns": duration, "bin_width_ns": 0.5,
           "max_delay_ns": 100.0}
    cfg.update(extra)
    return json.dumps(cfg, indent=2) + "\n"


def write_fixtures(d):
    """Write every CLI fixture into directory ``d``; returns ``{name: path}``."""
    total, bg = saturation_series()
    s1, s2 = polarization_pair()
    r = closure_rates()
    texts = {
        "lowdose.csv": spectrum_csv(),
        "linewidth.csv": thermal_csv(linewidth_series()),
        "shift.csv": thermal_csv(shift_series()),
        "saturation.csv": total.to_csv(),
        "saturation_bg.csv": bg.to_csv(),
        "pol_s1.csv": s1.to_csv(),
        "pol_s2.csv": s2.to_csv(),
        "emitter.json": sim_config(r, closure_duration(r)),
        "species.json": json.dumps([{"name": "SnV", "delta_gs_ghz": 850.0},
                                    {"name": "PbV", "delta_gs_ghz": 3878.0}]) + "\n",
    }
    paths = {}
    for name, text in texts.items():
        paths[name] = os.path.join(d, name)
        with open(paths[name], "w", encoding="utf-8") as fh:
            fh.write(text)
    return paths


# name -> argv with {fixture} placeholders; prepare() first runs
# "simulate g2" on emitter.json to create g2.csv
GOLDEN_CASES = {
    "fit_spectrum": ["fit-spectrum", "{lowdose.csv}", "--excitation-nm", "515"],
    "fit_linewidth": ["fit-temperature", "{linewidth.csv}", "--mode", "linewidth"],
    "fit_shift": ["fit-temperature", "{shift.csv}", "--mode", "shift"],
    "fit_g2": ["fit-g2", "{g2.csv}", "--rho", "0.76"],
    "fit_saturation": ["fit-saturation", "{saturation.csv}", "--background", "{saturation_bg.csv}"],
    "polarization_fit": ["polarization", "fit", "{pol_s1.csv}", "{pol_s2.csv}"],
    "polarization_predict": ["polarization", "predict", "--dipole", "z"],
    "phonon_table": ["phonon", "table", "--species", "{species.json}", "--points", "12"],
    "phonon_equiv": ["phonon", "equiv-temp", "--delta-ghz", "3878"],
}


def prepare(d):
    from pbvlab import cli
    paths = write_fixtures(d)
    paths["g2.csv"] = os.path.join(d, "g2.csv")
    code = cli.run(["simulate", "g2", "--config", paths["emitter.json"], "--seed", "7",
                    "--out", paths["g2.csv"]])
    assert code == 0
    return paths


def expand(argv, paths):
    return [paths[a[1:-1]] if a.startswith("{") else a for a in argv]


def strip_volatile(text):
    rep = json.loads(text)
    rep.pop("generated_at", None)
    return json.dumps(rep, indent=2, sort_keys=True) + "\n"


def run_case(name, paths, out_dir):
    from pbvlab import cli
    out = os.path.join(out_dir, name + ".json")
    code = cli.run(expand(GOLDEN_CASES[name], paths) + ["--out", out])
    with open(out, encoding="utf-8") as fh:
        return code, strip_volatile(fh.read())


def regen():
    import tempfile
    os.makedirs(GOLDEN, exist_ok=True)
    with tempfile.TemporaryDirectory() as d:
        paths = prepare(d)
        for name in GOLDEN_CASES:
            code, text = run_case(name, paths, d)
            with open(os.path.join(GOLDEN, name + ".json"), "w", encoding="utf-8") as fh:
                fh.write(text)
            print(f"{name}: exit {code}")


if __name__ == "__main__":
    if "--regen" in sys.argv:
        regen()
    else:
        print(__doc__)

"""
Compare the compiled and pure-Python kernels on the two hot loops.

    python3 benchmarks/bench_kernels.py [--clicks N] [--repeat R]

Both backends consume the same random stream, so the benchmark also checks
that they return identical click streams and pair counts.
"""
import argparse
import time

import numpy as np

from pbvlab import emitter_sim, kernels

RATES = emitter_sim.EmitterRates(k_exc=0.02, k_rad=0.2466, k_sh=0.004, k_des=0.01, r_bg=0.0068)


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--clicks", type=float, default=2e5, help="approximate clicks per stream")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--max-delay", type=float, default=100.0, help="histogram half-width (ns)")
    args = ap.parse_args(argv)

    duration = args.clicks / emitter_sim.steady_state_intensity(RATES)
    backends = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(backends)} (active: {kernels.BACKEND})")
    print(f"stream: ~{args.clicks:.0f} clicks over {duration:.3g} ns; histogram +-{args.max_delay:g} ns")

    results = {}
    for name in backends:
        t_sim, stream = best_of(lambda: emitter_sim.simulate_stream(RATES, duration, 1, backend=name),
                                args.repeat)
        t_hist, h = best_of(lambda: emitter_sim.coincidence_histogram(stream, 0.5, args.max_delay,
                                                                      backend=name), args.repeat)
        results[name] = (t_sim, t_hist, stream, h)
        print(f"{name:>7}: simulate {t_sim * 1e3:9.1f} ms   histogram {t_hist * 1e3:9.1f} ms   "
              f"({stream.timestamps.size} clicks)")

    if len(results) == 2:
        c, p = results["cython"], results["python"]
        same = (np.array_equal(c[2].timestamps, p[2].timestamps)
                and np.array_equal(c[3].counts, p[3].counts))
        print(f"speed-up: simulate x{p[0] / c[0]:.1f}, histogram x{p[1] / c[1]:.1f}; "
              f"identical output: {same}")
        return 0 if same else 1
    print("compiled kernels not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

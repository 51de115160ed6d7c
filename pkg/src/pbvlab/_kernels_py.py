"""Pure-Python counterparts of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

GROUND, EXCITED, SHELF = 0, 1, 2


def emitter_chunk(state, t, exps, unis, k_exc, k_rad, k_sh, k_des, eta, t_end, out):
    n = len(exps)
    cap = len(out)
    exps = exps.tolist() if hasattr(exps, "tolist") else exps
    unis = unis.tolist() if hasattr(unis, "tolist") else unis
    k_e = k_rad + k_sh
    p_rad = k_rad / k_e
    p_det = p_rad * eta
    rates = (k_exc, k_e, k_des)
    clicks = []
    i = 0
    done = False
    while i < n:
        rate = rates[state]
        if rate <= 0.0:
            t = t_end
            done = True
            break
        t = t + exps[i] / rate
        if t > t_end:
            done = True
            i += 1
            break
        if state == GROUND:
            state = EXCITED
        elif state == EXCITED:
            u = unis[i]
            if u < p_rad:
                state = GROUND
                if u < p_det:
                    clicks.append(t)
            else:
                state = SHELF
        else:
            state = GROUND
        i += 1
        if len(clicks) == cap:
            break
    out[:len(clicks)] = clicks
    return state, t, i, len(clicks), done


def pair_counts(t, width, nbins, counts):
    t = np.asarray(t, dtype=float)
    limit = (nbins + 0.5) * width
    for m in range(1, t.size):
        d = t[m:] - t[:-m]
        d = d[d < limit]
        if d.size == 0:
            break
        k = np.minimum(np.floor(d / width + 0.5).astype(np.int64), nbins)
        counts += np.bincount(k, minlength=nbins + 1)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the emitter simulator and the pair correlator.

Must stay numerically identical to ``_kernels_py``: same operation order,
same random-number consumption.
"""

cdef enum:
    GROUND = 0
    EXCITED = 1
    SHELF = 2


def emitter_chunk(int state, double t, const double[:] exps, const double[:] unis,
                  double k_exc, double k_rad, double k_sh, double k_des,
                  double eta, double t_end, double[:] out):
    cdef Py_ssize_t n = exps.shape[0]
    cdef Py_ssize_t cap = out.shape[0]
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t n_out = 0
    cdef double rate, u, p_rad
    cdef double k_e = k_rad + k_sh
    cdef bint done = False
    p_rad = k_rad / k_e
    while i < n:
        if state == GROUND:
            rate = k_exc
        elif state == EXCITED:
            rate = k_e
        else:
            rate = k_des
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
                if u < p_rad * eta:
                    out[n_out] = t
                    n_out += 1
            else:
                state = SHELF
        else:
            state = GROUND
        i += 1
        if n_out == cap:
            break
    return state, t, i, n_out, done


def pair_counts(const double[:] t, double width, Py_ssize_t nbins, long long[:] counts):
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double limit = (nbins + 0.5) * width
    cdef double d, ti
    for i in range(n):
        ti = t[i]
        j = i + 1
        while j < n:
            d = t[j] - ti
            if d >= limit:
                break
            k = <Py_ssize_t>(d / width + 0.5)
            if k > nbins:
                k = nbins
            counts[k] += 1
            j += 1

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


cdef inline long snap(long value, long k_step, long k_max) nogil:
    cdef long g
    if value <= 0:
        return 0
    g = k_step * ((value + k_step // 2) // k_step)
    return k_max if g > k_max else g


cdef inline long nb_draw(double u, double mean, double alpha) nogil:
    cdef double p, c, odds
    cdef long d = 0
    cdef long cap
    if alpha == 0.0:
        p = exp(-mean)
    else:
        p = exp(-(log1p(alpha * mean) / alpha))
    odds = mean / (1.0 + alpha * mean)
    cap = <long>(10.0 * (mean + 10.0))
    c = p
    while u > c and d < cap:
        p = p * odds * (1.0 + alpha * d) / (d + 1.0)
        d += 1
        c += p
    return d


def snap_inventory(long value, long k_step=2, long k_max=100):
    return snap(value, k_step, k_max)


def negbin_draw(double u, double mean, double alpha):
    return nb_draw(u, mean, alpha)


def simulate_days(double[:, ::1] choice_values, long[::1] y_grid,
                  double[::1] base_log_mean, double eta_q, double alpha,
                  long[::1] exo_base, long q_stride, double q_threshold,
                  long nk, long k_step, long k_max,
                  double[:, ::1] gumbel, double[::1] uniforms,
                  long k0, double[::1] sales0):
    cdef Py_ssize_t T = base_log_mean.shape[0]
    cdef Py_ssize_t n_act = y_grid.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] inv_a = np.empty(T, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order_a = np.empty(T, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] demand_a = np.empty(T, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sales_a = np.empty(T, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] trail_a = np.empty(T, dtype=np.float64)
    cdef cnp.int64_t[::1] inv = inv_a
    cdef cnp.int64_t[::1] order = order_a
    cdef cnp.int64_t[::1] demand = demand_a
    cdef cnp.int64_t[::1] sales = sales_a
    cdef double[::1] trailing = trail_a
    cdef double buf[7]
    cdef Py_ssize_t t, j, a, best
    cdef long head = 0, k = k0, qc, kidx, state, y, d, q
    cdef double tot, q7, lnq, best_v, v, mean
    for j in range(7):
        buf[j] = sales0[j]
    with nogil:
        for t in range(T):
            tot = 0.0
            for j in range(7):
                tot += buf[j]
            q7 = tot / 7.0
            lnq = log1p(q7)
            qc = 1 if lnq > q_threshold else 0
            kidx = snap(k, k_step, k_max) // k_step
            state = (exo_base[t] + qc * q_stride) * nk + kidx
            best = 0
            best_v = choice_values[state, 0] + gumbel[t, 0]
            for a in range(1, n_act):
                v = choice_values[state, a] + gumbel[t, a]
                if v > best_v:
                    best_v = v
                    best = a
            y = y_grid[best]
            mean = exp(base_log_mean[t] + eta_q * lnq)
            d = nb_draw(uniforms[t], mean, alpha)
            q = d if d < k else k
            inv[t] = k
            order[t] = y
            demand[t] = d
            sales[t] = q
            trailing[t] = q7
            k = k + y - q
            buf[head] = <double>q
            head = (head + 1) % 7
    return inv_a, order_a, demand_a, sales_a, trail_a


def accumulate_k_transitions(double[::1] pmf, long[::1] k_values, long[::1] y_values,
                             double cut1, double cut2, long k_step, long k_max):
    cdef Py_ssize_t nk = k_values.shape[0]
    cdef Py_ssize_t ny = y_values.shape[0]
    cdef Py_ssize_t nd = pmf.shape[0]
    out_a = np.zeros((nk, ny, nk, 3))
    cdef double[:, :, :, ::1] out = out_a
    cdef Py_ssize_t i, d, a
    cdef long k, s, b, nxt
    cdef double w
    with nogil:
        for i in range(nk):
            k = k_values[i]
            for d in range(nd):
                w = pmf[d]
                s = d if d < k else k
                if s <= cut1:
                    b = 0
                elif s <= cut2:
                    b = 1
                else:
                    b = 2
                for a in range(ny):
                    nxt = snap(k - s + y_values[a], k_step, k_max)
                    out[i, a, nxt // k_step, b] += w
    return out_a

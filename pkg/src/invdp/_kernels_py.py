"""Pure-Python reference versions of the compiled kernels.

Both implementations perform the same floating-point operations in the same
order, so simulated panels are bit-identical whichever one is loaded.
"""

import math

import numpy as np


def snap_inventory(value, k_step=2, k_max=100):
    """Nearest grid point, ties rounded up, clipped to ``[0, k_max]``."""
    if value <= 0:
        return 0
    g = k_step * ((value + k_step // 2) // k_step)
    return k_max if g > k_max else g


def negbin_draw(u, mean, alpha):
    """Inverse-CDF draw from the NB2 law with the given mean."""
    if alpha == 0.0:
        p = math.exp(-mean)
    else:
        p = math.exp(-(math.log1p(alpha * mean) / alpha))
    odds = mean / (1.0 + alpha * mean)
    cap = int(10.0 * (mean + 10.0))
    c = p
    d = 0
    while u > c and d < cap:
        p = p * odds * (1.0 + alpha * d) / (d + 1.0)
        d += 1
        c += p
    return d


def simulate_days(choice_values, y_grid, base_log_mean, eta_q, alpha,
                  exo_base, q_stride, q_threshold, nk, k_step, k_max,
                  gumbel, uniforms, k0, sales0):
    """Run the daily order/demand/sales loop.

    Returns int64 arrays ``(inventory, order, demand, sales)`` and the
    float64 trailing 7-day mean of sales seen at the start of each day.
    """
    T = base_log_mean.shape[0]
    n_act = y_grid.shape[0]
    inv = np.empty(T, dtype=np.int64)
    order = np.empty(T, dtype=np.int64)
    demand = np.empty(T, dtype=np.int64)
    sales = np.empty(T, dtype=np.int64)
    trailing = np.empty(T, dtype=np.float64)
    buf = [float(v) for v in sales0]
    head = 0
    k = int(k0)
    cv = choice_values
    yg = [int(v) for v in y_grid]
    for t in range(T):
        tot = 0.0
        for j in range(7):
            tot += buf[j]
        q7 = tot / 7.0
        lnq = math.log1p(q7)
        qc = 1 if lnq > q_threshold else 0
        kidx = snap_inventory(k, k_step, k_max) // k_step
        state = (int(exo_base[t]) + qc * q_stride) * nk + kidx
        row = cv[state]
        g = gumbel[t]
        best = 0
        best_v = float(row[0]) + float(g[0])
        for a in range(1, n_act):
            v = float(row[a]) + float(g[a])
            if v > best_v:
                best_v = v
                best = a
        y = yg[best]
        mean = math.exp(float(base_log_mean[t]) + eta_q * lnq)
        d = negbin_draw(float(uniforms[t]), mean, alpha)
        q = d if d < k else k
        inv[t] = k
        order[t] = y
        demand[t] = d
        sales[t] = q
        trailing[t] = q7
        k = k + y - q
        buf[head] = float(q)
        head = (head + 1) % 7
    return inv, order, demand, sales, trailing


def accumulate_k_transitions(pmf, k_values, y_values, cut1, cut2, k_step, k_max):
    """Joint law of next-period grid inventory and the sales tercile.

    ``out[i, a, j, b]`` is the probability that inventory ``k_values[i]``
    and order ``y_values[a]`` lead to grid point ``j`` with realised sales
    falling in tercile ``b``.
    """
    nk = k_values.shape[0]
    ny = y_values.shape[0]
    nd = pmf.shape[0]
    out = np.zeros((nk, ny, nk, 3))
    for i in range(nk):
        k = int(k_values[i])
        for d in range(nd):
            w = float(pmf[d])
            s = d if d < k else k
            b = 0 if s <= cut1 else (1 if s <= cut2 else 2)
            for a in range(ny):
                nxt = snap_inventory(k - s + int(y_values[a]), k_step, k_max)
                out[i, a, nxt // k_step, b] += w
    return out

"""Numba kernels for the loading recursion and waiting-time totals.

These run inside every GA fitness evaluation (tens of thousands of calls
per optimization), so they work on the flat arrays of the demand model
rather than on the Python objects.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _cum_at(knots, rates, cum, col, t):
    """Running integral of one rate column at time t (clamped to the grid)."""
    if t < knots[0]:
        t = knots[0]
    elif t > knots[-1]:
        t = knots[-1]
    s = np.searchsorted(knots, t) - 1
    if s < 0:
        s = 0
    elif s > len(knots) - 2:
        s = len(knots) - 2
    return cum[s, col] + rates[s, col] * (t - knots[s])


@njit(cache=True, inline="always")
def _cum_t_at(knots, rates, cum_t, col, t, origin_shift):
    """Running integral of (t - origin_shift) * rate for one column."""
    if t < knots[0]:
        t = knots[0]
    elif t > knots[-1]:
        t = knots[-1]
    s = np.searchsorted(knots, t) - 1
    if s < 0:
        s = 0
    elif s > len(knots) - 2:
        s = len(knots) - 2
    a = knots[s] - origin_shift
    x = t - origin_shift
    return cum_t[s, col] + rates[s, col] * (x * x - a * a) / 2.0


@njit(cache=True)
def load_trains(dep, caps, t_start, knots, rates, cum, block_start):
    """Sequential capacity-constrained loading over all (train, station) cells.

    Boarding at each cell is the residual capacity after alighting, split
    across destinations in proportion to their share of the waiting
    demand; the unboarded remainder carries over to the next train.

    Returns per-cell aggregates, per-destination arrays, and the most
    negative intermediate quantity encountered (tiny negatives are
    floating-point noise and clamped; the caller decides when the value
    signals a genuine fault).
    """
    n_trains, n_stations = dep.shape
    alighted = np.zeros((n_trains, n_stations))
    demand = np.zeros((n_trains, n_stations))
    boarded = np.zeros((n_trains, n_stations))
    onboard = np.zeros((n_trains, n_stations))
    left = np.zeros((n_trains, n_stations))
    spare = np.zeros((n_trains, n_stations))
    od_demand = np.zeros((n_trains, n_stations, n_stations))
    od_boarded = np.zeros((n_trains, n_stations, n_stations))
    od_left = np.zeros((n_trains, n_stations, n_stations))

    carry = np.zeros((n_stations, n_stations))  # [origin, destination] left-behind queue
    onboard_to = np.zeros(n_stations)
    min_q = 0.0

    for k in range(n_trains):
        cap = caps[k]
        onboard_to[:] = 0.0
        gamma = 0.0
        for i in range(n_stations):
            a = onboard_to[i]
            onboard_to[i] = 0.0
            gamma -= a
            alighted[k, i] = a

            t1 = dep[k, i]
            t0 = t_start if k == 0 else dep[k - 1, i]
            beta = 0.0
            for j in range(i + 1, n_stations):
                col = block_start[i] + (j - i - 1)
                fresh = _cum_at(knots, rates, cum, col, t1) - _cum_at(knots, rates, cum, col, t0)
                if fresh < min_q:
                    min_q = fresh
                if fresh < 0.0:
                    fresh = 0.0
                w = fresh + carry[i, j]
                od_demand[k, i, j] = w
                beta += w
            demand[k, i] = beta

            resid = cap - gamma
            if resid < min_q:
                min_q = resid
            if resid < 0.0:
                resid = 0.0
            ratio = 0.0
            if beta > 0.0:
                ratio = resid / beta if resid < beta else 1.0

            b_sum = 0.0
            l_sum = 0.0
            for j in range(i + 1, n_stations):
                w = od_demand[k, i, j]
                bw = w * ratio
                od_boarded[k, i, j] = bw
                lw = w - bw
                od_left[k, i, j] = lw
                carry[i, j] = lw
                onboard_to[j] += bw
                b_sum += bw
                l_sum += lw
            boarded[k, i] = b_sum
            left[k, i] = l_sum
            gamma += b_sum
            if gamma < min_q:
                min_q = gamma
            if gamma < 0.0:
                gamma = 0.0
            onboard[k, i] = gamma
            spare[k, i] = cap - gamma

    return alighted, demand, boarded, onboard, left, spare, od_demand, od_boarded, od_left, min_q


@njit(cache=True)
def first_wait_total(dep, t_start, period_start, knots, origin_rates, origin_cum, origin_cum_t):
    """Total first-train waiting time over all trains and boarding stations.

    For each (train, station), integrates rate * (departure - arrival)
    over the arrival window between consecutive departures; the window of
    the first train opens at t_start.
    """
    n_trains, n_stations = dep.shape
    total = 0.0
    for i in range(n_stations - 1):
        for k in range(n_trains):
            d = dep[k, i]
            t0 = t_start if k == 0 else dep[k - 1, i]
            dc = _cum_at(knots, origin_rates, origin_cum, i, d) - _cum_at(
                knots, origin_rates, origin_cum, i, t0
            )
            dm = _cum_t_at(knots, origin_rates, origin_cum_t, i, d, period_start) - _cum_t_at(
                knots, origin_rates, origin_cum_t, i, t0, period_start
            )
            total += (d - period_start) * dc - dm
    return total

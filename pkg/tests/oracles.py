"""Independent reference computations used by the tests.

None of these import the code under test; they recompute expected values by
brute force, closed forms or event scheduling.
"""

import math

import numpy as np

# must agree with the comparator resolution of the converter model
COMPARATOR_TOL = 1e-9

WATSON_CRICK = {"A": "T", "T": "A", "C": "G", "G": "C"}


def brute_force_match(probe, target):
    """Scan every window of the target for the antiparallel complement of the probe."""
    n = len(probe)
    for start in range(len(target) - n + 1):
        ok = True
        for j in range(n):
            # target base at start+j pairs with probe base read from the far end
            if WATSON_CRICK[probe[n - 1 - j]] != target[start + j]:
                ok = False
                break
        if ok:
            return True
    return False


def event_count(current, c_int, dv, t_meas, t_dead=0.0):
    """Count comparator events by scheduling threshold crossings analytically.

    No time grid: the k-th crossing happens when ``(k - tol) * C * dV`` of
    charge has been integrated; each crossing is followed by ``t_dead`` of
    suspended integration.
    """
    if current <= 0:
        return 0
    q = c_int * dv
    ramp = q / current
    count = 0
    t_next = (1.0 - COMPARATOR_TOL) * ramp
    while t_next <= t_meas:
        count += 1
        if t_dead == 0.0:
            t_next = (count + 1 - COMPARATOR_TOL) * ramp
        else:
            t_next += t_dead + ramp
    return count


def closed_form_frequency(current, c_int, dv, t_dead):
    return 1.0 / (c_int * dv / current + t_dead)


def shot_noise_sigma(current, bandwidth, q_e=1.602e-19):
    return math.sqrt(2.0 * q_e * current * bandwidth)


def square_law(beta, vth, v_gate):
    ov = max(0.0, v_gate - vth)
    return 0.5 * beta * ov * ov


def finite_difference_gm(beta, vth, v_gate, h=1e-6):
    return (square_law(beta, vth, v_gate + h) - square_law(beta, vth, v_gate - h)) / (2 * h)


def biexp_peak_time(t_onset, tau_rise, tau_fall):
    return t_onset + math.log(tau_fall / tau_rise) * tau_rise * tau_fall / (tau_fall - tau_rise)


def crc16_ccitt_bitwise(data, poly=0x1021, init=0xFFFF):
    """Bit-serial CRC-16/CCITT, MSB first, no reflection, no final xor."""
    crc = init
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
    return crc


def r_squared(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    return 1.0 - float(res @ res) / float(((y - y.mean()) ** 2).sum())

"""Direct-formula reference metrics, coded without numpy.

Kept deliberately separate from the package implementations so the test
suite can cross-check the two against each other.
"""

import math


def oracle_mape(y_true, y_pred, eps=1e-12):
    total = 0.0
    used = 0
    for t, p in zip(y_true, y_pred):
        if abs(t) < eps:
            continue
        total += abs(t - p) / abs(t)
        used += 1
    if used == 0:
        raise ValueError("no usable entries")
    return total / used * 100.0


def oracle_std(sigma_true, sigma_pred):
    return abs(sigma_true - sigma_pred)


def oracle_hellinger(y_true, y_pred):
    acc = 0.0
    for t, p in zip(y_true, y_pred):
        d = math.sqrt(t) - math.sqrt(p)
        acc += d * d
    return math.sqrt(acc) / math.sqrt(2.0)


def oracle_nrmse(y_true, y_pred):
    acc = 0.0
    for t, p in zip(y_true, y_pred):
        acc += (t - p) ** 2
    spread = max(y_true) - min(y_true)
    return math.sqrt(acc / len(y_true)) / spread


def oracle_level(value, lower, upper):
    if value < lower:
        return "Low"
    if value < upper:
        return "Medium"
    return "High"

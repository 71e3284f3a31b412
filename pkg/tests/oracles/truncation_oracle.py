"""Standalone percentile truncation: type-7 quantiles computed from sorted order statistics."""
import math


def type7(values, pct):
    v = sorted(values)
    h = (len(v) - 1) * pct / 100.0
    lo = math.floor(h)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])


def truncate(values, lower=5.0, upper=95.0):
    a, b = type7(values, lower), type7(values, upper)
    return [min(max(x, a), b) for x in values], (a, b)


GRID = [0.005 + i * (0.995 - 0.005) / 99 for i in range(100)]
FIVE = [0.01, 0.2, 0.5, 0.8, 0.99]

if __name__ == "__main__":
    out, (a, b) = truncate(GRID)
    changed = [i for i, (x, y) in enumerate(zip(GRID, out)) if x != y]
    print("grid bounds", a, b, "altered indices", changed)
    print("five-point bounds", truncate(FIVE)[1])

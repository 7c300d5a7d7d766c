"""Independent brute-force oracles the fast paths are checked against.

Everything here is deliberately naive (pure-Python loops, no shared helpers
with the package) so a bug in the production code cannot hide in its oracle.
"""

from __future__ import annotations

from datetime import datetime, timedelta


def naive_occupancy(freqs, powers, channels, threshold):
    """Double loop over channels x bins; strict exceedance."""
    out = []
    for start, stop in channels:
        hit = False
        for f, p in zip(freqs, powers):
            if start <= f < stop and p > threshold:
                hit = True
                break
        out.append(hit)
    return out


def brute_force_au(stored_sweeps, manifests, channels, threshold):
    """Triple loop (sweep x channel x bin) AU counting.

    stored_sweeps: [(timestamp, freqs, powers)], manifests: [(total, stored)].
    Returns (total, [occupied per channel], [au per channel or None]).
    """
    total = 0
    for t, s in manifests:
        total += t
    occupied = [0] * len(channels)
    for _, freqs, powers in stored_sweeps:
        for c, (start, stop) in enumerate(channels):
            for f, p in zip(freqs, powers):
                if start <= f < stop and p > threshold:
                    occupied[c] += 1
                    break
    if total > 0:
        au = [100.0 * occ / total for occ in occupied]
    else:
        au = [None] * len(channels)
    return total, occupied, au


def minutes_of_hour(hour: datetime, n: int = 60):
    return [hour + timedelta(minutes=i) for i in range(n)]

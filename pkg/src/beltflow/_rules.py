"""Flux allocation rules at junctions, shared by the solver and the oracle."""

from numba import njit


@njit(cache=True)
def merge_split(f1max, f2max, f3max, q):
    """Fluxes sent by the two incoming arcs of a merge.

    The priority point ``P = (q f3max, (1-q) f3max)`` is used when it lies in
    the admissible region; otherwise the nearest admissible point on the
    line ``f1 + f2 = f3max`` is taken.
    """
    if f1max + f2max <= f3max:
        return f1max, f2max
    p1 = q * f3max
    p2 = (1.0 - q) * f3max
    if p1 <= f1max and p2 <= f2max:
        return p1, p2
    if p1 > f1max:
        return f1max, f3max - f1max
    return f3max - f2max, f2max


@njit(cache=True)
def passive_split(total, mu, s2, s3):
    """Fixed-ratio diverge: throughput is limited by whichever branch fills first."""
    tau = total
    if mu > 0.0 and s2 / mu < tau:
        tau = s2 / mu
    if mu < 1.0 and s3 / (1.0 - mu) < tau:
        tau = s3 / (1.0 - mu)
    return mu * tau, (1.0 - mu) * tau


@njit(cache=True)
def active_split(total, mu, s2, s3):
    """Throughput-maximizing diverge.

    Keeps the ratio ``mu : 1-mu`` while both branches can take it; a branch
    that would overflow is held at its capacity and the remainder goes to
    the other branch, until both are full.
    """
    if total > s2 + s3:
        total = s2 + s3
    h2 = mu * total
    h3 = (1.0 - mu) * total
    if h2 > s2:
        h2 = s2
        h3 = total - s2
    elif h3 > s3:
        h3 = s3
        h2 = total - s3
    return h2, h3

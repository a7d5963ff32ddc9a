"""Slow, definition-level reference computations used by the tests.

Nothing here imports richcf internals beyond plain data access, so these
stay independent of the vectorized paths they check.
"""

import itertools
import math
from fractions import Fraction

import numpy as np


def pair_stats(R, a, b):
    """(phi, agree) for rows a, b of dense R (0 = erased), by looping."""
    phi = agree = 0
    for x, y in zip(R[a], R[b]):
        if x != 0 and y != 0:
            phi += 1
            agree += int(x == y)
    return phi, agree


def brute_sigma(R, a, b):
    phi, agree = pair_stats(R, a, b)
    return agree - (phi - agree)


def brute_normalized(R, a, b):
    phi, agree = pair_stats(R, a, b)
    return None if phi == 0 else (2 * agree - phi) / phi


def brute_modified(R, a, b):
    n = sum(1 for y in R[b] if y != 0)
    return None if n == 0 else brute_sigma(R, a, b) / math.sqrt(n)


def brute_plurality(values, levels):
    """Most frequent level among non-erased values; smallest on ties; 0 if none."""
    counts = [0] * (levels + 1)
    for v in values:
        if v != 0:
            counts[v] += 1
    best = max(counts[1:]) if levels else 0
    if best == 0:
        return 0
    return counts.index(best, 1)


def brute_anchor(R, u):
    """Most similar co-rating row (smallest index on ties), or None."""
    best = None
    for w in range(len(R)):
        if w == u or pair_stats(R, u, w)[0] == 0:
            continue
        s = brute_sigma(R, u, w)
        if best is None or s > best[0]:
            best = (s, w)
    return None if best is None else best[1]


def _top(keys, count):
    """First ``count`` indices by descending key, smallest index on ties."""
    return [w for _, w in sorted((-k, w) for w, k in keys.items())][:count]


def brute_anchor_cluster(R, u, v, count):
    if v is None:
        return []
    keys = {w: Fraction(*_norm_parts(R, v, w)) for w in range(len(R))
            if w not in (u, v) and pair_stats(R, v, w)[0] > 0}
    return _top(keys, count)


def _norm_parts(R, a, b):
    phi, agree = pair_stats(R, a, b)
    return 2 * agree - phi, phi


def brute_ucr_members(R, size):
    out = []
    for u in range(len(R)):
        v = brute_anchor(R, u)
        out.append([u] + ([] if v is None else [v])
                   + brute_anchor_cluster(R, u, v, size - 2))
    return out


def brute_row_vote(R, members, levels):
    return [brute_plurality([R[w, m] for w in members], levels)
            for m in range(R.shape[1])]


def brute_ucr(R, cluster_size, levels):
    """UCR followed step by step with Python sorting."""
    return np.array([brute_row_vote(R, F, levels)
                     for F in brute_ucr_members(R, cluster_size)])


def brute_paf(R, k, levels):
    out = []
    for u in range(len(R)):
        keys = {w: brute_sigma(R, u, w) for w in range(len(R))
                if w != u and pair_stats(R, u, w)[0] > 0}
        out.append(brute_row_vote(R, _top(keys, k), levels))
    return np.array(out)


def brute_hybrid(R, T, levels):
    """HUCR: (prediction rows, chosen member lists)."""
    n_items = R.shape[1]
    preds, chosen = [], []
    for u in range(len(R)):
        v = brute_anchor(R, u)
        f1 = ([] if v is None else [v]) + brute_anchor_cluster(R, u, v, T - 2)
        co = [w for w in range(len(R)) if w != u and pair_stats(R, u, w)[0] > 0]
        counts = {w: sum(1 for x in R[w] if x) for w in co}
        # sigma / sqrt(n) compared exactly through sigma * |sigma| / n
        f2 = _top({w: Fraction(brute_sigma(R, u, w) * abs(brute_sigma(R, u, w)),
                               counts[w]) for w in co}, T - 1)
        f3 = _top({w: brute_sigma(R, u, w) for w in co}, T - 1)
        best = None
        for F in (f1, f2, f3):
            row = brute_row_vote(R, F, levels)
            sim = sum((1 if R[u, m] == row[m] else -1) for m in range(n_items)
                      if R[u, m] and row[m])
            if best is None or sim > best[0]:
                best = (sim, row, F)
        preds.append(best[1])
        chosen.append(best[2])
    return np.array(preds), chosen


def brute_cor(R, Tu, Ti, levels):
    F = brute_ucr_members(R, Tu)
    N = brute_ucr_members(R.T, Ti)
    U, M = R.shape
    out = np.zeros((U, M), dtype=int)
    for u in range(U):
        for m in range(M):
            out[u, m] = brute_plurality([R[w, n] for w in F[u] for n in N[m]], levels)
    return out


def brute_hcor(R, Tu, Ti, levels):
    _, F = brute_hybrid(R, Tu, levels)
    _, N = brute_hybrid(R.T, Ti, levels)
    U, M = R.shape
    out = np.zeros((U, M), dtype=int)
    for u in range(U):
        for m in range(M):
            best, arg = 0.0, 0
            for g in range(1, levels + 1):
                r1 = sum(1 for w in F[u] if R[w, m] == g)
                r2 = sum(1 for n in N[m] if R[u, n] == g)
                r3 = sum(1 for w in F[u] for n in N[m] if R[w, n] == g)
                score = r1 + r2 + math.sqrt(r3)
                if score > best:
                    best, arg = score, g
            out[u, m] = arg
    return out


def enumerate_expected_sigma(M, G, p, ra, rb, same, agree_items=None):
    """Exact E[sigma] of two users by enumerating every joint outcome.

    ``ra``/``rb`` are observation probabilities; ``same`` says whether true
    preferences coincide on all items, else they coincide only on the first
    ``agree_items`` items. Enumerates all (observed?, value) patterns of both
    users over all M items, so keep ``(2G)^(2M)`` small.
    """
    agree_items = M if same else agree_items
    truth_a = [1] * M
    truth_b = [1 if m < agree_items else 2 for m in range(M)]

    def dist(t, rate):
        out = [(0, 1 - rate)]
        for g in range(1, G + 1):
            pg = p if g == t else (1 - p) / (G - 1)
            out.append((g, rate * pg))
        return out

    per_item = [list(itertools.product(dist(truth_a[m], ra), dist(truth_b[m], rb)))
                for m in range(M)]
    total = 0.0
    for combo in itertools.product(*per_item):
        prob = 1.0
        sig = 0
        for (x, px), (y, py) in combo:
            prob *= px * py
            if x and y:
                sig += 1 if x == y else -1
        total += prob * sig
    return total


def per_item_expected_sigma(G, p, ra, rb, equal_truth):
    """E[contribution of one item] by enumerating that item's outcomes."""
    ta, tb = 1, (1 if equal_truth else 2)
    e = 0.0
    for x in range(G + 1):
        for y in range(G + 1):
            px = (1 - ra) if x == 0 else ra * (p if x == ta else (1 - p) / (G - 1))
            py = (1 - rb) if y == 0 else rb * (p if y == tb else (1 - p) / (G - 1))
            if x and y:
                e += px * py * (1 if x == y else -1)
    return e

"""Independent reference computations used by the tests.

Nothing here calls into derecsim's statistics or correlation code. The KS
oracles work on Python integers (exact path counts or explicit permutations),
quantiles use a hand-written linear interpolation, and Wasserstein distances
come from scipy.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

from scipy.special import kolmogorov
from scipy.stats import wasserstein_distance


def ks_gap_num(x, y):
    """Integer numerator of sup |F_x - F_y| scaled by m * n."""
    m, n = len(x), len(y)
    best = 0
    for v in set(x) | set(y):
        fx = sum(1 for a in x if a <= v)
        fy = sum(1 for b in y if b <= v)
        best = max(best, abs(fx * n - fy * m))
    return best


def permutation_ks_pvalue(x, y):
    """Share of all relabellings of the pooled sample with a gap at least as large."""
    pooled = list(x) + list(y)
    m, total = len(x), len(x) + len(y)
    observed = ks_gap_num(x, y)
    hits = count = 0
    for chosen in itertools.combinations(range(total), m):
        sel = set(chosen)
        xs = [pooled[k] for k in sel]
        ys = [pooled[k] for k in range(total) if k not in sel]
        count += 1
        hits += ks_gap_num(xs, ys) >= observed
    return hits / count


def lattice_ks_pvalue(x, y):
    """Exact tie-aware p-value by counting lattice paths with Python integers.

    A path step takes the next pooled value from x (i += 1) or y (j += 1).
    Inside a run of equal pooled values the ECDF gap is not observed, so the
    bound is only enforced where the pooled sorted sequence changes value.
    """
    m, n = len(x), len(y)
    observed = ks_gap_num(x, y)
    if observed == 0:
        return 1.0
    z = sorted(list(x) + list(y))
    total = m + n
    checked = {k for k in range(1, total) if z[k] != z[k - 1]} | {total}
    paths = {(0, 0): 1}
    for k in range(1, total + 1):
        nxt = {}
        for (i, j), c in paths.items():
            for di, dj in ((1, 0), (0, 1)):
                a, b = i + di, j + dj
                if a > m or b > n:
                    continue
                if k in checked and abs(a * n - b * m) >= observed:
                    continue
                nxt[(a, b)] = nxt.get((a, b), 0) + c
        paths = nxt
    inside = paths.get((m, n), 0)
    return 1.0 - inside / math.comb(total, m)


def ks_pvalue(x, y, exact_max_cells=100_000):
    m, n = len(x), len(y)
    if m * n <= exact_max_cells:
        return lattice_ks_pvalue(x, y)
    d = ks_gap_num(x, y) / (m * n)
    return float(kolmogorov(math.sqrt(m * n / (m + n)) * d))


def quantile(values, q):
    """Linear-interpolation sample quantile (the common 'type 7' definition)."""
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def bin_edges(values, bins):
    return sorted({quantile(values, k / bins) for k in range(1, bins)})


def bin_of(value, edges):
    return sum(1 for e in edges if e <= value)


def w1(u, v):
    return float(wasserstein_distance(u, v))


def _codes(kind, orig, syn):
    if kind == "numeric":
        return None
    alpha = sorted(set(orig))
    alpha += sorted(set(syn) - set(alpha))
    return {v: i for i, v in enumerate(alpha)}


def brute_join(given_ids, given_vals, target_ids, target_vals):
    """All (given, target) pairs for rows that share a subject, in any order."""
    out = []
    for i, gi in enumerate(given_ids):
        for j, tj in enumerate(target_ids):
            if gi == tj:
                out.append((given_vals[i], target_vals[j]))
    return out


def brute_correlation(orig, syn, bins=10):
    """Reference (ks aggregate, w aggregate) for one pair.

    ``orig`` and ``syn`` are dicts with keys ``target_kind``, ``target_ids``,
    ``target`` and, for conditional pairs, ``given_kind``, ``given_ids``,
    ``given``.
    """
    tk = orig["target_kind"]
    tcodes = _codes(tk, orig["target"], syn["target"])

    def tval(v):
        return float(v) if tcodes is None else float(tcodes[v])

    to_all = [tval(v) for v in orig["target"]]
    ts_all = [tval(v) for v in syn["target"]]
    if "given" not in orig:
        return ks_pvalue(to_all, ts_all), w1(to_all, ts_all)

    gk = orig["given_kind"]
    if gk == "numeric":
        edges = bin_edges(orig["given"], bins)

        def gval(v):
            return bin_of(v, edges)
    else:
        gcodes = _codes(gk, orig["given"], syn["given"])

        def gval(v):
            return gcodes[v]

    jo = brute_join(orig["given_ids"], [gval(v) for v in orig["given"]],
                    orig["target_ids"], [tval(v) for v in orig["target"]])
    js = brute_join(syn["given_ids"], [gval(v) for v in syn["given"]],
                    syn["target_ids"], [tval(v) for v in syn["target"]])
    worst = max(to_all + ts_all) - min(to_all + ts_all)
    weights = Counter(g for g, _ in jo)
    total = sum(weights.values())
    ks_acc = w_acc = 0.0
    for g, c in weights.items():
        t_o = [t for gg, t in jo if gg == g]
        t_s = [t for gg, t in js if gg == g]
        if not t_s:
            w_acc += c * worst
            continue
        ks_acc += c * ks_pvalue(t_o, t_s)
        w_acc += c * w1(t_o, t_s)
    return ks_acc / total, w_acc / total


def transport_lp(xs, p, ys, q):
    """Min-cost transport between two discrete distributions via linear programming."""
    import numpy as np
    from scipy.optimize import linprog

    a, b = len(xs), len(ys)
    cost = np.abs(np.subtract.outer(np.asarray(xs, float), np.asarray(ys, float))).ravel()
    a_eq = []
    for i in range(a):
        row = np.zeros(a * b)
        row[i * b:(i + 1) * b] = 1
        a_eq.append(row)
    for j in range(b):
        row = np.zeros(a * b)
        row[j::b] = 1
        a_eq.append(row)
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=np.concatenate([p, q]), bounds=(0, None),
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                             "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return float(res.fun)

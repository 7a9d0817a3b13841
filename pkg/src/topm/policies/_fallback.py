"""Pure-Python allocation kernel.

Mirrors ``_kernel.pyx`` statement for statement so that both backends produce
bit-identical traces: same loop order, same floating-point expression shapes,
same tie-breaking.  Only the uninformative prior is supported here; other
priors go through :mod:`topm.policies.rules`.
"""
from __future__ import annotations

import math

MASK64 = 0xFFFFFFFFFFFFFFFF
VAR_FLOOR = 1e-12
GAP_FLOOR = 1e-12
INF = math.inf

EA, AOAM, OCBAM_CADP, OCBAM_CORG, OCBAM_PLUS, OCBASS, OCBASSS = range(7)


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def coin(seed: int, t: int) -> int:
    """Counter-based fair bit for step ``t``."""
    return splitmix64((seed + splitmix64(t & MASK64)) & MASK64) >> 63


def plug_in_vars(cnt, m2, kv):
    out = []
    for i in range(len(cnt)):
        v = kv[i]
        if not v > 0:
            v = m2[i] / (cnt[i] - 1)
            if v < VAR_FLOOR:
                v = VAR_FLOOR
        out.append(v)
    return out


def _argmax_first(scores):
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def _most_starving(ratio, cnt, t):
    k = len(cnt)
    scores = [0.0] * k
    for i in range(k):
        scores[i] = (t + 1) * ratio[i] - cnt[i]
    return _argmax_first(scores), scores


def _normalize(r):
    s = 0.0
    for v in r:
        s += v
    return [v / s for v in r]


def decide_ea(cnt):
    best = 0
    for i in range(1, len(cnt)):
        if cnt[i] < cnt[best]:
            best = i
    return best, [float(-c) for c in cnt]


def decide_aoam(m, cnt, mean, var, order):
    k = len(cnt)
    pv = [var[i] / cnt[i] for i in range(k)]
    sv = [var[i] / (cnt[i] + 1) for i in range(k)]
    rowmin = [INF] * m
    colmin = [INF] * (k - m)
    for p in range(m):
        a = order[p]
        for q in range(m, k):
            b = order[q]
            d = mean[a] - mean[b]
            v = d * d / (pv[a] + pv[b])
            if v < rowmin[p]:
                rowmin[p] = v
            if v < colmin[q - m]:
                colmin[q - m] = v
    r1 = r2 = INF
    h1 = -1
    for p in range(m):
        v = rowmin[p]
        if v < r1:
            r2 = r1
            r1 = v
            h1 = p
        elif v < r2:
            r2 = v
    c1 = c2 = INF
    l1 = -1
    for q in range(k - m):
        v = colmin[q]
        if v < c1:
            c2 = c1
            c1 = v
            l1 = q
        elif v < c2:
            c2 = v
    scores = [0.0] * k
    for p in range(m):
        a = order[p]
        val = r2 if p == h1 else r1
        for q in range(m, k):
            b = order[q]
            d = mean[a] - mean[b]
            v = d * d / (sv[a] + pv[b])
            if v < val:
                val = v
        scores[a] = val
    for q in range(m, k):
        b = order[q]
        val = c2 if q - m == l1 else c1
        for p in range(m):
            a = order[p]
            d = mean[a] - mean[b]
            v = d * d / (pv[a] + sv[b])
            if v < val:
                val = v
        scores[b] = val
    return _argmax_first(scores), scores


def ocbam_c(m, cnt, mean, var, order, corg):
    a = order[m - 1]
    b = order[m]
    if corg:
        sa = math.sqrt(var[a] / cnt[a])
        sb = math.sqrt(var[b] / cnt[b])
    else:
        sa = math.sqrt(var[a])
        sb = math.sqrt(var[b])
    return (sb * mean[a] + sa * mean[b]) / (sa + sb)


def ocbam_ratios(m, cnt, mean, var, order, corg):
    c = ocbam_c(m, cnt, mean, var, order, corg)
    r = []
    for i in range(len(cnt)):
        d = abs(mean[i] - c)
        if d < GAP_FLOOR:
            d = GAP_FLOOR
        r.append(var[i] / (d * d))
    return _normalize(r)


def decide_ocbam(m, cnt, mean, var, order, t, corg):
    return _most_starving(ocbam_ratios(m, cnt, mean, var, order, corg), cnt, t)


def ocbam_plus_ratios(m, cnt, mean, var, order):
    k = len(cnt)
    left = mean[order[m - 1]] - mean[order[m - 2]] if m >= 2 else INF
    right = mean[order[m + 1]] - mean[order[m]] if m + 1 <= k - 1 else INF
    anchor = order[m - 1] if left >= right else order[m]
    r = [0.0] * k
    acc = 0.0
    for i in range(k):
        if i == anchor:
            continue
        d = abs(mean[i] - mean[anchor])
        if d < GAP_FLOOR:
            d = GAP_FLOOR
        r[i] = var[i] / (d * d)
        acc += r[i] * r[i] / var[i]
    r[anchor] = math.sqrt(var[anchor]) * math.sqrt(acc)
    return _normalize(r)


def decide_ocbam_plus(m, cnt, mean, var, order, t):
    return _most_starving(ocbam_plus_ratios(m, cnt, mean, var, order), cnt, t)


def _ocbass_matrix(m, cnt, mean, var, order, t):
    k = len(cnt)
    tt = float(t)
    w = [var[i] / (cnt[i] / tt) for i in range(k)]
    rows = []
    for p in range(m):
        a = order[p]
        row = []
        for q in range(m, k):
            b = order[q]
            d = mean[a] - mean[b]
            row.append(d * d / (w[a] + w[b]))
        rows.append(row)
    return rows


def decide_ocbass(m, cnt, mean, var, order, t):
    k = len(cnt)
    I = _ocbass_matrix(m, cnt, mean, var, order, t)
    st = 0.0
    for p in range(m):
        a = order[p]
        st += cnt[a] * cnt[a] / var[a]
    sb = 0.0
    for q in range(m, k):
        b = order[q]
        sb += cnt[b] * cnt[b] / var[b]
    scores = [INF] * k
    if st < sb:
        best = 0
        for p in range(m):
            v = INF
            for q in range(k - m):
                if I[p][q] < v:
                    v = I[p][q]
            scores[order[p]] = v
            if v < scores[order[best]]:
                best = p
        return order[best], scores
    best = m
    for q in range(m, k):
        v = INF
        for p in range(m):
            if I[p][q - m] < v:
                v = I[p][q - m]
        scores[order[q]] = v
        if v < scores[order[best]]:
            best = q
    return order[best], scores


def decide_ocbasss(m, cnt, mean, var, order, t, seed):
    k = len(cnt)
    I = _ocbass_matrix(m, cnt, mean, var, order, t)
    bp, bq = 0, 0
    best = INF
    for p in range(m):
        for q in range(k - m):
            if I[p][q] < best:
                best = I[p][q]
                bp, bq = p, q
    scores = [INF] * k
    scores[order[bp]] = best
    scores[order[m + bq]] = best
    if coin(seed, t) == 0:
        return order[bp], scores
    return order[m + bq], scores


def decide(code, m, cnt, mean, var, order, t, seed):
    if code == EA:
        return decide_ea(cnt)
    if code == AOAM:
        return decide_aoam(m, cnt, mean, var, order)
    if code == OCBAM_CADP:
        return decide_ocbam(m, cnt, mean, var, order, t, False)
    if code == OCBAM_CORG:
        return decide_ocbam(m, cnt, mean, var, order, t, True)
    if code == OCBAM_PLUS:
        return decide_ocbam_plus(m, cnt, mean, var, order, t)
    if code == OCBASS:
        return decide_ocbass(m, cnt, mean, var, order, t)
    if code == OCBASSS:
        return decide_ocbasss(m, cnt, mean, var, order, t, seed)
    raise ValueError(f"unknown policy code {code}")


def _reposition(i, mean, order, pos):
    k = len(order)
    p = pos[i]
    mi = mean[i]
    while p > 0:
        j = order[p - 1]
        if mean[j] < mi or (mean[j] == mi and j > i):
            order[p] = j
            pos[j] = p
            p -= 1
        else:
            break
    while p < k - 1:
        j = order[p + 1]
        if mean[j] > mi or (mean[j] == mi and j < i):
            order[p] = j
            pos[j] = p
            p += 1
        else:
            break
    order[p] = i
    pos[i] = p


def advance(code, m, cnt, mean, m2, kv, order, obs, filled, t_stop, record, seed):
    """Run allocation steps in place until the total count reaches ``t_stop``.

    Returns -1 when done, or the index of an alternative whose observation
    buffer is exhausted (the caller refills and calls again).
    """
    k = cnt.shape[0]
    c = [int(v) for v in cnt]
    mu = [float(v) for v in mean]
    s2 = [float(v) for v in m2]
    kvl = [float(v) for v in kv]
    od = [int(v) for v in order]
    fl = [int(v) for v in filled]
    pos = [0] * k
    for p in range(k):
        pos[od[p]] = p
    rec = record is not None and record.shape[0] > 0
    t = sum(c)
    status = -1
    while t < t_stop:
        var = plug_in_vars(c, s2, kvl)
        i, _ = decide(code, m, c, mu, var, od, t, seed)
        if c[i] >= fl[i]:
            status = i
            break
        x = float(obs[i, c[i]])
        n = c[i] + 1
        delta = x - mu[i]
        mu[i] = mu[i] + delta / n
        s2[i] = s2[i] + delta * (x - mu[i])
        c[i] = n
        _reposition(i, mu, od, pos)
        if rec:
            record[t] = i
        t += 1
    cnt[:] = c
    mean[:] = mu
    m2[:] = s2
    order[:] = od
    return status

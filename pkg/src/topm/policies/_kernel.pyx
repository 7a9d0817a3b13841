# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled allocation kernel.

Keep in lockstep with ``_fallback.py``: every expression below has the same
operand order as its Python twin so both backends agree to the last bit.
"""
from libc.math cimport sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t

import numpy as np

cdef double VAR_FLOOR = 1e-12
cdef double GAP_FLOOR = 1e-12

cdef enum:
    EA = 0
    AOAM = 1
    OCBAM_CADP = 2
    OCBAM_CORG = 3
    OCBAM_PLUS = 4
    OCBASS = 5
    OCBASSS = 6


cdef inline uint64_t _splitmix64(uint64_t x) nogil:
    cdef uint64_t z = x + <uint64_t>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline int _coin(uint64_t seed, uint64_t t) nogil:
    return <int>(_splitmix64(seed + _splitmix64(t)) >> 63)


def splitmix64(x):
    return _splitmix64(<uint64_t>x)


def coin(seed, t):
    return _coin(<uint64_t>seed, <uint64_t>t)


cdef struct Work:
    int64_t k
    int64_t m
    double *var
    double *pv
    double *sv
    double *rowmin
    double *colmin
    double *scores
    double *ratio
    double *w


cdef Py_ssize_t _argmax_first(double *scores, Py_ssize_t k) nogil:
    cdef Py_ssize_t best = 0, i
    for i in range(1, k):
        if scores[i] > scores[best]:
            best = i
    return best


cdef Py_ssize_t _most_starving(Work *ws, int64_t *cnt, int64_t t) nogil:
    cdef Py_ssize_t i
    for i in range(ws.k):
        ws.scores[i] = <double>(t + 1) * ws.ratio[i] - <double>cnt[i]
    return _argmax_first(ws.scores, ws.k)


cdef void _normalize(double *r, Py_ssize_t k) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(k):
        s += r[i]
    for i in range(k):
        r[i] = r[i] / s


cdef Py_ssize_t _decide_ea(Work *ws, int64_t *cnt) nogil:
    cdef Py_ssize_t best = 0, i
    for i in range(1, ws.k):
        if cnt[i] < cnt[best]:
            best = i
    return best


cdef Py_ssize_t _decide_aoam(Work *ws, int64_t *cnt, double *mean, int64_t *order) nogil:
    cdef Py_ssize_t k = ws.k, m = ws.m, p, q, a, b, i, h1 = -1, l1 = -1
    cdef double d, v, val, r1 = INFINITY, r2 = INFINITY, c1 = INFINITY, c2 = INFINITY
    for i in range(k):
        ws.pv[i] = ws.var[i] / <double>cnt[i]
        ws.sv[i] = ws.var[i] / <double>(cnt[i] + 1)
    for p in range(m):
        ws.rowmin[p] = INFINITY
    for q in range(k - m):
        ws.colmin[q] = INFINITY
    for p in range(m):
        a = order[p]
        for q in range(m, k):
            b = order[q]
            d = mean[a] - mean[b]
            v = d * d / (ws.pv[a] + ws.pv[b])
            if v < ws.rowmin[p]:
                ws.rowmin[p] = v
            if v < ws.colmin[q - m]:
                ws.colmin[q - m] = v
    for p in range(m):
        v = ws.rowmin[p]
        if v < r1:
            r2 = r1
            r1 = v
            h1 = p
        elif v < r2:
            r2 = v
    for q in range(k - m):
        v = ws.colmin[q]
        if v < c1:
            c2 = c1
            c1 = v
            l1 = q
        elif v < c2:
            c2 = v
    for p in range(m):
        a = order[p]
        val = r2 if p == h1 else r1
        for q in range(m, k):
            b = order[q]
            d = mean[a] - mean[b]
            v = d * d / (ws.sv[a] + ws.pv[b])
            if v < val:
                val = v
        ws.scores[a] = val
    for q in range(m, k):
        b = order[q]
        val = c2 if q - m == l1 else c1
        for p in range(m):
            a = order[p]
            d = mean[a] - mean[b]
            v = d * d / (ws.pv[a] + ws.sv[b])
            if v < val:
                val = v
        ws.scores[b] = val
    return _argmax_first(ws.scores, k)


cdef Py_ssize_t _decide_ocbam(Work *ws, int64_t *cnt, double *mean, int64_t *order,
                              int64_t t, bint corg) nogil:
    cdef Py_ssize_t k = ws.k, m = ws.m, i
    cdef Py_ssize_t a = order[m - 1], b = order[m]
    cdef double sa, sb, c, d
    if corg:
        sa = sqrt(ws.var[a] / <double>cnt[a])
        sb = sqrt(ws.var[b] / <double>cnt[b])
    else:
        sa = sqrt(ws.var[a])
        sb = sqrt(ws.var[b])
    c = (sb * mean[a] + sa * mean[b]) / (sa + sb)
    for i in range(k):
        d = fabs(mean[i] - c)
        if d < GAP_FLOOR:
            d = GAP_FLOOR
        ws.ratio[i] = ws.var[i] / (d * d)
    _normalize(ws.ratio, k)
    return _most_starving(ws, cnt, t)


cdef Py_ssize_t _decide_ocbam_plus(Work *ws, int64_t *cnt, double *mean, int64_t *order,
                                   int64_t t) nogil:
    cdef Py_ssize_t k = ws.k, m = ws.m, i, anchor
    cdef double left, right, d, acc = 0.0
    left = mean[order[m - 1]] - mean[order[m - 2]] if m >= 2 else INFINITY
    right = mean[order[m + 1]] - mean[order[m]] if m + 1 <= k - 1 else INFINITY
    anchor = order[m - 1] if left >= right else order[m]
    for i in range(k):
        if i == anchor:
            continue
        d = fabs(mean[i] - mean[anchor])
        if d < GAP_FLOOR:
            d = GAP_FLOOR
        ws.ratio[i] = ws.var[i] / (d * d)
        acc += ws.ratio[i] * ws.ratio[i] / ws.var[i]
    ws.ratio[anchor] = sqrt(ws.var[anchor]) * sqrt(acc)
    _normalize(ws.ratio, k)
    return _most_starving(ws, cnt, t)


cdef inline double _ocbass_entry(Work *ws, double *mean, Py_ssize_t a, Py_ssize_t b) nogil:
    cdef double d = mean[a] - mean[b]
    return d * d / (ws.w[a] + ws.w[b])


cdef void _ocbass_weights(Work *ws, int64_t *cnt, int64_t t) nogil:
    cdef double tt = <double>t
    cdef Py_ssize_t i
    for i in range(ws.k):
        ws.w[i] = ws.var[i] / (<double>cnt[i] / tt)


cdef Py_ssize_t _decide_ocbass(Work *ws, int64_t *cnt, double *mean, int64_t *order,
                               int64_t t) nogil:
    cdef Py_ssize_t k = ws.k, m = ws.m, p, q, a, b, best
    cdef double st = 0.0, sb = 0.0, v, e, bestv
    _ocbass_weights(ws, cnt, t)
    for p in range(m):
        a = order[p]
        st += <double>cnt[a] * <double>cnt[a] / ws.var[a]
    for q in range(m, k):
        b = order[q]
        sb += <double>cnt[b] * <double>cnt[b] / ws.var[b]
    if st < sb:
        best = 0
        bestv = INFINITY
        for p in range(m):
            v = INFINITY
            for q in range(m, k):
                e = _ocbass_entry(ws, mean, order[p], order[q])
                if e < v:
                    v = e
            if v < bestv:
                bestv = v
                best = p
        return order[best]
    best = m
    bestv = INFINITY
    for q in range(m, k):
        v = INFINITY
        for p in range(m):
            e = _ocbass_entry(ws, mean, order[p], order[q])
            if e < v:
                v = e
        if v < bestv:
            bestv = v
            best = q
    return order[best]


cdef Py_ssize_t _decide_ocbasss(Work *ws, int64_t *cnt, double *mean, int64_t *order,
                                int64_t t, uint64_t seed) nogil:
    cdef Py_ssize_t k = ws.k, m = ws.m, p, q, bp = 0, bq = m
    cdef double e, best = INFINITY
    _ocbass_weights(ws, cnt, t)
    for p in range(m):
        for q in range(m, k):
            e = _ocbass_entry(ws, mean, order[p], order[q])
            if e < best:
                best = e
                bp = p
                bq = q
    if _coin(seed, <uint64_t>t) == 0:
        return order[bp]
    return order[bq]


cdef void _plug_in_vars(Work *ws, int64_t *cnt, double *m2, double *kv) nogil:
    cdef Py_ssize_t i
    cdef double v
    for i in range(ws.k):
        v = kv[i]
        if not v > 0:
            v = m2[i] / <double>(cnt[i] - 1)
            if v < VAR_FLOOR:
                v = VAR_FLOOR
        ws.var[i] = v


cdef Py_ssize_t _decide(int code, Work *ws, int64_t *cnt, double *mean, int64_t *order,
                        int64_t t, uint64_t seed) nogil:
    if code == EA:
        return _decide_ea(ws, cnt)
    if code == AOAM:
        return _decide_aoam(ws, cnt, mean, order)
    if code == OCBAM_CADP:
        return _decide_ocbam(ws, cnt, mean, order, t, False)
    if code == OCBAM_CORG:
        return _decide_ocbam(ws, cnt, mean, order, t, True)
    if code == OCBAM_PLUS:
        return _decide_ocbam_plus(ws, cnt, mean, order, t)
    if code == OCBASS:
        return _decide_ocbass(ws, cnt, mean, order, t)
    return _decide_ocbasss(ws, cnt, mean, order, t, seed)


cdef void _reposition(Py_ssize_t i, Py_ssize_t k, double *mean, int64_t *order, int64_t *pos) nogil:
    cdef Py_ssize_t p = pos[i], j
    cdef double mi = mean[i]
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


def advance(int code, Py_ssize_t m, int64_t[::1] cnt, double[::1] mean, double[::1] m2,
            double[::1] kv, int64_t[::1] order, double[:, ::1] obs, int64_t[::1] filled,
            int64_t t_stop, record, seed):
    """Run allocation steps in place until the total count reaches ``t_stop``.

    Returns -1 when done, or the index of an alternative whose observation
    buffer is exhausted (the caller refills and calls again).
    """
    if code < 0 or code > OCBASSS:
        raise ValueError(f"unknown policy code {code}")
    cdef Py_ssize_t k = cnt.shape[0], i, p
    cdef int64_t[::1] rec
    cdef bint has_rec = record is not None and len(record) > 0
    if has_rec:
        rec = record
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t t = 0, n, status = -1
    cdef double x, delta
    cdef Work ws
    ws.k = k
    ws.m = m
    cdef double *buf = <double *>malloc(sizeof(double) * (8 * k + 2))
    cdef int64_t *pos = <int64_t *>malloc(sizeof(int64_t) * k)
    if buf == NULL or pos == NULL:
        free(buf)
        free(pos)
        raise MemoryError()
    ws.var = buf
    ws.pv = buf + k
    ws.sv = buf + 2 * k
    ws.rowmin = buf + 3 * k
    ws.colmin = buf + 4 * k
    ws.scores = buf + 5 * k
    ws.ratio = buf + 6 * k
    ws.w = buf + 7 * k
    for p in range(k):
        pos[order[p]] = p
    for i in range(k):
        t += cnt[i]
    try:
        with nogil:
            while t < t_stop:
                _plug_in_vars(&ws, &cnt[0], &m2[0], &kv[0])
                i = _decide(code, &ws, &cnt[0], &mean[0], &order[0], t, useed)
                if cnt[i] >= filled[i]:
                    status = i
                    break
                x = obs[i, cnt[i]]
                n = cnt[i] + 1
                delta = x - mean[i]
                mean[i] = mean[i] + delta / <double>n
                m2[i] = m2[i] + delta * (x - mean[i])
                cnt[i] = n
                _reposition(i, k, &mean[0], &order[0], pos)
                if has_rec:
                    rec[t] = i
                t += 1
    finally:
        free(buf)
        free(pos)
    return status

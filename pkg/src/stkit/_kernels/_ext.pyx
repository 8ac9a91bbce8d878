# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled versions of the hot loops in metrics and subword segmentation."""

from libc.stdlib cimport malloc, free


def edit_distance(a, b):
    cdef Py_ssize_t n = len(a), m = len(b)
    cdef Py_ssize_t i, j
    cdef long sub, dele, ins, best
    cdef long *prev
    cdef long *cur
    cdef long *tmp
    cdef long *av
    cdef long *bv
    if n == 0:
        return m
    if m == 0:
        return n
    prev = <long *> malloc((m + 1) * sizeof(long))
    cur = <long *> malloc((m + 1) * sizeof(long))
    av = <long *> malloc(n * sizeof(long))
    bv = <long *> malloc(m * sizeof(long))
    if not prev or not cur or not av or not bv:
        free(prev); free(cur); free(av); free(bv)
        raise MemoryError()
    try:
        for i in range(n):
            av[i] = a[i]
        for j in range(m):
            bv[j] = b[j]
        for j in range(m + 1):
            prev[j] = j
        for i in range(1, n + 1):
            cur[0] = i
            for j in range(1, m + 1):
                sub = prev[j - 1] + (av[i - 1] != bv[j - 1])
                dele = prev[j] + 1
                ins = cur[j - 1] + 1
                best = sub
                if dele < best:
                    best = dele
                if ins < best:
                    best = ins
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(prev); free(cur); free(av); free(bv)


def bpe_merge(symbols, dict ranks):
    cdef list syms = list(symbols)
    cdef list out
    cdef Py_ssize_t i, n, best_i
    cdef long r, best_rank
    cdef object left, right, got
    while True:
        n = len(syms)
        if n < 2:
            break
        best_rank = -1
        best_i = -1
        for i in range(n - 1):
            got = ranks.get((syms[i], syms[i + 1]))
            if got is not None:
                r = got
                if best_rank < 0 or r < best_rank:
                    best_rank = r
                    best_i = i
        if best_i < 0:
            break
        left = syms[best_i]
        right = syms[best_i + 1]
        merged = left + right
        out = []
        i = 0
        while i < n:
            if i < n - 1 and syms[i] == left and syms[i + 1] == right:
                out.append(merged)
                i += 2
            else:
                out.append(syms[i])
                i += 1
        syms = out
    return syms


def replace_pair(tuple word, left, right):
    cdef Py_ssize_t i = 0, n = len(word)
    cdef list out = []
    merged = left + right
    while i < n:
        if i < n - 1 and word[i] == left and word[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)

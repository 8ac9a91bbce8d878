"""Pure-Python reference versions of the compiled kernels."""


def edit_distance(a, b):
    """Levenshtein distance with unit costs between two int sequences."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ai != b[j - 1])
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            cur[j] = min(sub, dele, ins)
        prev = cur
    return prev[m]


def bpe_merge(symbols, ranks):
    """Greedily merge the lowest-ranked adjacent pair until none applies.

    ``ranks`` maps ``(left, right)`` to merge rank. Returns a new list.
    """
    symbols = list(symbols)
    while len(symbols) > 1:
        best = None
        best_rank = None
        for i in range(len(symbols) - 1):
            r = ranks.get((symbols[i], symbols[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best = (symbols[i], symbols[i + 1])
        if best is None:
            break
        merged = best[0] + best[1]
        out = []
        i = 0
        while i < len(symbols):
            if i < len(symbols) - 1 and symbols[i] == best[0] and symbols[i + 1] == best[1]:
                out.append(merged)
                i += 2
            else:
                out.append(symbols[i])
                i += 1
        symbols = out
    return symbols


def replace_pair(word, left, right):
    """Replace every non-overlapping occurrence of (left, right) in a symbol tuple."""
    merged = left + right
    out = []
    i = 0
    n = len(word)
    while i < n:
        if i < n - 1 and word[i] == left and word[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)

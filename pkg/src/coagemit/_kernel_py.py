"""Pure-Python simulation kernel.

Mirrors ``_kernel.pyx`` statement for statement so both backends consume the
random stream identically and produce bit-identical trajectories.

Layout shared with the compiled kernel:

* ``counts[n]`` is the number of n-clusters, ``1 <= n <= cap``;
* ``tree`` is a 1-based Fenwick tree over eligible weights ``n * counts[n]``
  (clusters of size ``>= threshold`` carry weight 0 when ``threshold > 0``);
* ``cap`` is a power of two.
"""

OK = 0
EXHAUSTED = 1
GROW = 2

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _below(ctr, n):
    if n <= 1:
        return 0, ctr
    shift = 64 - (n - 1).bit_length()
    while True:
        ctr = (ctr + _GAMMA) & _MASK
        z = ((ctr ^ (ctr >> 30)) * _M1) & _MASK
        z = ((z ^ (z >> 27)) * _M2) & _MASK
        x = (z ^ (z >> 31)) >> shift
        if x < n:
            return x, ctr


def _add(tree, cap, n, d):
    while n <= cap:
        tree[n] += d
        n += n & -n


def _find(tree, cap, r):
    """Smallest n with prefix(n) > r."""
    pos = 0
    step = cap
    while step:
        nxt = pos + step
        if nxt <= cap and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        step >>= 1
    return pos + 1


def feasible(counts, tree, cap, ell, wtot):
    """True iff two distinct eligible clusters with i + j >= ell + 1 exist."""
    if wtot <= 0:
        return False
    a = _find(tree, cap, wtot - 1)
    if counts[a] >= 2:
        return 2 * a >= ell + 1
    rest = wtot - a
    if rest <= 0:
        return False
    b = _find(tree, cap, rest - 1)
    return a + b >= ell + 1


def _exact_draw(counts, cap, ell, thr, ctr):
    occ = [n for n in range(1, cap + 1) if counts[n] > 0 and (thr == 0 or n < thr)]
    total = 0
    for a in occ:
        for b in occ:
            if a + b >= ell + 1:
                total += a * counts[a] * b * (counts[b] - (a == b))
    r, ctr = _below(ctr, total)
    for a in occ:
        for b in occ:
            if a + b >= ell + 1:
                w = a * counts[a] * b * (counts[b] - (a == b))
                if r < w:
                    return a, b, ctr
                r -= w
    raise AssertionError("exact draw fell off the end")


def _draw(counts, tree, cap, ell, thr, ctr, wtot, max_retries):
    """Draw an ordered permissible pair.

    On ``OK`` the weight of one i-cluster stays removed from the tree.
    """
    rejects = 0
    while True:
        if wtot <= 0:
            return EXHAUSTED, 0, 0, ctr
        r, ctr = _below(ctr, wtot)
        i = _find(tree, cap, r)
        _add(tree, cap, i, -i)
        wtot -= i
        if wtot <= 0:
            _add(tree, cap, i, i)
            return EXHAUSTED, 0, 0, ctr
        r, ctr = _below(ctr, wtot)
        j = _find(tree, cap, r)
        if i + j >= ell + 1:
            return OK, i, j, ctr
        _add(tree, cap, i, i)
        wtot += i
        rejects += 1
        if rejects == 1 and not feasible(counts, tree, cap, ell, wtot):
            return EXHAUSTED, 0, 0, ctr
        if rejects >= max_retries:
            i, j, ctr = _exact_draw(counts, cap, ell, thr, ctr)
            _add(tree, cap, i, -i)
            return OK, i, j, ctr


def draw_pair(counts, tree, cap, ell, thr, ctr, wtot, max_retries):
    """Draw a pair without changing the state; returns ``(status, i, j, ctr)``."""
    status, i, j, ctr = _draw(counts, tree, cap, ell, thr, ctr, wtot, max_retries)
    if status == OK:
        _add(tree, cap, i, i)
    return status, i, j, ctr


def advance(counts, tree, cap, ell, thr, n_steps, ctr, clusters, particles, wtot,
            max_retries):
    """Perform up to ``n_steps`` reactions.

    Returns ``(done, status, ctr, clusters, particles, wtot, pend_i, pend_j)``.
    ``GROW`` means the pair ``(pend_i, pend_j)`` was drawn but its product
    does not fit below ``cap``; the state is left as before that draw.
    """
    done = 0
    while done < n_steps:
        status, i, j, ctr = _draw(counts, tree, cap, ell, thr, ctr, wtot, max_retries)
        if status != OK:
            return done, status, ctr, clusters, particles, wtot, 0, 0
        p = i + j - ell
        if p > cap:
            _add(tree, cap, i, i)
            return done, GROW, ctr, clusters, particles, wtot, i, j
        wtot -= i
        counts[i] -= 1
        counts[j] -= 1
        _add(tree, cap, j, -j)
        wtot -= j
        counts[p] += 1
        if thr == 0 or p < thr:
            _add(tree, cap, p, p)
            wtot += p
        clusters -= 1
        particles -= ell
        done += 1
    return done, OK, ctr, clusters, particles, wtot, 0, 0

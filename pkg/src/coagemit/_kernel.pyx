# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernel.  Same contract as ``_kernel_py``."""

from . import _kernel_py

cdef extern from *:
    int __builtin_clzll(unsigned long long) nogil

cdef unsigned long long _GAMMA = 0x9E3779B97F4A7C15ULL
cdef unsigned long long _M1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long _M2 = 0x94D049BB133111EBULL

cdef enum:
    C_OK = 0
    C_EXHAUSTED = 1
    C_GROW = 2

OK = C_OK
EXHAUSTED = C_EXHAUSTED
GROW = C_GROW


cdef inline unsigned long long _next(unsigned long long *ctr) noexcept nogil:
    cdef unsigned long long z
    ctr[0] += _GAMMA
    z = ctr[0]
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline long long _below(unsigned long long *ctr, long long n) noexcept nogil:
    cdef int shift
    cdef unsigned long long x
    if n <= 1:
        return 0
    shift = __builtin_clzll(<unsigned long long>(n - 1))
    while True:
        x = _next(ctr) >> shift
        if x < <unsigned long long>n:
            return <long long>x


cdef inline void _add(long long[::1] tree, Py_ssize_t cap, Py_ssize_t n, long long d) noexcept nogil:
    while n <= cap:
        tree[n] += d
        n += n & -n


cdef inline Py_ssize_t _find(long long[::1] tree, Py_ssize_t cap, long long r) noexcept nogil:
    cdef Py_ssize_t pos = 0, step = cap, nxt
    while step:
        nxt = pos + step
        if nxt <= cap and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        step >>= 1
    return pos + 1


cdef bint _feasible(long long[::1] counts, long long[::1] tree, Py_ssize_t cap,
                    long long ell, long long wtot) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef long long rest
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


def feasible(counts, tree, Py_ssize_t cap, long long ell, long long wtot):
    return bool(_feasible(counts, tree, cap, ell, wtot))


cdef int _draw(object counts_obj, long long[::1] counts, long long[::1] tree,
               Py_ssize_t cap, long long ell, long long thr,
               unsigned long long *ctr, long long wtot, long long max_retries,
               Py_ssize_t *pi, Py_ssize_t *pj) except -1:
    cdef long long rejects = 0, r
    cdef Py_ssize_t i, j
    while True:
        if wtot <= 0:
            return C_EXHAUSTED
        r = _below(ctr, wtot)
        i = _find(tree, cap, r)
        _add(tree, cap, i, -i)
        wtot -= i
        if wtot <= 0:
            _add(tree, cap, i, i)
            return C_EXHAUSTED
        r = _below(ctr, wtot)
        j = _find(tree, cap, r)
        if i + j >= ell + 1:
            pi[0] = i
            pj[0] = j
            return C_OK
        _add(tree, cap, i, i)
        wtot += i
        rejects += 1
        if rejects == 1 and not _feasible(counts, tree, cap, ell, wtot):
            return C_EXHAUSTED
        if rejects >= max_retries:
            i, j, c = _kernel_py._exact_draw(counts_obj, cap, ell, thr, ctr[0])
            ctr[0] = c
            _add(tree, cap, i, -i)
            pi[0] = i
            pj[0] = j
            return C_OK


def draw_pair(counts_obj, tree, Py_ssize_t cap, long long ell, long long thr,
              unsigned long long ctr, long long wtot, long long max_retries):
    cdef Py_ssize_t i = 0, j = 0
    cdef int status = _draw(counts_obj, counts_obj, tree, cap, ell, thr, &ctr, wtot,
                            max_retries, &i, &j)
    cdef long long[::1] tv = tree
    if status == C_OK:
        _add(tv, cap, i, i)
    return status, i, j, ctr


def advance(counts_obj, tree_obj, Py_ssize_t cap, long long ell, long long thr,
            long long n_steps, unsigned long long ctr, long long clusters,
            long long particles, long long wtot, long long max_retries):
    cdef long long[::1] counts = counts_obj
    cdef long long[::1] tree = tree_obj
    cdef long long done = 0
    cdef Py_ssize_t i = 0, j = 0, p
    cdef int status
    while done < n_steps:
        status = _draw(counts_obj, counts, tree, cap, ell, thr, &ctr, wtot,
                       max_retries, &i, &j)
        if status != C_OK:
            return done, status, ctr, clusters, particles, wtot, 0, 0
        p = i + j - ell
        if p > cap:
            _add(tree, cap, i, i)
            return done, C_GROW, ctr, clusters, particles, wtot, i, j
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
    return done, C_OK, ctr, clusters, particles, wtot, 0, 0

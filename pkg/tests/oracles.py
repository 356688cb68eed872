"""Independent brute-force references used by the tests.

Nothing here imports the package's numerics; each function is a direct
transcription of a definition with plain loops over dicts.
"""
from fractions import Fraction


def interaction_mass(u: dict, ell: int, n_trunc=None) -> float:
    total = 0.0
    for i, ui in u.items():
        for j, uj in u.items():
            p = i + j - ell
            if p >= 1 and (n_trunc is None or p <= n_trunc):
                total += i * j * ui * uj
    return total


def rhs(u: dict, ell: int, n_trunc=None) -> dict:
    """Birth minus death over ordered pairs, divided by M."""
    M = interaction_mass(u, ell, n_trunc)
    du = {}
    for i, ui in u.items():
        for j, uj in u.items():
            p = i + j - ell
            if p < 1 or (n_trunc is not None and p > n_trunc):
                continue
            w = i * j * ui * uj / M
            du[p] = du.get(p, 0.0) + w
            du[i] = du.get(i, 0.0) - w
            du[j] = du.get(j, 0.0) - w
    return du


def split_rates(u: dict, ell: int):
    """Expected change of (m0s, m0b, m1s, m1b) over one reaction, times the rate."""
    M = interaction_mass(u, ell)
    out = [0.0, 0.0, 0.0, 0.0]
    for i, ui in u.items():
        for j, uj in u.items():
            p = i + j - ell
            if p < 1:
                continue
            w = i * j * ui * uj / M
            for size, sign in ((i, -1), (j, -1), (p, +1)):
                big = size > ell
                out[1 if big else 0] += sign * w
                out[3 if big else 2] += sign * w * size
    return tuple(out)


def pair_probabilities(counts: dict, ell: int, threshold: int = 0) -> dict:
    """Exact law of the ordered pair drawn without replacement, conditioned on i + j > ell."""
    elig = {n: c for n, c in counts.items() if c > 0 and (threshold == 0 or n < threshold)}
    W = sum(n * c for n, c in elig.items())
    probs = {}
    for i, ci in elig.items():
        p_i = Fraction(i * ci, W)
        rest = W - i
        if rest == 0:
            continue
        for j, cj in elig.items():
            cj_left = cj - (i == j)
            if cj_left <= 0:
                continue
            if i + j >= ell + 1:
                probs[(i, j)] = p_i * Fraction(j * cj_left, rest)
    Z = sum(probs.values())
    return {k: v / Z for k, v in probs.items()}


def reaction_numbers(support, ell: int, n_max: int) -> dict:
    """Minimax relaxation: s_n = min over pairs (a, b) of max(s_a, s_b) + 1."""
    s = {n: 0 for n in support}
    changed = True
    while changed:
        changed = False
        for a in list(s):
            for b in list(s):
                p = a + b - ell
                if 1 <= p <= n_max:
                    cand = max(s[a], s[b]) + 1
                    if cand < s.get(p, 10 ** 9):
                        s[p] = cand
                        changed = True
    return s


def rk4(f, y0, t0, t1, n):
    """Classical explicit Runge-Kutta on lists of floats."""
    h = (t1 - t0) / n
    y = list(y0)
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, [a + h / 2 * b for a, b in zip(y, k1)])
        k3 = f(t + h / 2, [a + h / 2 * b for a, b in zip(y, k2)])
        k4 = f(t + h, [a + h * b for a, b in zip(y, k3)])
        y = [a + h / 6 * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]
        t += h
    return y


def collision_numbers(support, ell: int, n_max: int) -> dict:
    """Additive relaxation: c_n = min over pairs (a, b) of c_a + c_b + 1."""
    c = {n: 0 for n in support}
    changed = True
    while changed:
        changed = False
        for a in list(c):
            for b in list(c):
                p = a + b - ell
                if 1 <= p <= n_max:
                    cand = c[a] + c[b] + 1
                    if cand < c.get(p, 10 ** 9):
                        c[p] = cand
                        changed = True
    return c

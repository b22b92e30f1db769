"""Brute-force reference computations, independent of the package internals."""

import itertools

import numpy as np
from scipy.optimize import linprog


def hamiltonian_bruteforce(inc, x, d):
    """max <v, d> over every endpoint combination and every control (no separability)."""
    x = np.atleast_1d(np.asarray(x, float))
    d = np.asarray(d, float)
    ends = []
    for D in inc.disturbance_values(x):
        ends.append(sorted({c for lo, hi in D.pieces for c in (lo, hi)}))
    best = -np.inf
    for a in inc.controls.grid():
        g = np.array([f.eval(x, a) for f in inc.factors])
        for combo in itertools.product(*ends):
            best = max(best, float((g * np.array(combo)) @ d))
    return best


def in_cone_of_generators(gens, v, tol=1e-9):
    """v in cone(gens): LP feasibility of gens^T lam = v, lam >= 0."""
    gens = np.atleast_2d(gens)
    if gens.size == 0:
        return bool(np.linalg.norm(v) <= tol)
    k = gens.shape[0]
    res = linprog(np.zeros(k), A_eq=gens.T, b_eq=np.asarray(v, float),
                  bounds=[(0, None)] * k, method="highs")
    return res.status == 0


def ccone_bruteforce(points, q):
    q = np.asarray(q, float)
    for p in np.atleast_2d(points):
        if all(qi == 0 or (pi != 0 and np.sign(qi) == np.sign(pi)) for pi, qi in zip(p, q)):
            return True
    return False


def cone_bruteforce(points, q, tol=1e-12):
    q = np.asarray(q, float)
    if not np.any(q):
        return True
    for p in np.atleast_2d(points):
        pp = float(p @ p)
        if pp == 0:
            continue
        eta = float(p @ q) / pp
        if eta >= 0 and np.linalg.norm(eta * p - q) <= tol * (1 + np.linalg.norm(q)):
            return True
    return False


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out

"""Independent oracles shared by the test modules.

Everything here is deliberately naive (enumeration, quadrature,
grid transforms) and shares no evaluation code with the package.
"""

import itertools

import numpy as np
from scipy.special import sici


def cycle_count_dfs(n_vertices, edges):
    """Cycle count of a partial successor map by explicit path walking."""
    succ = dict(edges)
    assert len(succ) == len(edges), "not a partial permutation"
    loops = 0
    for start in succ:
        path = []
        v = start
        while True:
            if v in path:
                if v == start and min(path) == start:
                    loops += 1
                break
            path.append(v)
            if v not in succ:
                break
            v = succ[v]
    return loops


def merge_loop_count(n_vertices, g_edges, virtual_edges):
    """Loops of the merged successor map, walked independently."""
    succ = {}
    for s, d in list(g_edges) + list(virtual_edges):
        assert s not in succ
        succ[s] = d
    seen = set()
    loops = 0
    for start in sorted(succ):
        if start in seen:
            continue
        v = start
        chain = []
        while v in succ and v not in seen:
            seen.add(v)
            chain.append(v)
            v = succ[v]
        if chain and v == chain[0]:
            loops += 1
    return loops


def nested_theta_quadrature(sigmas, eta, n_grid=900, t_range=220.0):
    """Oracle for the ordered time integral with per-slot damping:

        int dt_1..dt_k theta(0 > t_k > ... > t_1)
            e^{i sum sigma_j t_j} e^{eta sum t_j}

    computed by iterated cumulative trapezoid integration from the
    distant past (t_e = 0).
    """
    k = len(sigmas)
    ts = np.linspace(-t_range, 0.0, n_grid)
    # running[j] after step m: integral over t_1 < ... < t_m < ts[j]
    running = np.ones(len(ts), dtype=complex)
    for m in range(k):
        integrand = running * np.exp((1j * sigmas[m] + eta) * ts)
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (integrand[1:] + integrand[:-1]) * np.diff(ts))])
        running = cum
    return running[-1]


def pole_inverse_grid(gap, pole, eta_coeff, eta, n_points=2**16 + 1,
                      domega=None):
    """Numerically invert 1/(u - pole - i*c*eta) on a frequency grid:

        I(g) = (1/2pi) int du e^{-i u g} / (u - pole - i c eta)

    Simpson rule on [-W, W] plus analytic 1/u and 1/u^2 tail
    corrections via sine/cosine integrals.  Exact value is
    -i theta(g) e^{-i pole g} e^{-c eta g}; the numerical route never
    uses that form.
    """
    if domega is None:
        domega = eta / 25.0
    u = (np.arange(n_points) - n_points // 2) * domega
    w = np.full(n_points, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= domega / 3.0
    q = pole + 1j * eta_coeff * eta
    f = 1.0 / (u - q)
    big_w = u[-1]
    core = np.sum(w * f * np.exp(-1j * u * gap))
    # tails: f ~ 1/u + q/u^2 for |u| > W
    si, ci = sici(big_w * abs(gap))
    sgn = np.sign(gap)
    t1 = -2j * sgn * (np.pi / 2.0 - si)
    t2 = 2.0 * (np.cos(big_w * gap) / big_w
                - abs(gap) * (np.pi / 2.0 - si))
    return (core + t1 + q * t2) / (2.0 * np.pi)


def brute_leg_alignment(bl, br, perm, f_arr, sign):
    """Reference contraction sum_I BL[:, I] conj(BR[:, P(I)]) F(I) by
    explicit loops (no axis transposes)."""
    L = bl.shape[0]
    n_legs = bl.ndim - 1
    out = np.zeros((L, L), dtype=complex)
    for I in itertools.product(range(L), repeat=n_legs):
        J = [0] * n_legs
        for k in range(n_legs):
            J[perm[k]] = I[k]
        out += sign * f_arr[I] * np.outer(bl[(slice(None),) + I],
                                          np.conj(br[(slice(None),) + tuple(J)]))
    return out

"""Exact diagonalization reference for tiny discrete-level systems.

Dense Fock-space diagonalization (dimension 2^L, L <= 10) providing the
exact grand-canonical Green's functions in Lehmann pole-sum form, the
exact spectral function, and the exact self-energy by Dyson inversion.
Deliberately simple: bitmask states, dense matrices, no symmetry
tricks beyond particle-number blocking of checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import PoleSum
from .propagator import SystemSpec

__all__ = [
    "FockSpace",
    "GrandCanonicalState",
    "build_fock",
    "exact_green",
    "exact_spectral",
    "exact_sigma",
    "hubbard_dimer_spec",
    "hubbard_dimer_two_particle_energies",
]

MAX_LEVELS = 10


def _sign_and_state_annihilate(state, i):
    """Apply c_i to a bitmask state; returns (sign, new_state) or None."""
    if not state & (1 << i):
        return None
    sign = -1.0 if bin(state & ((1 << i) - 1)).count("1") % 2 else 1.0
    return sign, state & ~(1 << i)


def _sign_and_state_create(state, i):
    if state & (1 << i):
        return None
    sign = -1.0 if bin(state & ((1 << i) - 1)).count("1") % 2 else 1.0
    return sign, state | (1 << i)


@dataclass(frozen=True)
class FockSpace:
    """Fock space of a SystemSpec: Hamiltonian and number operator."""

    spec: SystemSpec
    hamiltonian: np.ndarray
    number: np.ndarray  # diagonal entries

    @property
    def dim(self):
        return self.hamiltonian.shape[0]


def build_fock(spec):
    """Second-quantized H = sum eps_i n_i + 1/2 sum <ij|v|kl> ci+ cj+ cl ck
    on bitmask states with Jordan-Wigner-style sign bookkeeping."""
    L = spec.basis_size
    if L > MAX_LEVELS:
        raise ValueError(f"basis size {L} exceeds the dense-ED limit {MAX_LEVELS}")
    dim = 1 << L
    H = np.zeros((dim, dim), dtype=complex)
    number = np.zeros(dim)
    eps = np.asarray(spec.levels)
    for s in range(dim):
        occ = [i for i in range(L) if s & (1 << i)]
        number[s] = len(occ)
        H[s, s] += sum(eps[i] for i in occ)
    v = spec.vmat
    nonzero = np.argwhere(np.abs(v) > 0)
    for s in range(dim):
        for i, j, k, l in nonzero:
            # 1/2 <ij|v|kl> ci+ cj+ cl ck acting right to left
            r1 = _sign_and_state_annihilate(s, k)
            if r1 is None:
                continue
            sg, st = r1
            r2 = _sign_and_state_annihilate(st, l)
            if r2 is None:
                continue
            sg2, st2 = r2
            r3 = _sign_and_state_create(st2, j)
            if r3 is None:
                continue
            sg3, st3 = r3
            r4 = _sign_and_state_create(st3, i)
            if r4 is None:
                continue
            sg4, st4 = r4
            H[st4, s] += 0.5 * v[i, j, k, l] * sg * sg2 * sg3 * sg4
    if np.max(np.abs(H - H.conj().T)) > 1e-10:
        raise RuntimeError("assembled many-body Hamiltonian is not Hermitian")
    return FockSpace(spec=spec, hamiltonian=H, number=number)


@dataclass(frozen=True)
class GrandCanonicalState:
    """Eigen-decomposition and grand-canonical weights of a Fock space."""

    energies: np.ndarray     # true eigenvalues of H
    particle_numbers: np.ndarray
    vectors: np.ndarray      # columns are eigenstates
    weights: np.ndarray      # exp(-beta (E - mu N)) / Z

    @classmethod
    def from_fock(cls, fs):
        spec = fs.spec
        # H commutes with N; diagonalize H + tiny*N jointly by blocks
        evals, vecs = np.linalg.eigh(fs.hamiltonian)
        nvals = np.real(np.einsum("is,i,it->st", vecs.conj(), fs.number,
                                  vecs)).diagonal()
        nvals = np.round(nvals).astype(int)
        em = evals - spec.mu * nvals
        logw = -spec.beta * em
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        return cls(energies=evals, particle_numbers=nvals, vectors=vecs,
                   weights=w)


def _annihilator_matrix(L, i):
    dim = 1 << L
    c = np.zeros((dim, dim))
    for s in range(dim):
        r = _sign_and_state_annihilate(s, i)
        if r is not None:
            sg, st = r
            c[st, s] = sg
    return c


def exact_green(fs, state, kind, weight_floor=1e-14):
    """Lehmann pole sum of -iG^< or +iG^> in true frequencies.

    -iG^<_{ij}(w) = sum 2 pi delta(w - (E_J - E_J')) rho_J
                    <J'|c_i|J><J'|c_j|J>*      (J' one particle fewer)
    +iG^>_{ij}(w) = sum 2 pi delta(w - (E_J' - E_J)) rho_J
                    <J|c_i|J'><J|c_j|J'>*      (J' one particle more)

    Both weight matrices are Gram matrices, hence PSD; together they
    satisfy sum of all weights = identity (anticommutator sum rule).
    """
    spec = fs.spec
    L = spec.basis_size
    if kind not in ("lesser", "greater"):
        raise ValueError(kind)
    V = state.vectors
    camps = np.array([V.conj().T @ _annihilator_matrix(L, i) @ V
                      for i in range(L)])  # camps[i][J', J] = <J'|c_i|J>
    rho = state.weights
    E = state.energies
    # camps[i][a, b] = <a|c_i|b>; pole of the (a, b) pair is E_b - E_a
    amp = camps
    poles = E[None, :] - E[:, None]
    if kind == "lesser":
        # pairs (J', J): weight rho_J sits on the ket index
        wgt = rho[None, :] * np.ones_like(poles)
    else:
        # pairs (J, J'): weight rho_J sits on the bra index
        wgt = rho[:, None] * np.ones_like(poles)

    strength = np.einsum("ipq,ipq->pq", amp, np.conj(amp)).real * wgt
    keep = np.argwhere(strength > weight_floor)
    if len(keep) == 0:
        return PoleSum(np.zeros(0), np.zeros((0, L, L), dtype=complex))
    flat_p = poles[keep[:, 0], keep[:, 1]]
    flat_w = wgt[keep[:, 0], keep[:, 1]]
    flat_amp = amp[:, keep[:, 0], keep[:, 1]]
    order = np.argsort(np.round(flat_p, 12), kind="stable")
    pole_map = {}
    for idx in order:
        e = round(float(flat_p[idx]), 12)
        w = flat_w[idx] * np.outer(flat_amp[:, idx], np.conj(flat_amp[:, idx]))
        if e in pole_map:
            pole_map[e] += w
        else:
            pole_map[e] = w
    energies = np.array(sorted(pole_map))
    weights = np.array([pole_map[e] for e in energies])
    return PoleSum(energies, weights).merged()


def exact_spectral(fs, state):
    """A_exact(w) = i(G^> - G^<) as a pole sum (sum of the two PSD parts)."""
    less = exact_green(fs, state, "lesser")
    grt = exact_green(fs, state, "greater")
    energies = np.concatenate([less.energies, grt.energies])
    weights = np.concatenate([less.weights, grt.weights])
    return PoleSum(energies, weights).merged()


def exact_sigma(fs, state, omegas, eta=None, singular_tol=1e-10):
    """Exact retarded self-energy on a grid by Dyson inversion:
    Sigma^R(w) = [g^R(w)]^{-1} - [G^R(w)]^{-1}, bare and dressed
    resolvents regularized with the same eta.  Returns (samples,
    flags) where flags marks near-singular inversions per frequency.
    """
    spec = fs.spec
    if eta is None:
        eta = spec.eta
    omegas = np.asarray(omegas, dtype=float)
    L = spec.basis_size
    a_exact = exact_spectral(fs, state)
    gr_dressed = a_exact.resolvent(omegas + 1j * eta)
    eps = np.asarray(spec.levels)
    out = np.empty((len(omegas), L, L), dtype=complex)
    flags = np.zeros(len(omegas), dtype=bool)
    for k, w in enumerate(omegas):
        g0_inv = np.diag(w + 1j * eta - eps)
        gd = gr_dressed[k]
        cond_bad = False
        try:
            gd_inv = np.linalg.inv(gd)
            if 1.0 / np.linalg.cond(gd) < singular_tol:
                cond_bad = True
        except np.linalg.LinAlgError:
            gd_inv = np.full((L, L), np.nan)
            cond_bad = True
        flags[k] = cond_bad
        out[k] = g0_inv - gd_inv
    return out, flags


def hubbard_dimer_spec(t, u, beta, mu, eta):
    """Two-site Hubbard dimer in the bonding/antibonding one-body
    eigenbasis (levels -t, -t, +t, +t for b-up, b-down, a-up, a-down),
    with the on-site repulsion rotated into that basis."""
    if t <= 0:
        raise ValueError("hopping must be positive")
    # site-basis spin-orbitals: (site, sigma): 0=(1,up),1=(1,dn),2=(2,up),3=(2,dn)
    vsite = np.zeros((4, 4, 4, 4))
    for s in (0, 1):
        up, dn = 2 * s, 2 * s + 1
        vsite[up, dn, up, dn] = u
        vsite[dn, up, dn, up] = u
    # rotation site -> orbital: bonding = (1+2)/sqrt2, antibonding = (1-2)/sqrt2
    r = np.zeros((4, 4))
    inv = 1.0 / np.sqrt(2.0)
    # orbitals: 0=(b,up),1=(b,dn),2=(a,up),3=(a,dn)
    r[0, 0], r[2, 0] = inv, inv      # site1 up, site2 up -> b up
    r[1, 1], r[3, 1] = inv, inv
    r[0, 2], r[2, 2] = inv, -inv
    r[1, 3], r[3, 3] = inv, -inv
    vorb = np.einsum("ijkl,im,jn,kp,lq->mnpq", vsite, r, r, r, r)
    return SystemSpec(levels=[-t, -t, t, t], vmat=vorb, beta=beta, mu=mu,
                      eta=eta)


def hubbard_dimer_two_particle_energies(t, u):
    """Closed-form spectrum of the half-filled dimer's S_z = 0 sector:
    {0 (triplet), U, U/2 +- sqrt((U/2)^2 + 4 t^2)}."""
    root = np.sqrt((u / 2.0) ** 2 + 4.0 * t**2)
    return np.sort(np.array([0.0, u, u / 2.0 + root, u / 2.0 - root]))

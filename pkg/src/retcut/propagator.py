"""Model definition and the non-interacting one-particle propagator.

The model is a set of discrete fermionic levels (spin-orbitals) that
diagonalize the one-body Hamiltonian, interacting through a two-body
matrix ``<ij|v|kl>``, held at inverse temperature ``beta`` and chemical
potential ``mu``.  All components of the bare Green's function are
available in time and frequency, together with the square-root
factorization of the lesser/greater components that the cutting rules
are built on:

    -i g^<(t,t') = gtilde^<(t) * conj(gtilde^<(t'))     gtilde^< = g^R sqrt(f)
    +i g^>(t,t') = gtilde^>(t) * conj(gtilde^>(t'))     gtilde^> = g^R sqrt(1-f)

Delta peaks on the real axis are kept exact as (pole, weight) pairs;
Lorentzian broadening happens only at export time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "SystemSpec",
    "Propagator",
    "fermi",
    "g_component_time",
    "g_component_freq",
    "factorize_cut_line",
    "split_zero_temperature",
    "random_hermitian_vmat",
]


def fermi(x, beta):
    """Fermi function 1/(exp(beta*x) + 1), overflow-safe.

    Saturates to exactly 0.0 / 1.0 when beta*x leaves the floating range.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    return expit(-beta * np.asarray(x, dtype=float)) if np.ndim(x) else float(expit(-beta * x))


def _check_vmat(vmat, n):
    vmat = np.asarray(vmat, dtype=complex)
    if vmat.shape != (n, n, n, n):
        raise ValueError(f"vmat must have shape {(n, n, n, n)}, got {vmat.shape}")
    herm = np.transpose(vmat, (2, 3, 0, 1)).conj()
    if not np.allclose(vmat, herm, atol=1e-12):
        raise ValueError("vmat is not Hermitian: <ij|v|kl> != conj(<kl|v|ij>)")
    exch = np.transpose(vmat, (1, 0, 3, 2))
    if not np.allclose(vmat, exch, atol=1e-12):
        raise ValueError("vmat lacks pair-exchange symmetry: <ij|v|kl> != <ji|v|lk>")
    return vmat


@dataclass(frozen=True)
class SystemSpec:
    """Discrete-level fermionic system.

    Parameters
    ----------
    levels : array_like
        Energies eps_i of the spin-orbitals (the one-body eigenbasis, so
        the bare propagator is diagonal in the level index).
    vmat : array_like
        Two-body tensor <ij|v|kl>, shape (L, L, L, L).  Must satisfy
        <ij|v|kl> = conj(<kl|v|ij>) and <ij|v|kl> = <ji|v|lk>.
    beta : float
        Inverse temperature, > 0.
    mu : float
        Chemical potential.
    eta : float
        Broadening / regulator, > 0.  One global eta is used for every
        resolvent denominator and for export broadening.
    """

    levels: tuple
    vmat: np.ndarray = field(repr=False)
    beta: float
    mu: float
    eta: float

    def __init__(self, levels, vmat, beta, mu, eta):
        levels = tuple(float(e) for e in np.atleast_1d(levels))
        if len(levels) < 1:
            raise ValueError("need at least one level")
        if beta <= 0:
            raise ValueError("beta must be positive")
        if eta <= 0:
            raise ValueError("eta must be positive")
        vmat = _check_vmat(vmat, len(levels))
        vmat.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "vmat", vmat)
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "mu", float(mu))
        object.__setattr__(self, "eta", float(eta))

    @property
    def basis_size(self):
        return len(self.levels)

    def scaled_interaction(self, s):
        """Same system with the two-body tensor multiplied by ``s``."""
        return SystemSpec(self.levels, s * np.asarray(self.vmat),
                          self.beta, self.mu, self.eta)


@dataclass(frozen=True)
class Propagator:
    """Bare propagator data for a system: per-level occupations f_i.

    ``occupations`` may be overridden (used by the occupation-dressed
    self-consistency loop); by default f_i = f(eps_i - mu).
    """

    spec: SystemSpec
    occupations: np.ndarray = None

    def __post_init__(self):
        if self.occupations is None:
            occ = fermi(np.array(self.spec.levels) - self.spec.mu, self.spec.beta)
        else:
            occ = np.asarray(self.occupations, dtype=float)
            if occ.shape != (self.spec.basis_size,):
                raise ValueError("occupations must have one entry per level")
            if np.any(occ < 0.0) or np.any(occ > 1.0):
                raise ValueError("occupations must lie in [0, 1]")
        occ = np.array(occ, dtype=float)
        occ.setflags(write=False)
        object.__setattr__(self, "occupations", occ)

    @property
    def f(self):
        return self.occupations

    @property
    def fbar(self):
        return 1.0 - self.occupations


def g_component_time(prop, level, kind, t, tp):
    """Bare propagator component of one level in the time domain.

    g^>(t,t') = -i (1-f) e^{-i eps (t-t')}
    g^<(t,t') = +i f e^{-i eps (t-t')}
    g^R(t,t') = theta(t-t') (g^> - g^<),   g^A = -theta(t'-t) (g^> - g^<)

    Equal-time step functions use theta(0) = 0 (coincident times carry
    zero measure in every integral we build).
    """
    spec = prop.spec
    if not 0 <= level < spec.basis_size:
        raise IndexError("level out of range")
    eps = spec.levels[level]
    phase = np.exp(-1j * eps * (t - tp))
    f = prop.f[level]
    if kind == "greater":
        return -1j * (1.0 - f) * phase
    if kind == "lesser":
        return 1j * f * phase
    jump = -1j * phase  # g^> - g^<
    if kind == "retarded":
        return jump if t > tp else 0.0 * jump
    if kind == "advanced":
        return -jump if tp > t else 0.0 * jump
    raise ValueError(f"unknown component kind {kind!r}")


def g_component_freq(prop, level, kind, z=None, as_pole=False):
    """Bare propagator component of one level in frequency space.

    ``lesser``/``greater`` are delta peaks; with ``as_pole=True`` the
    (pole, weight) pair is returned (weights f resp. 1-f, the residues
    of -i g^< / +i g^> divided by 2*pi).  ``retarded`` returns
    1/(z - eps + i eta), ``matsubara`` the resolvent 1/(z - eps + mu)
    at any complex point.  Requesting a pole pair for ``matsubara`` is
    an error: it is a resolvent, not a real-axis delta.
    """
    spec = prop.spec
    if not 0 <= level < spec.basis_size:
        raise IndexError("level out of range")
    eps = spec.levels[level]
    if kind in ("lesser", "greater"):
        weight = prop.f[level] if kind == "lesser" else 1.0 - prop.f[level]
        if as_pole:
            return eps, weight
        # broadened delta: (+2*pi*i f / -2*pi*i fbar) * delta_eta(z - eps)
        delta = (spec.eta / np.pi) / ((np.real(z) - eps) ** 2 + spec.eta**2)
        sign = 2j * np.pi if kind == "lesser" else -2j * np.pi
        return sign * weight * delta
    if as_pole:
        raise ValueError(f"component {kind!r} has no real-axis pole-weight form")
    if kind == "retarded":
        return 1.0 / (z - eps + 1j * spec.eta)
    if kind == "matsubara":
        return 1.0 / (z - eps + spec.mu)
    raise ValueError(f"unknown component kind {kind!r}")


def factorize_cut_line(prop, level, kind):
    """Square-root leg factorization of a lesser/greater line.

    Returns callables (leg, leg_conj) with t0 = 0 and no broadening in
    the bare retarded factor, such that for all t, t' >= 0

        -i g^<(t,t') = leg(t) * leg_conj(t')   for kind='lesser'
        +i g^>(t,t') = leg(t) * leg_conj(t')   for kind='greater'
    """
    spec = prop.spec
    eps = spec.levels[level]
    w = prop.f[level] if kind == "lesser" else 1.0 - prop.f[level]
    if kind not in ("lesser", "greater"):
        raise ValueError("factorization applies to lesser/greater only")
    root = np.sqrt(w)

    def leg(t):
        # bare g^R(t, 0) at eta = 0, times sqrt(f) or sqrt(1-f)
        return (-1j * np.exp(-1j * eps * t) if t >= 0 else 0.0) * root

    def leg_conj(t):
        return np.conj(leg(t))

    return leg, leg_conj


def split_zero_temperature(prop, level):
    """Split g into the zero-temperature part and the thermal correction.

    Returns (g0, dg) as callables of (kind, t, t') with kind in
    {lesser, greater}; g = g0 + dg holds identically and
    dg = -f g0^> - (1-f) g0^< carries no step function.  Raises if the
    level sits exactly at mu (zero-temperature occupation ambiguous).
    """
    spec = prop.spec
    eps = spec.levels[level]
    if eps == spec.mu:
        raise ValueError("level exactly at mu: zero-temperature occupation undefined")
    n0 = 1.0 if eps < spec.mu else 0.0
    f = prop.f[level]

    def g0(kind, t, tp):
        phase = np.exp(-1j * eps * (t - tp))
        if kind == "greater":
            return -1j * (1.0 - n0) * phase
        if kind == "lesser":
            return 1j * n0 * phase
        raise ValueError(kind)

    def dg(kind, t, tp):
        # i (f - n0) e^{-i eps (t-t')}; same for both components
        if kind not in ("lesser", "greater"):
            raise ValueError(kind)
        return 1j * (f - n0) * np.exp(-1j * eps * (t - tp))

    return g0, dg


def random_hermitian_vmat(rng, n, norm=1.0, real=False):
    """Random two-body tensor with the required symmetries, scaled so
    that its max-abs element equals ``norm``."""
    v = rng.standard_normal((n, n, n, n))
    if not real:
        v = v + 1j * rng.standard_normal((n, n, n, n))
    v = v + np.transpose(v, (1, 0, 3, 2))          # pair exchange
    v = v + np.transpose(v, (2, 3, 0, 1)).conj()   # hermiticity
    m = np.max(np.abs(v))
    if m > 0:
        v = v * (norm / m)
    return v

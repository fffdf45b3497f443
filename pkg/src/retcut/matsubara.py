"""Matsubara N-point evaluation and analytic continuation checks.

The imaginary-time counterpart of a half-diagram is evaluated as the
same sum over contour orderings as the retarded form, but with plain
(unregularized) energy denominators built from mu-shifted internal line
energies nu - mu.  For discrete spectra both objects are rational
functions, related exactly by a per-slot frequency substitution; the
substitution carries one mu per net g-line attached to the slot:

    zeta_j = omega_j + mu * d_j - i eta_j,
    d_j = (#lines starting at slot j) - (#lines ending at slot j),

which reduces to the familiar single-line continuations
G^R(w) = G^M(w - mu + i eta) once the conservation delta is used to
move the argument to the external line.  check_continuation verifies
the identity numerically through two independent code paths.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .retarded import (
    SignedOrdering, _leg_slots, _vmat_product, eval_slots,
)

__all__ = [
    "MatsubaraValue",
    "evaluate_matsubara",
    "matsubara_reference",
    "imaginary_time_quadrature",
    "slot_line_imbalance",
    "continued_arguments",
    "check_continuation",
]


@dataclass(frozen=True)
class MatsubaraValue:
    """Rational Matsubara value: ordering terms plus the conservation tag.

    ``total_argument`` is the sum of all slot frequency arguments; the
    full N-point function carries a Kronecker delta on it, so the value
    "as a distribution" is zero off the conservation manifold while the
    analytic (spectral) part remains evaluable anywhere off the poles.
    """

    terms: tuple
    total_argument: complex

    @property
    def conserving(self):
        return abs(self.total_argument) < 1e-10

    def value(self):
        """Analytic spectral part (continuation off the grid allowed)."""
        out = 0.0 + 0.0j
        for w, denoms in self.terms:
            v = w
            for d in denoms:
                v = v / d
            out = out + v
        return out

    def full_value(self):
        """Distribution-level value: zero unless the arguments conserve."""
        return self.value() if self.conserving else 0.0 + 0.0j


def _matsubara_denominators(so, sigmas):
    denoms = []
    acc = 0.0 + 0.0j
    for lab in reversed(so.n_minus):
        acc = acc + sigmas[lab]
        denoms.append(acc)
    acc = 0.0 + 0.0j
    for lab in so.n_plus:
        acc = acc + sigmas[lab]
        denoms.append(acc)
    for d in denoms:
        if d == 0:
            raise ZeroDivisionError(
                f"Matsubara evaluation exactly on a pole (Omega = 0 in {denoms})")
    return denoms


def _matsubara_sigmas(half, prop, zetas, leg_levels, internal_levels,
                      include_legs=True):
    spec = prop.spec
    m = half.n_slots
    slot_of = half.slot_of
    sig = [complex(zetas[j]) for j in range(m)]
    if include_legs:
        for k, j in enumerate(_leg_slots(half)):
            s = +1 if k < half.n_pairs else -1
            sig[j] += s * spec.levels[leg_levels[k]]
    for e, (s, d) in enumerate(half.g_edges):
        ebar = spec.levels[internal_levels[e]] - spec.mu
        sig[slot_of[s]] += ebar
        sig[slot_of[d]] -= ebar
    return sig


def evaluate_matsubara(half, prop, zetas, leg_levels=(), internal_levels=None,
                       ext_index=0, prefactor=None, include_legs=True):
    """Matsubara value of a half-diagram at per-slot complex arguments.

    ``zetas`` has one entry per time slot (the external slot's entry
    never reaches a denominator but counts toward the conservation
    tag).  Internal lines carry nu - mu; cut legs contribute their bare
    +/- eps like in the retarded form.  Raises when a denominator
    vanishes exactly.
    """
    from .cutting import half_prefactor
    spec = prop.spec
    if len(zetas) != half.n_slots:
        raise ValueError("need one frequency argument per time slot")
    if prefactor is None:
        prefactor = half_prefactor(half)
    legs = _leg_slots(half)
    if len(leg_levels) != len(legs):
        raise ValueError("need one level per cut leg")
    m = half.n_slots
    e = half.external_slot
    slot_of = half.slot_of

    ranges = [tuple(internal_levels)] if internal_levels is not None else \
        itertools.product(range(spec.basis_size), repeat=len(half.g_edges))
    terms = []
    for ilev in ranges:
        ilev = tuple(ilev)
        v = _vmat_product(half, spec, leg_levels, ilev, ext_index)
        if v == 0:
            continue
        sig = _matsubara_sigmas(half, prop, zetas, leg_levels, ilev,
                                include_legs)
        orderings = list(itertools.permutations(range(m)))
        for order in reversed(orderings):
            so = SignedOrdering(order, e)
            denoms = _matsubara_denominators(so, sig)
            pos = {lab: i for i, lab in enumerate(order)}
            w = so.sign * (-1j) ** (m - 1)
            for k, (s, d) in enumerate(half.g_edges):
                lev = ilev[k]
                if pos[slot_of[d]] < pos[slot_of[s]]:
                    w = w * (-1j) * prop.fbar[lev]
                else:
                    w = w * (+1j) * prop.f[lev]
            terms.append((w * v * prefactor, tuple(denoms)))
    total = sum(complex(z) for z in zetas)
    if include_legs:
        for k, j in enumerate(legs):
            s = +1 if k < half.n_pairs else -1
            total += s * spec.levels[leg_levels[k]]
    return MatsubaraValue(tuple(terms), total)


def matsubara_reference(half, prop, zetas, leg_levels=(), internal_levels=None,
                        ext_index=0, prefactor=None, include_legs=True):
    """Independent re-summation used as an oracle for evaluate_matsubara.

    Builds every ordering term from scratch (fresh sign bookkeeping,
    denominators accumulated in the opposite direction) and sums in
    reverse; shares no per-term code with the production path.
    """
    from .cutting import half_prefactor
    spec = prop.spec
    if prefactor is None:
        prefactor = half_prefactor(half)
    m = half.n_slots
    e = half.external_slot
    slot_of = half.slot_of
    ranges = [tuple(internal_levels)] if internal_levels is not None else \
        itertools.product(range(spec.basis_size), repeat=len(half.g_edges))
    vals = []
    for ilev in ranges:
        ilev = tuple(ilev)
        v = _vmat_product(half, spec, leg_levels, ilev, ext_index)
        if v == 0:
            continue
        sig = _matsubara_sigmas(half, prop, zetas, leg_levels, ilev,
                                include_legs)
        for order in itertools.permutations(range(m)):
            p = order.index(e)
            later, earlier = order[:p], order[p + 1:]
            term = (-1.0) ** p * (-1j) ** (m - 1) * v * prefactor
            # denominators: cumulative sums walked from the far ends
            run = 0.0 + 0.0j
            for lab in earlier[::-1]:
                run += sig[lab]
                term = term / run
            run = 0.0 + 0.0j
            for lab in later:
                run += sig[lab]
                term = term / run
            pos = {lab: i for i, lab in enumerate(order)}
            for k, (s, d) in enumerate(half.g_edges):
                asc = pos[slot_of[d]] < pos[slot_of[s]]
                term *= (-1j * prop.fbar[ilev[k]]) if asc else (1j * prop.f[ilev[k]])
            vals.append(term)
    return sum(reversed(vals)) if vals else 0.0 + 0.0j


def imaginary_time_quadrature(half, prop, zeta, leg_levels=(),
                              internal_levels=None, ext_index=0,
                              prefactor=None, points=4001):
    """Direct imaginary-time transform for two-slot halves (slow oracle).

    Computes (-i) * int_0^beta dtau e^{zeta tau} D(tau) with the
    external slot pinned at tau = 0, by composite Simpson quadrature.
    Legs are sigma-inactive here (pure external phase couplings); on
    the Matsubara grid of the internal slot's statistics this equals
    the rational evaluate_matsubara value with include_legs=False.
    """
    from .cutting import half_prefactor
    spec = prop.spec
    if half.n_slots != 2:
        raise ValueError("quadrature oracle implemented for two slots")
    if points % 2 == 0:
        raise ValueError("Simpson rule needs an odd point count")
    if prefactor is None:
        prefactor = half_prefactor(half)
    e = half.external_slot
    other = 1 - e
    slot_of = half.slot_of
    beta = spec.beta
    taus = np.linspace(0.0, beta, points)

    ranges = [tuple(internal_levels)] if internal_levels is not None else \
        itertools.product(range(spec.basis_size), repeat=len(half.g_edges))
    total = np.zeros(points, dtype=complex)
    for ilev in ranges:
        ilev = tuple(ilev)
        v = _vmat_product(half, spec, leg_levels, ilev, ext_index)
        if v == 0:
            continue
        prod = np.full(points, v, dtype=complex)
        for k, (s, d) in enumerate(half.g_edges):
            lev = ilev[k]
            ebar = spec.levels[lev] - spec.mu
            tau_d = taus if slot_of[d] == other else 0.0
            tau_s = taus if slot_of[s] == other else 0.0
            phase = np.exp(-ebar * (tau_d - tau_s))
            later = (slot_of[d] == other)  # tau_d > tau_s on (0, beta)
            occ = (-1j * prop.fbar[lev]) if later else (1j * prop.f[lev])
            prod = prod * occ * phase
        total = total + prod
    integrand = np.exp(zeta * taus) * total
    from scipy.integrate import simpson
    return -1j * prefactor * simpson(integrand, x=taus)


def slot_line_imbalance(half):
    """Per-slot g-line imbalance d_j = (#starts) - (#ends)."""
    d = [0] * half.n_slots
    slot_of = half.slot_of
    for s, dd in half.g_edges:
        d[slot_of[s]] += 1
        d[slot_of[dd]] -= 1
    return tuple(d)


def continued_arguments(half, omegas, mu, eta):
    """Slot arguments at which the Matsubara form equals the retarded one."""
    d = slot_line_imbalance(half)
    return tuple(omegas[j] + mu * d[j] - 1j * eta for j in range(half.n_slots))


def check_continuation(half, prop, omega_tuples, leg_levels=(), eta=None,
                       ext_index=0):
    """Max relative deviation between the retarded evaluation and the
    analytically continued Matsubara evaluation over a set of real
    per-slot frequency tuples.  Both sides are rational functions of
    the same arguments computed through independent code paths; by the
    continuation theorem the deviation is pure roundoff.
    """
    spec = prop.spec
    if eta is None:
        eta = spec.eta
    worst = 0.0
    for omegas in omega_tuples:
        lhs = eval_slots(half, prop, tuple(omegas), leg_levels,
                         eta=eta, mode="retarded", ext_index=ext_index).value()
        zetas = continued_arguments(half, tuple(omegas), spec.mu, eta)
        rhs = evaluate_matsubara(half, prop, zetas, leg_levels,
                                 ext_index=ext_index).value()
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst

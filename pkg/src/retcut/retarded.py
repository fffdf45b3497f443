"""Multi-argument retarded functions of half-diagrams.

A half-diagram with M time slots and external slot e is evaluated, in
frequency space and for a discrete level spectrum, as a sum over the M!
contour orderings.  For an ordering written latest-first with e at
position p the term carries

    sign (-1)^p  *  (-i)^(M-1)
    *  product over internal lines of (-i*(1-f)) [ascending] or (+i*f)
       [descending], the residues of the lesser/greater lines
    /  product over the nested energy denominators: partial sums of the
       slot energy outflows sigma_j over the k earliest slots
       (k = 1..#slots before e) and the l latest slots (l = 1..p),
       each regularized as (Omega - i*c*eta) with c the circle size.

The eta placement corresponds to damping every internal time by
exp(-eta*(t_e - t_j)), which is also what the time-domain form here
uses; frequency and time representations are then exact transforms of
each other at finite eta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CommutatorExpansion",
    "SignedOrdering",
    "RetardedValue",
    "nested_commutator",
    "enumerate_orderings",
    "lambda_factor",
    "step_integral_oracle",
    "evaluate_retarded_frequency",
    "eval_slots",
    "half_tensor",
    "retarded_time_domain",
    "multi_retarded_time_domain",
    "physical_leg_args",
]


# ---------------------------------------------------------------------------
# contour orderings and nested commutators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommutatorExpansion:
    """Formal sum of contour-ordering strings with signs."""

    strings: tuple  # ((sign, labels latest-first), ...)

    def __len__(self):
        return len(self.strings)


def nested_commutator(labels):
    """Expand [l1, l2, ..., lN] = [[[l1, l2], l3], ..., lN].

    Strings are label tuples in contour order, latest first;
    [1, 2] -> +(1, 2), -(2, 1).  Needs at least two labels.
    """
    labels = tuple(labels)
    if len(labels) < 2:
        raise ValueError("nested commutator needs at least two labels")
    strings = [(+1, (labels[0],))]
    for lab in labels[1:]:
        nxt = []
        for sign, s in strings:
            nxt.append((sign, s + (lab,)))
            nxt.append((-sign, (lab,) + s))
        strings = nxt
    return CommutatorExpansion(tuple(strings))


@dataclass(frozen=True)
class SignedOrdering:
    """One contour ordering of the slot labels, latest first.

    ``n_plus`` are the labels later than the external one (backward
    branch), ``n_minus`` the earlier ones (forward branch); the sign is
    (-1)^len(n_plus) from the backward integration direction.
    """

    ordering: tuple
    external: int

    @property
    def position(self):
        return self.ordering.index(self.external)

    @property
    def n_plus(self):
        return self.ordering[:self.position]

    @property
    def n_minus(self):
        return self.ordering[self.position + 1:]

    @property
    def sign(self):
        return -1 if self.position % 2 else 1


def enumerate_orderings(labels, external):
    """All contour orderings of ``labels`` (external included)."""
    labels = tuple(labels)
    if external not in labels:
        raise ValueError("external label must be among the labels")
    return [SignedOrdering(p, external)
            for p in itertools.permutations(labels)]


def lambda_factor(ordering, sigmas, eta):
    """Frequency-space weight of one contour ordering.

    ``sigmas`` maps slot label -> energy outflow sigma_j.  Returns the
    rational factor (the overall 2*pi*delta of energy conservation is
    carried separately as a pole tag):

        (-1)^{N+} (-i)^{M-1} / prod_k (Omega_k - i k eta)

    with Omega_k running over the nested partial sums on both branches.
    """
    m = len(ordering.ordering)
    denoms = _ordering_denominators(ordering, sigmas, eta)
    val = ordering.sign * (-1j) ** (m - 1)
    for d in denoms:
        if d == 0:
            raise ZeroDivisionError("energy denominator vanished at Omega=0")
        val = val / d
    return val


def _ordering_denominators(ordering, sigmas, eta):
    """Nested denominators (Omega_k - i*k*eta) of a retarded ordering."""
    denoms = []
    acc = 0.0 + 0.0j
    for k, lab in enumerate(reversed(ordering.n_minus), start=1):
        acc = acc + sigmas[lab]
        denoms.append(acc - 1j * k * eta)
    acc = 0.0 + 0.0j
    for l, lab in enumerate(ordering.n_plus, start=1):
        acc = acc + sigmas[lab]
        denoms.append(acc - 1j * l * eta)
    return denoms


def _time_ordered_denominators(order_tuple, sigmas, eta):
    """Earliest-k partial sums, k = 1..M-1 (no split at the external)."""
    denoms = []
    acc = 0.0 + 0.0j
    for k, lab in enumerate(reversed(order_tuple[1:]), start=1):
        acc = acc + sigmas[lab]
        denoms.append(acc - 1j * k * eta)
    return denoms


def step_integral_oracle(sigmas, t, eta):
    """Closed form of the ordered time integral with damped steps:

        int dt_1..dt_k theta(t, t_k, .., t_1) e^{i sigma.t} e^{eta (t_j - t)}
        = (-i)^k e^{i sum(sigma) t} / prod_k (S_k - i k eta)

    with S_k the sum of the k earliest sigmas.  Used as the independent
    reference for :func:`lambda_factor`.
    """
    sigmas = list(sigmas)
    k = len(sigmas)
    val = (-1j) ** k * np.exp(1j * sum(sigmas) * t)
    acc = 0.0 + 0.0j
    for n, s in enumerate(sigmas, start=1):
        acc = acc + s
        val = val / (acc - 1j * n * eta)
    return val


# ---------------------------------------------------------------------------
# half-diagram evaluation, scalar path
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RetardedValue:
    """Rational value of a half-diagram at fixed arguments.

    ``terms`` holds one (weight, denominator factors) pair per contour
    ordering; ``pole_tag`` is the total energy outflow E of the overall
    2*pi*delta(omega - E).
    """

    terms: tuple
    pole_tag: complex

    def value(self):
        out = 0.0 + 0.0j
        for w, denoms in self.terms:
            v = w
            for d in denoms:
                v = v / d
            out = out + v
        return out


def physical_leg_args(half, spec, leg_levels):
    """Cut-line frequency arguments at the collapsed physical point:
    +eps for hole (entry) legs, -eps for particle (exit) legs, in the
    canonical leg order (exits first)."""
    n = half.n_pairs
    args = []
    for k in range(len(leg_levels)):
        eps = spec.levels[leg_levels[k]]
        args.append(-eps if k < n else +eps)
    return tuple(args)


def _leg_slots(half):
    slot_of = half.slot_of
    return [slot_of[v] for v in half.exits] + [slot_of[v] for v in half.entries]


def _attachment_level(half, att, leg_levels, internal_levels, ext_index):
    kind = att[0]
    if kind == "g":
        return internal_levels[att[1]]
    if kind == "exit":
        return leg_levels[att[1]]
    if kind == "entry":
        return leg_levels[half.n_pairs + att[1]]
    return ext_index


def _vmat_product(half, spec, leg_levels, internal_levels, ext_index):
    val = 1.0 + 0.0j
    for grp in half.slots:
        if len(grp) == 1:
            v = grp[0]
            lin = _attachment_level(half, half.in_attachment(v),
                                    leg_levels, internal_levels, ext_index)
            lout = _attachment_level(half, half.out_attachment(v),
                                     leg_levels, internal_levels, ext_index)
            if lin != lout:
                return 0.0 + 0.0j  # bare vertex conserves the level
            continue
        a, b = grp
        oa = _attachment_level(half, half.out_attachment(a),
                               leg_levels, internal_levels, ext_index)
        ob = _attachment_level(half, half.out_attachment(b),
                               leg_levels, internal_levels, ext_index)
        ia = _attachment_level(half, half.in_attachment(a),
                               leg_levels, internal_levels, ext_index)
        ib = _attachment_level(half, half.in_attachment(b),
                               leg_levels, internal_levels, ext_index)
        val = val * spec.vmat[oa, ob, ia, ib]
    return val


def _slot_sigma_values(half, spec, leg_sigma, internal_levels, slot_omegas):
    m = half.n_slots
    slot_of = half.slot_of
    sig = [0.0 + 0.0j] * m
    if slot_omegas is not None:
        for j in range(m):
            sig[j] += slot_omegas[j]
    legs = _leg_slots(half)
    for k, j in enumerate(legs):
        sig[j] += leg_sigma[k]
    for e, (s, d) in enumerate(half.g_edges):
        eps = spec.levels[internal_levels[e]]
        sig[slot_of[s]] += eps
        sig[slot_of[d]] -= eps
    return sig


def _ordering_terms(half, prop, sigmas, internal_levels, eta, mode):
    """(weight, denominators) per contour ordering; no vmat, no prefactor."""
    spec = prop.spec
    m = half.n_slots
    e = half.external_slot
    slot_of = half.slot_of
    edges = [(slot_of[s], slot_of[d]) for s, d in half.g_edges]
    for js, jd in edges:
        if js == jd:
            raise ValueError("instantaneous internal line (equal-slot g-edge)")
    out = []
    for order in itertools.permutations(range(m)):
        pos = {lab: i for i, lab in enumerate(order)}
        if mode == "retarded":
            so = SignedOrdering(order, e)
            sign = so.sign
            denoms = _ordering_denominators(so, sigmas, eta)
        elif mode == "time_ordered":
            sign = 1
            denoms = _time_ordered_denominators(order, sigmas, eta)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        w = sign * (-1j) ** (m - 1)
        for k, (js, jd) in enumerate(edges):
            lev = internal_levels[k]
            if pos[jd] < pos[js]:      # line ends later: ascending, greater
                w = w * (-1j) * prop.fbar[lev]
            else:                      # descending, lesser
                w = w * (+1j) * prop.f[lev]
        out.append((w, tuple(denoms)))
    return out


def eval_slots(half, prop, slot_omegas, leg_levels=(), internal_levels=None,
               eta=None, mode="retarded", ext_index=0, prefactor=None,
               include_legs=True):
    """Evaluate a half-diagram at explicit per-slot frequencies.

    ``slot_omegas`` are extra energy outflows per time slot (complex
    allowed); legs at ``leg_levels`` contribute their physical +/- eps
    on top unless ``include_legs`` is false.  Internal line levels are
    summed over unless given.  Returns a :class:`RetardedValue`; its
    pole tag is the total energy outflow.
    """
    from .cutting import half_prefactor
    spec = prop.spec
    if eta is None:
        eta = spec.eta
    n_int = len(half.g_edges)
    if prefactor is None:
        prefactor = half_prefactor(half)
    legs = _leg_slots(half)
    if len(leg_levels) != len(legs):
        raise ValueError("need one level per cut leg")
    if include_legs:
        leg_sigma = [(+1 if k < half.n_pairs else -1) * spec.levels[leg_levels[k]]
                     for k in range(len(legs))]
    else:
        leg_sigma = [0.0] * len(legs)

    ranges = [internal_levels] if internal_levels is not None else \
        itertools.product(range(spec.basis_size), repeat=n_int)
    terms = []
    pole = sum(sl for sl in leg_sigma) + sum(np.asarray(slot_omegas))
    for ilev in ranges:
        ilev = tuple(ilev)
        v = _vmat_product(half, spec, leg_levels, ilev, ext_index)
        if v == 0:
            continue
        sig = _slot_sigma_values(half, spec, leg_sigma, ilev, slot_omegas)
        for w, denoms in _ordering_terms(half, prop, sig, ilev, eta, mode):
            terms.append((w * v * prefactor, denoms))
    return RetardedValue(tuple(terms), pole)


def evaluate_retarded_frequency(half, prop, leg_omegas, leg_levels,
                                eta=None, ext_index=0, mode="retarded",
                                prefactor=None):
    """Frequency-space value of a half-diagram at given cut-line
    frequencies (the B(omega_I) convention: every leg couples with
    phase exp(-i omega_k t_k), so a leg contributes -omega_k to the
    outflow of its slot).  At the physical point the arguments are
    +eps for hole legs and -eps for particle legs, see
    :func:`physical_leg_args`."""
    from .cutting import half_prefactor
    spec = prop.spec
    if eta is None:
        eta = spec.eta
    if prefactor is None:
        prefactor = half_prefactor(half)
    legs = _leg_slots(half)
    if len(leg_omegas) != len(legs) or len(leg_levels) != len(legs):
        raise ValueError("need one frequency and one level per cut leg")
    leg_sigma = [-w for w in leg_omegas]

    terms = []
    pole = -sum(leg_omegas)
    for ilev in itertools.product(range(spec.basis_size),
                                  repeat=len(half.g_edges)):
        v = _vmat_product(half, spec, leg_levels, ilev, ext_index)
        if v == 0:
            continue
        sig = _slot_sigma_values(half, spec, leg_sigma, ilev, None)
        for w, denoms in _ordering_terms(half, prop, sig, ilev, eta, mode):
            terms.append((w * v * prefactor, denoms))
    return RetardedValue(tuple(terms), pole)


# ---------------------------------------------------------------------------
# half-diagram evaluation, vectorized tensor path
# ---------------------------------------------------------------------------

def half_tensor(half, prop, eta=0.0, mode="retarded", prefactor=None):
    """Half-diagram values over all external and cut-leg level choices.

    Returns a complex array of shape (L, L, ..., L) indexed by
    (external level, exit legs..., entry legs...) with every leg at its
    collapsed physical argument and all internal lines summed.  This is
    the production path of the self-energy assembly.
    """
    from .cutting import half_prefactor
    spec = prop.spec
    big = np.complex128
    L = spec.basis_size
    if prefactor is None:
        prefactor = half_prefactor(half)
    legs = _leg_slots(half)
    n_legs = len(legs)
    n_int = len(half.g_edges)
    n_ax = 1 + n_legs + n_int
    eps = np.asarray(spec.levels)
    f = prop.f
    fbar = prop.fbar

    def axis_idx(a):
        shape = [1] * n_ax
        shape[a] = L
        return np.arange(L).reshape(shape)

    idx = [axis_idx(a) for a in range(n_ax)]

    def att_idx(att):
        kind = att[0]
        if kind == "g":
            return idx[1 + n_legs + att[1]]
        if kind == "exit":
            return idx[1 + att[1]]
        if kind == "entry":
            return idx[1 + half.n_pairs + att[1]]
        return idx[0]

    # interaction elements and singleton-slot level conservation
    vfac = np.ones((1,) * n_ax, dtype=big)
    for grp in half.slots:
        if len(grp) == 1:
            v = grp[0]
            vfac = vfac * (att_idx(half.in_attachment(v)) ==
                           att_idx(half.out_attachment(v)))
        else:
            a, b = grp
            vfac = vfac * spec.vmat[att_idx(half.out_attachment(a)),
                                    att_idx(half.out_attachment(b)),
                                    att_idx(half.in_attachment(a)),
                                    att_idx(half.in_attachment(b))]

    # slot energy outflows
    m = half.n_slots
    slot_of = half.slot_of
    sig = [np.zeros((1,) * n_ax, dtype=big) for _ in range(m)]
    for k, j in enumerate(legs):
        s = +1 if k < half.n_pairs else -1
        sig[j] = sig[j] + s * eps[idx[1 + k]]
    for k, (s, d) in enumerate(half.g_edges):
        e_arr = eps[idx[1 + n_legs + k]]
        sig[slot_of[s]] = sig[slot_of[s]] + e_arr
        sig[slot_of[d]] = sig[slot_of[d]] - e_arr

    e_slot = half.external_slot
    edges = [(slot_of[s], slot_of[d]) for s, d in half.g_edges]
    total = np.zeros((1,) * n_ax, dtype=big)
    for order in itertools.permutations(range(m)):
        pos = {lab: i for i, lab in enumerate(order)}
        if mode == "retarded":
            so = SignedOrdering(order, e_slot)
            sign = so.sign
            chains = [list(reversed(so.n_minus)), list(so.n_plus)]
        elif mode == "time_ordered":
            sign = 1
            chains = [list(reversed(order[1:]))]
        else:
            raise ValueError(f"unknown mode {mode!r}")
        w = sign * (-1j) ** (m - 1) * np.ones((1,) * n_ax, dtype=big)
        for k, (js, jd) in enumerate(edges):
            occ = fbar if pos[jd] < pos[js] else f
            pref = -1j if pos[jd] < pos[js] else +1j
            w = w * (pref * occ[idx[1 + n_legs + k]])
        for chain in chains:
            acc = np.zeros((1,) * n_ax, dtype=big)
            for c, lab in enumerate(chain, start=1):
                acc = acc + sig[lab]
                denom = acc - 1j * c * eta
                if eta == 0 and np.any(denom == 0):
                    raise ZeroDivisionError(
                        "resonant energy denominator at eta = 0; evaluate "
                        "with a positive regulator")
                w = w / denom
        total = total + w

    full = prefactor * vfac * total
    full = np.broadcast_to(full, (L,) * n_ax)
    return full.sum(axis=tuple(range(1 + n_legs, n_ax)))


# ---------------------------------------------------------------------------
# time domain
# ---------------------------------------------------------------------------

def _string_integrand(half, prop, string_pos, times, leg_levels,
                      internal_levels, ext_index):
    """Product of lines, leg phases and interaction elements for one
    contour-ordering string (positions: slot -> contour rank, 0 latest)."""
    spec = prop.spec
    slot_of = half.slot_of
    val = _vmat_product(half, spec, leg_levels, internal_levels, ext_index)
    if val == 0:
        return val
    for k, (s, d) in enumerate(half.g_edges):
        lev = internal_levels[k]
        eps = spec.levels[lev]
        phase = np.exp(-1j * eps * (times[slot_of[d]] - times[slot_of[s]]))
        if string_pos[slot_of[d]] < string_pos[slot_of[s]]:
            val = val * (-1j) * prop.fbar[lev] * phase   # greater
        else:
            val = val * (+1j) * prop.f[lev] * phase      # lesser
    legs = _leg_slots(half)
    for k, j in enumerate(legs):
        s = +1 if k < half.n_pairs else -1
        val = val * np.exp(1j * s * spec.levels[leg_levels[k]] * times[j])
    return val


def retarded_time_domain(half, prop, times, leg_levels, internal_levels,
                         eta=None, ext_index=0, prefactor=None):
    """Real-time multi-retarded value at one time tuple.

    Vanishes unless the external slot carries the strictly latest time;
    otherwise the single surviving permutation contributes its nested
    commutator, damped by exp(-eta (t_e - t_j)) for every internal slot
    (the time-domain counterpart of the frequency regularization).
    Coincident times resolve to theta(0) = 0.
    """
    from .cutting import half_prefactor
    spec = prop.spec
    if eta is None:
        eta = spec.eta
    if prefactor is None:
        prefactor = half_prefactor(half)
    m = half.n_slots
    e = half.external_slot
    te = times[e]
    others = [j for j in range(m) if j != e]
    if any(times[j] >= te for j in others):
        return 0.0 + 0.0j
    order = [e] + sorted(others, key=lambda j: -times[j])
    damp = math.exp(-eta * sum(te - times[j] for j in others))
    comm = nested_commutator(order) if m >= 2 else CommutatorExpansion(((1, (e,)),))
    total = 0.0 + 0.0j
    for sign, string in comm.strings:
        pos = {lab: i for i, lab in enumerate(string)}
        total += sign * _string_integrand(half, prop, pos, times, leg_levels,
                                          internal_levels, ext_index)
    return prefactor * damp * total


def multi_retarded_time_domain(half, prop, times, leg_levels, internal_levels,
                               eta=None, ext_index=0, prefactor=None):
    """Same value from the branch-split form: sum over contour
    orderings of (-1)^{N+} theta(descending chains) times the ordered
    integrand.  Used as an internal identity check against
    :func:`retarded_time_domain`."""
    from .cutting import half_prefactor
    spec = prop.spec
    if eta is None:
        eta = spec.eta
    if prefactor is None:
        prefactor = half_prefactor(half)
    m = half.n_slots
    e = half.external_slot
    te = times[e]
    others = [j for j in range(m) if j != e]
    damp = math.exp(-eta * sum(te - times[j] for j in others))
    total = 0.0 + 0.0j
    for so in enumerate_orderings(tuple(range(m)), e):
        chain_minus = [te] + [times[j] for j in so.n_minus]
        chain_plus = [te] + [times[j] for j in reversed(so.n_plus)]
        if any(a <= b for a, b in zip(chain_minus, chain_minus[1:])):
            continue
        if any(a <= b for a, b in zip(chain_plus, chain_plus[1:])):
            continue
        pos = {lab: i for i, lab in enumerate(so.ordering)}
        total += so.sign * _string_integrand(half, prop, pos, times,
                                             leg_levels, internal_levels,
                                             ext_index)
    return prefactor * damp * total

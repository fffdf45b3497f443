import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retcut.diagram import (
    ApproximationSeries, generate_series, tmatrix_ladder, gw_chain,
    second_born_direct, second_born_exchange, prefactor, diagrams_isomorphic,
)
from retcut.cutting import (
    HalfDiagram, parity, identity_perm, compose, invert, subgroup_closure,
    all_cut_permutations, enumerate_retarded_cuts, enumerate_time_ordered_cuts,
    half_prefactor, half_adjoint, reverse_half, glue, series_half,
    expand_series, diagram_cut_union, minimal_psd_extension, is_psd_form,
    non_psd_fixture, CutTerm, CutExpansion,
)
from helpers import merge_loop_count


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------

def test_parity_basics():
    assert parity((0, 1, 2)) == 1
    assert parity((1, 0, 2)) == -1
    assert parity((1, 2, 0)) == 1


@given(st.permutations(list(range(5))), st.permutations(list(range(5))))
@settings(max_examples=100, deadline=None)
def test_parity_multiplicative(p, q):
    p, q = tuple(p), tuple(q)
    assert parity(compose(p, q)) == parity(p) * parity(q)
    assert compose(p, invert(p)) == identity_perm(5)


def test_subgroup_closure_transposition():
    # a single hole-leg transposition generates an order-2 group
    g = subgroup_closure([(0, 2, 1)], n_particles=1)
    assert g.order == 2
    assert identity_perm(3) in g


def test_subgroup_closure_double_transposition():
    # (13)(46)-type element: order-2 subgroup {identity, sigma}
    sigma = (2, 1, 0, 5, 4, 3, 6)
    g = subgroup_closure([sigma], n_particles=3)
    assert g.order == 2


def test_subgroup_closure_s3():
    swap = (1, 0, 2)
    cycle = (1, 2, 0)
    g = subgroup_closure([swap, cycle], n_particles=0)
    assert g.order == 6


def test_subgroup_closure_rejects_type_mixing():
    with pytest.raises(ValueError):
        subgroup_closure([(1, 0)], n_particles=1)  # particle <-> hole swap


def test_all_cut_permutations_counts():
    assert len(all_cut_permutations(1)) == 2
    assert len(all_cut_permutations(2)) == 12
    for p in all_cut_permutations(2):
        assert sorted(p[:2]) == [0, 1] and sorted(p[2:]) == [2, 3, 4]


# ---------------------------------------------------------------------------
# cut enumeration
# ---------------------------------------------------------------------------

def test_retarded_cut_counts():
    for n in (2, 3, 4, 5):
        cuts = enumerate_retarded_cuts(tmatrix_ladder(n))
        assert len(cuts) == n - 1
        for t in cuts.terms:
            assert t.connected
            assert t.left.n_pairs == 1
            assert len(t.left.entries) == t.left.n_pairs + 1


def test_time_ordered_cut_counts_and_islands():
    for n in (2, 3, 4, 5):
        cuts = enumerate_time_ordered_cuts(tmatrix_ladder(n))
        assert len(cuts) == 2 ** (n - 2)
    t4 = enumerate_time_ordered_cuts(tmatrix_ladder(4))
    islands = [t for t in t4.terms if not t.connected]
    assert len(islands) == 1
    # the stranded rung is disconnected within its half
    bad = islands[0]
    assert not (bad.left._connected() and bad.right._connected())


def test_second_born_cut_permutations():
    cd = enumerate_retarded_cuts(second_born_direct()).terms[0]
    cx = enumerate_retarded_cuts(second_born_exchange()).terms[0]
    assert cd.perm == (0, 1, 2) and cd.sign == 1
    assert cx.perm == (0, 2, 1) and cx.sign == -1
    # same topologies on every side: the exchange is a pure leg swap
    assert cd.left == cx.left == cd.right == cx.right


def test_gw_cuts_are_diagonal():
    for order in (2, 3, 4):
        for t in enumerate_retarded_cuts(gw_chain(order)).terms:
            assert t.perm == (0, 1, 2) and t.sign == 1


# ---------------------------------------------------------------------------
# prefactors, adjoints, gluing
# ---------------------------------------------------------------------------

def test_half_prefactor_canonical_merge():
    h = enumerate_retarded_cuts(second_born_direct()).terms[0].left
    assert half_prefactor(h) == pytest.approx(1j)
    # transposing the entry list flips the sign through ltilde
    swapped = HalfDiagram(h.n_vertices, h.g_edges, h.slots, h.external,
                          h.exits, tuple(reversed(h.entries)))
    assert half_prefactor(swapped) == pytest.approx(-1j)


def test_half_prefactor_matches_merge_count_oracle():
    for d in generate_series(ApproximationSeries("tmatrix_pp", 4)):
        for t in enumerate_retarded_cuts(d).terms:
            h = t.left
            virtual = [(h.external, h.entries[0])]
            for k in range(h.n_pairs):
                virtual.append((h.exits[k], h.entries[k + 1]))
            total = merge_loop_count(h.n_vertices, h.g_edges, virtual)
            internal = merge_loop_count(h.n_vertices, h.g_edges, [])
            ltilde = total - internal
            want = (1j) ** h.n_v * (-1.0) ** (h.n_pairs + 1 + internal + ltilde)
            assert half_prefactor(h) == pytest.approx(want)


def test_half_adjoint_involution():
    h = series_half("tmatrix_pp", 2)
    rev, s1, m1 = half_adjoint(h)
    back, s2, m2 = half_adjoint(rev)
    assert back == h
    assert s1 * s2 == pytest.approx(1.0)
    assert s1 == pytest.approx(-1.0)  # N = 1
    # leg maps compose to the identity
    n_legs = len(m1)
    assert tuple(m2[m1[i]] for i in range(n_legs)) == tuple(range(n_legs))


def test_reverse_flips_form():
    h = series_half("gw", 2)
    rev, _ = reverse_half(h)
    assert not h.external_in and rev.external_in
    assert len(rev.exits) == len(h.entries)
    assert len(rev.entries) == len(h.exits)


def test_glue_round_trip_structural():
    for fam, maker in (("tmatrix_pp", tmatrix_ladder), ("gw", gw_chain)):
        for order in (2, 3, 4):
            d = maker(order)
            for t in enumerate_retarded_cuts(d).terms:
                glued = glue(t.left, t.right, t.perm)
                assert diagrams_isomorphic(glued, d)
    x = second_born_exchange()
    t = enumerate_retarded_cuts(x).terms[0]
    assert diagrams_isomorphic(glue(t.left, t.right, t.perm), x)


def test_glue_prefactor_theorem():
    """Prefactors of the halves, the gluing factor and the pairing sign
    reproduce the closed diagram's Feynman prefactor at every order."""
    diagrams = generate_series(ApproximationSeries("tmatrix_pp", 4)) \
        + generate_series(ApproximationSeries("gw", 4))
    for d in diagrams:
        for t in enumerate_retarded_cuts(d).terms:
            lhs = (half_prefactor(t.left) * half_prefactor(t.right)
                   * (-1j) * (-1.0) ** t.n_pairs * t.sign)
            assert lhs == pytest.approx(-1j * prefactor(d))


def test_glue_validates_legs():
    t = enumerate_retarded_cuts(second_born_direct()).terms[0]
    with pytest.raises(ValueError):
        glue(t.left, t.right, (1, 0, 2))  # maps a particle to a hole slot


# ---------------------------------------------------------------------------
# series expansions and PSD structure
# ---------------------------------------------------------------------------

def test_bracket_equals_extended_union():
    for fam in ("tmatrix_pp", "gw"):
        ser = ApproximationSeries(fam, 4)
        bracket = expand_series(ser)
        union = diagram_cut_union(ser)
        ext = minimal_psd_extension(union)
        assert sorted(t.key() for t in bracket.terms) == \
            sorted(t.key() for t in ext.terms)


def test_union_matches_per_diagram_cuts():
    ser = ApproximationSeries("tmatrix_pp", 4)
    union_keys = sorted(t.key() for t in diagram_cut_union(ser).terms)
    per = []
    for d in generate_series(ser):
        per.extend(t.key() for t in enumerate_retarded_cuts(d).terms)
    assert union_keys == sorted(per)
    # and the union is the k+j <= order slice of the bracket
    sliced = expand_series(ser, psd_complete=False)
    assert union_keys == sorted(t.key() for t in sliced.terms)


def test_is_psd_form_verdicts():
    assert is_psd_form(expand_series(ApproximationSeries("tmatrix_pp", 4)))
    assert is_psd_form(expand_series(ApproximationSeries("gw", 4)))
    assert is_psd_form(expand_series(ApproximationSeries("second_born", 2)))
    assert is_psd_form(diagram_cut_union(ApproximationSeries("second_born", 2)))
    # strict unions of higher orders are not Hermitian squares
    assert not is_psd_form(diagram_cut_union(ApproximationSeries("gw", 4)))
    assert not is_psd_form(diagram_cut_union(ApproximationSeries("tmatrix_pp", 3)))


def test_single_cross_term_not_psd_and_completion():
    l1 = series_half("gw", 1)
    l2 = series_half("gw", 2)
    ident = identity_perm(3)
    single = CutExpansion((CutTerm(l1, l2, ident, +1),))
    assert not is_psd_form(single)
    ext = minimal_psd_extension(single)
    keys = {t.key() for t in ext.terms}
    assert (l1.topology_id, l1.topology_id, ident) in keys
    assert (l2.topology_id, l2.topology_id, ident) in keys
    assert (l2.topology_id, l1.topology_id, ident) in keys
    assert is_psd_form(ext)


def test_minimal_extension_idempotent_and_noop_on_brackets():
    for fam in ("tmatrix_pp", "gw", "second_born"):
        bracket = expand_series(ApproximationSeries(fam, 3 if fam != "second_born" else 2))
        once = minimal_psd_extension(bracket)
        assert sorted(t.key() for t in once.terms) == \
            sorted(t.key() for t in bracket.terms)
        twice = minimal_psd_extension(once)
        assert sorted(t.key() for t in twice.terms) == \
            sorted(t.key() for t in once.terms)


def test_minimal_extension_rejects_non_parity_signs():
    t = enumerate_retarded_cuts(second_born_direct()).terms[0]
    bad = CutExpansion((CutTerm(t.left, t.right, t.perm, -t.sign),))
    with pytest.raises(ValueError):
        minimal_psd_extension(bad)


def test_non_psd_fixture_structure():
    fx = non_psd_fixture()
    assert len(fx) == 2
    assert not is_psd_form(fx)


def test_island_extension_creates_vacuum_diagram():
    """Completing a time-ordered island term introduces a self-energy
    diagram with a disconnected vacuum piece; the retarded expansion
    never produces such terms."""
    t4 = enumerate_time_ordered_cuts(tmatrix_ladder(4))
    island = next(t for t in t4.terms if not t.connected)
    assert island.n_pairs == 3  # the bothersome three-pair sector
    ext = minimal_psd_extension(CutExpansion((island,)))
    keys = {t.key() for t in ext.terms}
    diag_key = (island.left.topology_id, island.left.topology_id,
                identity_perm(7))
    assert diag_key in keys
    diag_term = next(t for t in ext.terms if t.key() == diag_key)
    glued = glue(diag_term.left, diag_term.right, diag_term.perm,
                 allow_disconnected=True)
    # the glued diagram contains a component free of both externals
    adj = {v: set() for v in range(glued.n_vertices)}
    for s, d in glued.g_edges:
        adj[s].add(d)
        adj[d].add(s)
    for a, b in glued.v_edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = set(glued.external)
    stack = list(glued.external)
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    assert len(seen) < glued.n_vertices
    # retarded cuts never strand a piece
    for n in (2, 3, 4, 5):
        for term in enumerate_retarded_cuts(tmatrix_ladder(n)).terms:
            assert term.connected


def test_stored_right_halves_match_series_halves():
    # mirror symmetry: the reversed right piece of the cut at position k
    # of an order-n ladder is the left half with n-k interaction lines
    for n in (2, 3, 4):
        d = tmatrix_ladder(n)
        for t in enumerate_retarded_cuts(d).terms:
            k = t.left.n_v
            assert t.right == series_half("tmatrix_pp", n - k)


def test_sector_bookkeeping():
    exp = diagram_cut_union(ApproximationSeries("tmatrix_pp", 3))
    assert exp.sectors == (1,)
    assert exp.n_pairs == 1
    mixed = CutExpansion(tuple(exp.terms) + tuple(
        enumerate_time_ordered_cuts(tmatrix_ladder(4)).terms))
    assert 3 in mixed.sectors
    assert mixed.n_pairs is None

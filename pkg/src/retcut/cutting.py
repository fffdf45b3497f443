"""Cutting self-energy diagrams into retarded half-diagrams.

Cutting a diagram means distributing its time slots over the two loops
of the deformed contour; the g-lines crossing the partition become cut
legs.  Assignments that strand a piece away from its external vertex
are dropped (they integrate to zero on a closed loop).  The surviving
terms form an expansion

    -i Sigma^< = sum over terms  sign * B_left(legs) (x) conj(B_right(legs'))

whose positivity is controlled by the permutation structure of the cut
labels.  This module owns the half-diagram graphs, the permutation
machinery (subgroup closure, parity), the minimal PSD completion, the
gluing operation and the topological prefactors; numerical evaluation
of half-diagrams lives in :mod:`retcut.retarded`.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field, replace

from .diagram import (
    Diagram, ApproximationSeries, canonical_order, count_loops, prefactor,
    generate_series, tmatrix_ladder, gw_chain,
)

__all__ = [
    "HalfDiagram",
    "CutTerm",
    "CutExpansion",
    "PermGroup",
    "parity",
    "identity_perm",
    "compose",
    "invert",
    "subgroup_closure",
    "all_cut_permutations",
    "enumerate_retarded_cuts",
    "enumerate_time_ordered_cuts",
    "half_prefactor",
    "half_adjoint",
    "reverse_half",
    "glue",
    "series_half",
    "expand_series",
    "diagram_cut_union",
    "minimal_psd_extension",
    "is_psd_form",
    "non_psd_fixture",
]


# ---------------------------------------------------------------------------
# permutations on cut labels
# ---------------------------------------------------------------------------
# A cut permutation acts on the combined label list: particle (exit) legs
# first, hole (entry) legs after them.  Type preservation means the
# particle block maps to itself.

def identity_perm(n):
    return tuple(range(n))


def compose(p, q):
    """(p o q)(i) = p[q[i]]."""
    return tuple(p[q[i]] for i in range(len(p)))


def invert(p):
    out = [0] * len(p)
    for i, j in enumerate(p):
        out[j] = i
    return tuple(out)


def parity(p):
    """Sign (-1)^{|p|} of a permutation given in image form."""
    seen = [False] * len(p)
    sign = 1
    for i in range(len(p)):
        if seen[i]:
            continue
        length = 0
        j = i
        while not seen[j]:
            seen[j] = True
            j = p[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _check_type_preserving(p, n_particles):
    for i, j in enumerate(p):
        if (i < n_particles) != (j < n_particles):
            raise ValueError(
                f"permutation {p} mixes particle and hole legs "
                f"(first {n_particles} labels are particle legs)")


@dataclass(frozen=True)
class PermGroup:
    """Finite permutation group on cut labels."""

    elements: tuple
    generators: tuple
    n_particles: int

    @property
    def order(self):
        return len(self.elements)

    def __contains__(self, p):
        return tuple(p) in set(self.elements)


def subgroup_closure(generators, n_particles):
    """Smallest permutation group containing ``generators``.

    All generators must act on the same label list and preserve the
    particle/hole split (``n_particles`` leading labels are particle
    legs); anything else raises.
    """
    gens = [tuple(g) for g in generators]
    if not gens:
        raise ValueError("need at least one generator (identity works)")
    n = len(gens[0])
    for g in gens:
        if len(g) != n or sorted(g) != list(range(n)):
            raise ValueError(f"{g} is not a permutation of 0..{n - 1}")
        _check_type_preserving(g, n_particles)
    elems = {identity_perm(n)}
    frontier = list(elems)
    gens_all = gens + [invert(g) for g in gens]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens_all:
                q = compose(g, p)
                if q not in elems:
                    elems.add(q)
                    nxt.append(q)
        frontier = nxt
    return PermGroup(tuple(sorted(elems)), tuple(sorted(set(gens))), n_particles)


def all_cut_permutations(n_pairs):
    """Every type-preserving label permutation for N particle-hole pairs.

    There are N!(N+1)! of them: particles and holes permute separately.
    """
    n, m = n_pairs, n_pairs + 1
    out = []
    for pj in itertools.permutations(range(n)):
        for pk in itertools.permutations(range(m)):
            out.append(tuple(pj) + tuple(n + i for i in pk))
    return out


# ---------------------------------------------------------------------------
# half-diagrams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HalfDiagram:
    """One piece of a cut self-energy diagram, stored in ket form.

    ``slots`` groups the vertices into time slots (pairs joined by an
    interaction line; singleton slots appear only in test fixtures and
    carry no interaction element).  ``exits`` are vertices where a cut
    particle line leaves the piece, ``entries`` vertices where a cut
    hole line arrives; together with the amputated external line at
    ``external`` every vertex has exactly one incoming and one outgoing
    attachment.  Instances are canonically relabeled on construction so
    that topologically equal halves compare equal and carry the same
    ``topology_id``.
    """

    n_vertices: int
    g_edges: tuple
    slots: tuple
    external: int
    exits: tuple
    entries: tuple
    label: str = field(default="", compare=False)
    allow_disconnected: bool = field(default=False, compare=False)
    # bra-form halves (produced by reversal) have the amputated external
    # line incoming instead of outgoing
    external_in: bool = False

    def __post_init__(self):
        object.__setattr__(self, "g_edges", tuple(map(tuple, self.g_edges)))
        object.__setattr__(self, "slots", tuple(tuple(sorted(s)) for s in self.slots))
        object.__setattr__(self, "exits", tuple(self.exits))
        object.__setattr__(self, "entries", tuple(self.entries))
        self._validate()

    def _validate(self):
        n = self.n_vertices
        outs = [0] * n
        ins = [0] * n
        for s, d in self.g_edges:
            if s == d:
                raise ValueError("tadpole g-edge in half-diagram")
            outs[s] += 1
            ins[d] += 1
        for v in self.exits:
            outs[v] += 1
        for v in self.entries:
            ins[v] += 1
        if self.external_in:
            ins[self.external] += 1   # amputated external line (bra form)
        else:
            outs[self.external] += 1  # amputated external line (ket form)
        if any(c != 1 for c in outs) or any(c != 1 for c in ins):
            bad = [v for v in range(n) if outs[v] != 1 or ins[v] != 1]
            raise ValueError(f"attachment mismatch at vertices {bad}")
        seen = [0] * n
        for s in self.slots:
            if len(s) not in (1, 2):
                raise ValueError("slots hold one or two vertices")
            for v in s:
                seen[v] += 1
        if any(c != 1 for c in seen):
            raise ValueError("every vertex must belong to exactly one slot")
        if not self.allow_disconnected and not self._connected():
            raise ValueError("half-diagram is disconnected from its external vertex")

    def _connected(self):
        adj = {v: set() for v in range(self.n_vertices)}
        for s, d in self.g_edges:
            adj[s].add(d)
            adj[d].add(s)
        for grp in self.slots:
            if len(grp) == 2:
                a, b = grp
                adj[a].add(b)
                adj[b].add(a)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n_vertices

    @property
    def n_pairs(self):
        return len(self.exits)

    @property
    def n_slots(self):
        return len(self.slots)

    @property
    def n_v(self):
        return sum(1 for s in self.slots if len(s) == 2)

    @property
    def external_slot(self):
        for k, s in enumerate(self.slots):
            if self.external in s:
                return k
        raise RuntimeError("external vertex not in any slot")

    @property
    def slot_of(self):
        m = {}
        for k, grp in enumerate(self.slots):
            for v in grp:
                m[v] = k
        return m

    @property
    def topology_id(self):
        cert = (self.n_vertices, self.g_edges, self.slots, self.external,
                self.exits, self.entries)
        return hashlib.sha1(repr(cert).encode()).hexdigest()[:16]

    def in_attachment(self, v):
        """("g", edge_index), ("entry", leg_index) or ("ext",) feeding v."""
        for k, (s, d) in enumerate(self.g_edges):
            if d == v:
                return ("g", k)
        for k, u in enumerate(self.entries):
            if u == v:
                return ("entry", k)
        if self.external_in and v == self.external:
            return ("ext",)
        raise RuntimeError(f"no incoming attachment at vertex {v}")

    def out_attachment(self, v):
        """("g", e), ("exit", k) or ("ext",) leaving vertex v."""
        for k, (s, d) in enumerate(self.g_edges):
            if s == v:
                return ("g", k)
        for k, u in enumerate(self.exits):
            if u == v:
                return ("exit", k)
        if not self.external_in and v == self.external:
            return ("ext",)
        raise RuntimeError(f"no outgoing attachment at vertex {v}")


def canonical_half(n_vertices, g_edges, slots, external, exits, entries,
                   label="", allow_disconnected=False, external_in=False):
    """Canonicalize and build a half-diagram.

    Returns (half, old_to_new vertex map).  The canonical form pins the
    external vertex, colors leg attachments, and breaks remaining ties
    by minimizing the edge certificate, so equal topologies become
    structurally identical objects with identically ordered leg lists.
    """
    exits = list(exits)
    entries = list(entries)
    exit_at = set(exits)
    entry_at = set(entries)
    cols = []
    for v in range(n_vertices):
        cols.append((0 if v == external else 1,
                     1 if v in exit_at else 0,
                     1 if v in entry_at else 0))
    ranks = {c: i for i, c in enumerate(sorted(set(cols)))}
    init = [ranks[c] for c in cols]
    v_pairs = [s for s in slots if len(s) == 2]
    perm, _ = canonical_order(n_vertices, g_edges, v_pairs, init)
    new_edges = tuple(sorted((perm[s], perm[d]) for s, d in g_edges))
    new_slots = tuple(sorted(tuple(sorted(perm[v] for v in s)) for s in slots))
    half = HalfDiagram(
        n_vertices=n_vertices,
        g_edges=new_edges,
        slots=new_slots,
        external=perm[external],
        exits=tuple(sorted(perm[v] for v in exits)),
        entries=tuple(sorted(perm[v] for v in entries)),
        label=label,
        allow_disconnected=allow_disconnected,
        external_in=external_in,
    )
    return half, perm


def half_prefactor(h):
    """Topological prefactor i^{n_v} (-1)^{N+1+l+ltilde} of a ket half.

    ``ltilde`` counts the extra loops created when each entry vertex is
    merged with the exit vertex at the same argument-list position,
    where the argument list pairs (external, exits) against entries:
    entry 0 with the external vertex, entry k with exit k-1.
    """
    if len(h.entries) != len(h.exits) + 1:
        raise ValueError("prefactor rule applies to ket halves "
                         "(one more entry than exit)")
    n_pairs = h.n_pairs
    loops_internal = _cycles(h.n_vertices, h.g_edges)
    virtual = [(h.external, h.entries[0])]
    for k in range(n_pairs):
        virtual.append((h.exits[k], h.entries[k + 1]))
    total = _cycles(h.n_vertices, list(h.g_edges) + virtual)
    ltilde = total - loops_internal
    return (1j) ** h.n_v * (-1.0) ** (n_pairs + 1 + loops_internal + ltilde)


def _cycles(n, edges):
    succ = {}
    for s, d in edges:
        if s in succ:
            raise ValueError("successor map not well defined")
        succ[s] = d
    loops = 0
    unvisited = set(succ)
    while unvisited:
        start = min(unvisited)
        v = start
        while v in succ and v in unvisited:
            unvisited.discard(v)
            v = succ[v]
        if v == start:
            loops += 1
    return loops


def reverse_half(h):
    """Reverse every internal g-line and swap exits with entries.

    Returns (reversed half, old-to-new vertex map).  Reversal maps ket
    form to bra form (the amputated external line changes direction);
    applying it twice gives back a structurally identical half.
    """
    return canonical_half(
        h.n_vertices,
        [(d, s) for s, d in h.g_edges],
        h.slots,
        h.external,
        list(h.entries),
        list(h.exits),
        label=h.label + "~",
        allow_disconnected=h.allow_disconnected,
        external_in=not h.external_in,
    )


def half_adjoint(h):
    """Adjoint of a half-diagram: (reversed half, scalar (-1)^N, leg map).

    ``leg_map[i]`` is the position in the reversed half's combined leg
    list (exits first) of the leg that was at position ``i`` of the
    original: exits turn into entries and vice versa, and
    canonicalization may reorder them.  Applying the adjoint twice
    returns a structurally identical half with total scalar +1.
    """
    rev, perm = reverse_half(h)
    leg_map = {}
    rev_entry_pos = {v: k for k, v in enumerate(rev.entries)}
    rev_exit_pos = {v: k for k, v in enumerate(rev.exits)}
    for k, v in enumerate(h.exits):
        leg_map[k] = len(rev.exits) + rev_entry_pos[perm[v]]
    for k, v in enumerate(h.entries):
        leg_map[h.n_pairs + k] = rev_exit_pos[perm[v]]
    n_legs = len(h.exits) + len(h.entries)
    leg_map = tuple(leg_map[i] for i in range(n_legs))
    # the sector pair count is the same for ket and bra forms
    n_sector = min(len(h.exits), len(h.entries))
    return rev, (-1.0) ** n_sector, leg_map


# ---------------------------------------------------------------------------
# cut expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutTerm:
    """One product term of a cut expansion.

    ``perm`` maps left leg labels to right leg labels in the combined
    order (exits first, then entries); ``sign`` is its parity.  The
    right half is stored in ket form (the physical right piece with all
    g-lines reversed) and enters the self-energy conjugated.
    """

    left: HalfDiagram
    right: HalfDiagram
    perm: tuple
    sign: int
    connected: bool = True

    @property
    def n_pairs(self):
        return self.left.n_pairs

    def key(self):
        return (self.left.topology_id, self.right.topology_id, self.perm)


@dataclass(frozen=True)
class CutExpansion:
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def sectors(self):
        return tuple(sorted({t.n_pairs for t in self.terms}))

    @property
    def n_pairs(self):
        secs = self.sectors
        return secs[0] if len(secs) == 1 else None

    def by_sector(self):
        out = {}
        for t in self.terms:
            out.setdefault(t.n_pairs, []).append(t)
        return out

    def __len__(self):
        return len(self.terms)


def _cut_pieces(d, left_slots):
    """Split a diagram along a slot partition; returns the raw pieces.

    ``left_slots`` is the set of slot indices assigned to the loop that
    carries alpha.  Returns None if a slot set is empty, otherwise a
    dict with vertex sets, internal edges and the crossing edges.
    """
    slot_of = d.slot_of
    left_v = sorted(v for v in range(d.n_vertices) if slot_of[v] in left_slots)
    right_v = sorted(v for v in range(d.n_vertices) if slot_of[v] not in left_slots)
    if not left_v or not right_v:
        return None
    lset, rset = set(left_v), set(right_v)
    internal_l, internal_r, cross_lr, cross_rl = [], [], [], []
    for s, dd in d.g_edges:
        if s in lset and dd in lset:
            internal_l.append((s, dd))
        elif s in rset and dd in rset:
            internal_r.append((s, dd))
        elif s in lset:
            cross_lr.append((s, dd))   # particle line, left -> right
        else:
            cross_rl.append((s, dd))   # hole line, right -> left
    return {
        "left_v": left_v, "right_v": right_v,
        "internal_l": internal_l, "internal_r": internal_r,
        "cross_lr": cross_lr, "cross_rl": cross_rl,
    }


def _piece_connected(vertices, edges, slots):
    vs = set(vertices)
    adj = {v: set() for v in vs}
    for s, d in edges:
        adj[s].add(d)
        adj[d].add(s)
    for grp in slots:
        grp = [v for v in grp if v in vs]
        if len(grp) == 2:
            a, b = grp
            adj[a].add(b)
            adj[b].add(a)
    start = vertices[0]
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(vs)


def _build_term(d, pieces, allow_disconnected=False):
    """Assemble a CutTerm from raw pieces of a slot partition."""
    alpha, beta = d.external
    left_v = pieces["left_v"]
    right_v = pieces["right_v"]
    lidx = {v: i for i, v in enumerate(left_v)}
    ridx = {v: i for i, v in enumerate(right_v)}

    left_slots = []
    right_slots = []
    for grp in d.v_edges:
        if grp[0] in lidx:
            left_slots.append(tuple(lidx[v] for v in grp))
        else:
            right_slots.append(tuple(ridx[v] for v in grp))

    conn_l = _piece_connected(left_v, pieces["internal_l"], d.v_edges)
    conn_r = _piece_connected(right_v, pieces["internal_r"], d.v_edges)
    if (not conn_l or not conn_r) and not allow_disconnected:
        return None

    # left half, ket form as-is
    lh, lmap = canonical_half(
        len(left_v),
        [(lidx[s], lidx[t]) for s, t in pieces["internal_l"]],
        left_slots,
        lidx[alpha],
        [lidx[s] for s, _ in pieces["cross_lr"]],
        [lidx[t] for _, t in pieces["cross_rl"]],
        label=d.label + ":L",
        allow_disconnected=allow_disconnected,
    )
    # right half: reverse the physical piece into ket form
    rh, rmap = canonical_half(
        len(right_v),
        [(ridx[t], ridx[s]) for s, t in pieces["internal_r"]],
        right_slots,
        ridx[beta],
        [ridx[t] for _, t in pieces["cross_lr"]],   # arrivals become exits
        [ridx[s] for s, _ in pieces["cross_rl"]],   # departures become entries
        label=d.label + ":R",
        allow_disconnected=allow_disconnected,
    )

    # pairing permutation in the canonical leg orders
    n = len(pieces["cross_lr"])
    lex = {v: k for k, v in enumerate(lh.exits)}
    len_ = {v: k for k, v in enumerate(lh.entries)}
    rex = {v: k for k, v in enumerate(rh.exits)}
    ren = {v: k for k, v in enumerate(rh.entries)}
    perm = [None] * (n + len(pieces["cross_rl"]))
    for s, t in pieces["cross_lr"]:
        perm[lex[lmap[lidx[s]]]] = rex[rmap[ridx[t]]]
    for s, t in pieces["cross_rl"]:
        perm[n + len_[lmap[lidx[t]]]] = n + ren[rmap[ridx[s]]]
    perm = tuple(perm)
    return CutTerm(left=lh, right=rh, perm=perm, sign=parity(perm),
                   connected=conn_l and conn_r)


def enumerate_retarded_cuts(d):
    """All retarded-cut terms of one diagram.

    Each internal time slot goes to one of the two contour loops; the
    slot of alpha stays with the first loop, beta's with the second.
    Assignments leaving either piece disconnected from its external
    vertex are discarded (they vanish as closed-loop integrals), so
    every surviving term has two connected halves.
    """
    alpha, beta = d.external
    slot_of = d.slot_of
    sa, sb = slot_of[alpha], slot_of[beta]
    if sa == sb:
        raise ValueError("external vertices share a time slot; nothing to cut")
    inner = [k for k in range(len(d.v_edges)) if k not in (sa, sb)]
    terms = []
    for bits in itertools.product((0, 1), repeat=len(inner)):
        left_slots = {sa} | {k for k, b in zip(inner, bits) if b == 0}
        pieces = _cut_pieces(d, left_slots)
        if pieces is None:
            continue
        term = _build_term(d, pieces, allow_disconnected=False)
        if term is not None:
            terms.append(term)
    return CutExpansion(tuple(terms))


def enumerate_time_ordered_cuts(d):
    """Time-ordered (branch) expansion fixture: nothing is discarded.

    Every assignment of the internal slots to the forward/backward
    branch is kept, including those whose pieces contain islands
    disconnected from the external vertices; the returned terms carry
    ``connected=False`` in that case.  There are 2^(#internal slots)
    terms.
    """
    alpha, beta = d.external
    slot_of = d.slot_of
    sa, sb = slot_of[alpha], slot_of[beta]
    inner = [k for k in range(len(d.v_edges)) if k not in (sa, sb)]
    terms = []
    for bits in itertools.product((0, 1), repeat=len(inner)):
        left_slots = {sa} | {k for k, b in zip(inner, bits) if b == 0}
        pieces = _cut_pieces(d, left_slots)
        term = _build_term(d, pieces, allow_disconnected=True)
        terms.append(term)
    return CutExpansion(tuple(terms))


def glue(left, right, perm, allow_disconnected=False):
    """Join two ket halves back into a closed self-energy diagram.

    ``perm`` maps left leg labels to right leg labels; the right half
    is un-reversed in the process.  Exit k of the left half connects to
    exit perm[k] of the right half (a particle line flowing left to
    right), entry m to entry perm[N+m]-N (a hole line flowing right to
    left).
    """
    n = left.n_pairs
    if right.n_pairs != n or len(perm) != 2 * n + 1:
        raise ValueError("leg counts incompatible")
    if sorted(perm[:n]) != list(range(n)) or \
            sorted(perm[n:]) != list(range(n, 2 * n + 1)):
        raise ValueError("permutation does not preserve leg types")
    off = left.n_vertices
    g_edges = list(left.g_edges)
    g_edges += [(d + off, s + off) for s, d in right.g_edges]  # un-reverse
    for k in range(n):
        g_edges.append((left.exits[k], right.exits[perm[k]] + off))
    for m in range(n + 1):
        g_edges.append((right.entries[perm[n + m] - n] + off, left.entries[m]))
    v_edges = [s for s in left.slots if len(s) == 2]
    v_edges += [tuple(v + off for v in s) for s in right.slots if len(s) == 2]
    if any(len(s) == 1 for s in left.slots + right.slots):
        raise ValueError("cannot glue fixture halves with singleton slots")
    return Diagram(
        n_vertices=left.n_vertices + right.n_vertices,
        g_edges=tuple(g_edges),
        v_edges=tuple(v_edges),
        external=(left.external, right.external + off),
        label=f"glued[{left.label}|{right.label}]",
        strict=not allow_disconnected,
    )


# ---------------------------------------------------------------------------
# series expansions (Hermitian-square bracket form)
# ---------------------------------------------------------------------------

def series_half(family, size):
    """The ket half with ``size`` interaction lines of a series family.

    Obtained by cutting the order-(size+1) diagram directly below its
    top rung/bubble; by the mirror symmetry of the ladder and chain
    topologies the stored right halves of every cut coincide with these
    same objects, which is what makes the bracket products well formed.
    """
    if family in ("second_born", "tmatrix_pp"):
        d = tmatrix_ladder(size + 1, exchange=False)
    elif family == "gw":
        d = gw_chain(size + 1)
    else:
        raise ValueError(f"unsupported family {family!r}")
    cuts = enumerate_retarded_cuts(d)
    for t in cuts.terms:
        if t.left.n_v == size:
            return t.left
    raise RuntimeError("no cut with the requested left size")


_ENTRY_SWAP = (0, 2, 1)  # transpose the two hole legs of an N=1 term


def expand_series(series, psd_complete=True):
    """Cut expansion of an approximation series.

    With ``psd_complete`` (default) this is the Hermitian-square
    bracket form: every product of a left and a right half with at most
    max_order-1 interaction lines each, which is closed under the
    permutation subgroup and manifestly PSD.  Without it only products
    gluing to diagrams of order <= max_order are kept (the strict union
    of the per-diagram cut expansions; not PSD in general).
    """
    fam, m = series.family, series.max_order
    kmax = 1 if fam == "second_born" else m - 1
    halves = {k: series_half(fam, k) for k in range(1, kmax + 1)}
    ident = identity_perm(3)
    terms = []
    for k in range(1, kmax + 1):
        for j in range(1, kmax + 1):
            if not psd_complete and k + j > m:
                continue
            left, right = halves[k], halves[j]
            terms.append(CutTerm(left, right, ident, +1))
            if fam in ("second_born", "tmatrix_pp"):
                terms.append(CutTerm(left, right, _ENTRY_SWAP, -1))
    return CutExpansion(tuple(terms))


def diagram_cut_union(series):
    """Union of the retarded cut expansions of every generated diagram."""
    terms = []
    for d in generate_series(series):
        terms.extend(enumerate_retarded_cuts(d).terms)
    return CutExpansion(tuple(terms))


def non_psd_fixture(spec_size_family="gw"):
    """Deliberately indefinite expansion: one Hermitian cross pair.

    The (L1, R2) + (L2, R1) pair without the diagonal (L1, R1), (L2, R2)
    completions has coefficient matrix [[0, 1], [1, 0]] and produces
    indefinite rate-function weights.
    """
    l1 = series_half(spec_size_family, 1)
    l2 = series_half(spec_size_family, 2)
    ident = identity_perm(3)
    return CutExpansion((CutTerm(l1, l2, ident, +1),
                         CutTerm(l2, l1, ident, +1)))


# ---------------------------------------------------------------------------
# minimal PSD extension and the PSD-form test
# ---------------------------------------------------------------------------

def _sector_data(terms):
    """Collect topologies, representatives and permutations of one sector."""
    reps = {}
    perms = set()
    for t in terms:
        reps.setdefault(t.left.topology_id, t.left)
        reps.setdefault(t.right.topology_id, t.right)
        perms.add(t.perm)
        if t.sign != parity(t.perm):
            raise ValueError(
                "term sign differs from permutation parity; the expansion "
                "admits no Hermitian-square completion")
    return reps, perms


def minimal_psd_extension(expansion):
    """Complete a cut expansion to a Hermitian square, sector by sector.

    Within each N sector the permutations present are closed into the
    smallest subgroup containing them and every ordered topology pair
    is filled in with every group element (signs by parity).  The
    result is the all-pairs (x) group-sign Gram structure, a rank-one
    PSD coefficient matrix; the operation is idempotent and a superset
    of the input.
    """
    out = []
    for n_pairs, terms in sorted(expansion.by_sector().items()):
        reps, perms = _sector_data(terms)
        group = subgroup_closure(perms, n_pairs)
        keys = {t.key() for t in terms}
        new_terms = list(terms)
        for ida in sorted(reps):
            for idb in sorted(reps):
                for p in group.elements:
                    if (ida, idb, p) not in keys:
                        new_terms.append(CutTerm(reps[ida], reps[idb],
                                                 p, parity(p)))
                        keys.add((ida, idb, p))
        out.extend(new_terms)
    return CutExpansion(tuple(out))


def is_psd_form(expansion, tol=1e-12):
    """True iff each sector's coefficient matrix over (topology, label
    permutation) pairs is positive semi-definite.

    Terms are symmetrized over the subgroup generated by the
    permutations present: term (a, b, P, s) contributes s/|G| at every
    matrix entry ((a, Q), (b, P o Q)); the Hermitized matrix must have
    min eigenvalue >= -tol * max(1, norm).
    """
    import numpy as np

    for n_pairs, terms in expansion.by_sector().items():
        reps, perms = _sector_data(terms)
        group = subgroup_closure(perms, n_pairs)
        tops = sorted(reps)
        basis = [(a, q) for a in tops for q in group.elements]
        index = {bq: i for i, bq in enumerate(basis)}
        m = np.zeros((len(basis), len(basis)), dtype=float)
        for t in terms:
            ia = t.left.topology_id
            ib = t.right.topology_id
            for q in group.elements:
                m[index[(ia, q)], index[(ib, compose(t.perm, q))]] += \
                    t.sign / group.order
        m = 0.5 * (m + m.T)
        evals = np.linalg.eigvalsh(m)
        if evals.min() < -tol * max(1.0, np.abs(evals).max()):
            return False
    return True

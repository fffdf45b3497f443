"""Self-energy diagrams as directed multigraphs.

A diagram holds directed g-edges, undirected instantaneous interaction
(v-) edges pairing vertices into time slots, and the two external
vertices: ``alpha`` (the exit, one incoming internal g-edge, outgoing
line amputated) and ``beta`` (the entry, one outgoing internal g-edge).
Generators build the second Born pair, the particle-particle ladder
series and the bubble-chain series in a fixed canonical numbering so
all outputs are deterministic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

__all__ = [
    "Diagram",
    "ApproximationSeries",
    "count_loops",
    "prefactor",
    "is_one_particle_irreducible",
    "generate_series",
    "second_born_direct",
    "second_born_exchange",
    "tmatrix_ladder",
    "gw_chain",
    "to_dot",
    "diagrams_isomorphic",
]

FAMILIES = ("second_born", "gw", "tmatrix_pp")


@dataclass(frozen=True)
class Diagram:
    """Closed self-energy diagram (all legs amputated at alpha/beta)."""

    n_vertices: int
    g_edges: tuple          # (src, dst) pairs, edge carries g(dst, src)
    v_edges: tuple          # sorted (a, b) pairs, one per time slot
    external: tuple         # (alpha, beta)
    label: str = field(default="", compare=False)
    # demonstration fixtures (vacuum-island diagrams) may be disconnected
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "g_edges", tuple(map(tuple, self.g_edges)))
        object.__setattr__(self, "v_edges", tuple(tuple(sorted(e)) for e in self.v_edges))
        self._validate()

    def _validate(self):
        n = self.n_vertices
        alpha, beta = self.external
        out_deg = [0] * n
        in_deg = [0] * n
        for s, d in self.g_edges:
            out_deg[s] += 1
            in_deg[d] += 1
        for v in range(n):
            want_out = 0 if v == alpha else 1
            want_in = 0 if v == beta else 1
            if out_deg[v] != want_out or in_deg[v] != want_in:
                raise ValueError(
                    f"vertex {v}: g-degree (in={in_deg[v]}, out={out_deg[v]}) "
                    f"violates the one-in/one-out rule")
        seen = [0] * n
        for a, b in self.v_edges:
            seen[a] += 1
            seen[b] += 1
        if any(c != 1 for c in seen):
            raise ValueError("every vertex must sit on exactly one v-edge")
        for s, d in self.g_edges:
            if s == d:
                # instantaneous self-contractions belong to the excluded
                # time-local first-order part
                raise ValueError("tadpole g-edge (self-loop) not allowed")
        if self.strict and not _connected(n, self.g_edges, self.v_edges):
            raise ValueError("diagram must be connected")

    @property
    def order(self):
        """Number of interaction lines n_v."""
        return len(self.v_edges)

    @property
    def slot_of(self):
        """Map vertex -> time-slot index (one slot per v-edge)."""
        m = {}
        for k, (a, b) in enumerate(self.v_edges):
            m[a] = k
            m[b] = k
        return m


@dataclass(frozen=True)
class ApproximationSeries:
    family: str
    max_order: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; pick one of {FAMILIES}")
        if self.max_order < 2:
            # first-order terms are time-local and carry no <> component
            raise ValueError("max_order must be >= 2")


def _connected(n, g_edges, v_edges):
    adj = {v: set() for v in range(n)}
    for s, d in g_edges:
        adj[s].add(d)
        adj[d].add(s)
    for a, b in v_edges:
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
    return len(seen) == n


def count_loops(d, close_external=False):
    """Number of fermion loops: cycles of the successor map of the g-edges.

    With ``close_external`` the amputated external line is restored as a
    formal edge alpha -> beta before counting (this adds exactly one
    cycle for a connected self-energy diagram).
    """
    succ = {}
    for s, dst in d.g_edges:
        if s in succ:
            raise ValueError(f"vertex {s} has two outgoing g-edges")
        succ[s] = dst
    if close_external:
        alpha, beta = d.external
        succ[alpha] = beta
    loops = 0
    unvisited = set(succ)
    while unvisited:
        start = min(unvisited)
        path = []
        v = start
        while v in succ and v in unvisited:
            unvisited.discard(v)
            path.append(v)
            v = succ[v]
        if v == start:
            loops += 1
    return loops


def prefactor(d):
    """Feynman prefactor i^{n_v} (-1)^l of a self-energy diagram.

    In the convention used throughout (g = -i <T psi psi+>, Dyson
    equation G = g + g Sigma G with no extra factors) each interaction
    line carries a factor i and each fermion loop a factor -1; the
    first-order exchange term then reproduces the real, positive
    Hartree-Fock shift.  The extra -i of the -i*Sigma^< convention is
    applied at assembly time, not here.
    """
    return (1j) ** d.order * (-1.0) ** count_loops(d)


def is_one_particle_irreducible(d):
    """True iff no single g-edge removal disconnects alpha from beta."""
    alpha, beta = d.external
    for k in range(len(d.g_edges)):
        edges = d.g_edges[:k] + d.g_edges[k + 1:]
        adj = {v: set() for v in range(d.n_vertices)}
        for s, dd in edges:
            adj[s].add(dd)
            adj[dd].add(s)
        for a, b in d.v_edges:
            adj[a].add(b)
            adj[b].add(a)
        seen = {alpha}
        stack = [alpha]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if beta not in seen:
            return False
    return True


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def second_born_direct():
    return tmatrix_ladder(2, exchange=False)


def second_born_exchange():
    return tmatrix_ladder(2, exchange=True)


def tmatrix_ladder(order, exchange=False):
    """Particle-particle ladder of ``order`` rungs.

    Rung k occupies vertices (2k-2, 2k-1); alpha = vertex 0 (rung 1),
    beta = vertex 2*order-2 (rung ``order``).  The pair lines run from
    rung k+1 down to rung k, the single return line runs from rung 1 to
    rung ``order``.  The exchange variant crosses the two pair lines
    leaving the top rung.
    """
    if order < 2:
        raise ValueError("ladder needs at least 2 rungs")
    n = 2 * order
    v_edges = [(2 * k, 2 * k + 1) for k in range(order)]
    g_edges = []
    for k in range(1, order):  # rung k+1 -> rung k, both strands
        a_src, a_dst = 2 * k, 2 * (k - 1)
        b_src, b_dst = 2 * k + 1, 2 * k - 1
        if exchange and k == order - 1:
            g_edges.append((a_src, b_dst))
            g_edges.append((b_src, a_dst))
        else:
            g_edges.append((a_src, a_dst))
            g_edges.append((b_src, b_dst))
    g_edges.append((1, n - 1))  # return line rung 1 -> rung `order`
    tag = "x" if exchange else "d"
    return Diagram(n, tuple(g_edges), tuple(v_edges), (0, n - 2),
                   label=f"tmatrix_{tag}{order}")


def gw_chain(order):
    """Bubble chain with ``order`` interaction lines (order-1 bubbles).

    Slot 1 holds (alpha, u1); slot s holds (w_{s-1}, u_s); the last slot
    holds (w_{order-1}, beta).  Bubble k is the opposite pair of lines
    between u_k and w_k; the main line runs from beta back to alpha.
    """
    if order < 2:
        raise ValueError("bubble chain needs at least 2 interaction lines")
    n = 2 * order
    v_edges = [(2 * k, 2 * k + 1) for k in range(order)]
    g_edges = []
    for k in range(1, order):  # bubble k between u_k = 2k-1 and w_k = 2k
        g_edges.append((2 * k - 1, 2 * k))
        g_edges.append((2 * k, 2 * k - 1))
    g_edges.append((n - 1, 0))  # main line beta -> alpha
    return Diagram(n, tuple(g_edges), tuple(v_edges), (0, n - 1),
                   label=f"gw{order}")


def generate_series(series):
    """All diagrams of an approximation series, canonically ordered."""
    fam, m = series.family, series.max_order
    if fam == "second_born":
        return [second_born_direct(), second_born_exchange()]
    if fam == "tmatrix_pp":
        out = []
        for order in range(2, m + 1):
            out.append(tmatrix_ladder(order, exchange=False))
            out.append(tmatrix_ladder(order, exchange=True))
        return out
    if fam == "gw":
        return [gw_chain(order) for order in range(2, m + 1)]
    raise ValueError(f"unsupported family {fam!r}")


# ---------------------------------------------------------------------------
# canonical labeling / isomorphism (small graphs, refinement + backtrack)
# ---------------------------------------------------------------------------

def _refine(n, colors, out_adj, in_adj, v_adj):
    while True:
        new = []
        for v in range(n):
            sig = (
                colors[v],
                tuple(sorted(colors[w] for w in out_adj[v])),
                tuple(sorted(colors[w] for w in in_adj[v])),
                tuple(sorted(colors[w] for w in v_adj[v])),
            )
            new.append(sig)
        ranks = {sig: i for i, sig in enumerate(sorted(set(new)))}
        refined = [ranks[sig] for sig in new]
        if refined == colors:
            return colors
        colors = refined


def canonical_order(n, g_edges, v_edges, init_colors):
    """Canonical vertex ordering (old -> position) minimizing the
    certificate, with ``init_colors`` pinning distinguished vertices."""
    out_adj = [[] for _ in range(n)]
    in_adj = [[] for _ in range(n)]
    v_adj = [[] for _ in range(n)]
    for s, d in g_edges:
        out_adj[s].append(d)
        in_adj[d].append(s)
    for a, b in v_edges:
        v_adj[a].append(b)
        v_adj[b].append(a)

    best = [None]

    def certificate(perm):
        # perm: old -> new
        ge = tuple(sorted((perm[s], perm[d]) for s, d in g_edges))
        ve = tuple(sorted(tuple(sorted((perm[a], perm[b]))) for a, b in v_edges))
        return (ge, ve)

    def descend(colors):
        colors = _refine(n, list(colors), out_adj, in_adj, v_adj)
        classes = {}
        for v, c in enumerate(colors):
            classes.setdefault(c, []).append(v)
        target = None
        for c in sorted(classes):
            if len(classes[c]) > 1:
                target = c
                break
        if target is None:
            order = sorted(range(n), key=lambda v: colors[v])
            perm = [0] * n
            for pos, v in enumerate(order):
                perm[v] = pos
            cert = certificate(perm)
            if best[0] is None or cert < best[0][0]:
                best[0] = (cert, perm)
            return
        nxt = max(colors) + 1
        for v in sorted(classes[target]):
            child = list(colors)
            child[v] = nxt
            descend(child)

    descend(init_colors)
    return best[0][1], best[0][0]


def _diagram_colors(d):
    alpha, beta = d.external
    cols = []
    for v in range(d.n_vertices):
        cols.append((1 if v == alpha else (2 if v == beta else 0),))
    ranks = {c: i for i, c in enumerate(sorted(set(cols)))}
    return [ranks[c] for c in cols]


def diagram_certificate(d):
    _, cert = canonical_order(d.n_vertices, d.g_edges, d.v_edges, _diagram_colors(d))
    alpha, beta = d.external
    return (d.n_vertices, cert, "sigma")


def diagrams_isomorphic(d1, d2):
    """Structural equality with externals pinned."""
    if d1.n_vertices != d2.n_vertices or d1.order != d2.order:
        return False
    return diagram_certificate(d1) == diagram_certificate(d2)


def diagram_topology_id(d):
    cert = diagram_certificate(d)
    return hashlib.sha1(repr(cert).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def to_dot(d):
    """Deterministic DOT rendering: solid directed g-edges, dashed
    undirected v-edges, doubled border on the external vertices."""
    alpha, beta = d.external
    lines = [f"digraph {d.label or 'diagram'} {{", "  rankdir=LR;"]
    for v in range(d.n_vertices):
        if v == alpha:
            lines.append(f'  v{v} [label="a", shape=circle, peripheries=2];')
        elif v == beta:
            lines.append(f'  v{v} [label="b", shape=circle, peripheries=2];')
        else:
            lines.append(f'  v{v} [label="{v}", shape=circle];')
    for s, dd in sorted(d.g_edges):
        lines.append(f"  v{s} -> v{dd} [style=solid];")
    for a, b in sorted(d.v_edges):
        lines.append(f"  v{a} -> v{b} [style=dashed, dir=none];")
    lines.append("}")
    return "\n".join(lines) + "\n"

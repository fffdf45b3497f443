"""Command-line interface: config ingestion, pipeline runs, exports.

Config files are flat text: ``key = value`` lines plus repeated
``vmat i j k l re im`` lines for the nonzero two-body elements (missing
symmetry partners are filled in automatically; conflicting entries are
rejected).  All outputs are byte-deterministic for a given config.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .propagator import SystemSpec, Propagator
from .diagram import ApproximationSeries, generate_series, to_dot
from .cutting import (
    enumerate_retarded_cuts, expand_series, diagram_cut_union,
    minimal_psd_extension, non_psd_fixture, series_half, half_adjoint,
)
from .retarded import eval_slots
from .matsubara import check_continuation
from .assembly import (
    sigma_lesser, sigma_greater, gamma, dyson_spectral, psd_report,
    direct_second_born, self_consistent_spectra,
)
from .propagator import fermi
from .edoracle import (
    build_fock, GrandCanonicalState, exact_green, exact_spectral, exact_sigma,
    hubbard_dimer_spec,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    spec: SystemSpec
    family: str
    order: int
    psd_extend: bool
    self_consistent: bool
    grid: tuple
    outdir: Path


_SYM_OPS = (
    lambda i, j, k, l: ((i, j, k, l), False),
    lambda i, j, k, l: ((j, i, l, k), False),   # pair exchange
    lambda i, j, k, l: ((k, l, i, j), True),    # hermiticity (conjugate)
    lambda i, j, k, l: ((l, k, j, i), True),
)


def parse_config(text, path="<config>"):
    """Parse the flat config format into a RunConfig."""
    kv = {}
    vmat_entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("vmat"):
            parts = line.split()
            if len(parts) != 7:
                raise ConfigError(
                    f"{path}:{lineno}: vmat lines need 'vmat i j k l re im'")
            try:
                idx = tuple(int(p) for p in parts[1:5])
                val = float(parts[5]) + 1j * float(parts[6])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}")
            vmat_entries.append((lineno, idx, val))
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in kv:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        kv[key] = (lineno, val)

    def need(key):
        if key not in kv:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return kv.pop(key)[1]

    def take(key, default):
        if key in kv:
            return kv.pop(key)[1]
        return default

    try:
        levels = [float(s) for s in need("levels").split(",")]
        beta = float(need("beta"))
        mu = float(need("mu"))
        eta = float(need("eta"))
        family = take("family", "second_born")
        order = int(take("order", "2"))
        psd_extend = take("psd_extend", "false").lower() in ("1", "true", "yes")
        self_consistent = take("self_consistent", "false").lower() in ("1", "true", "yes")
        grid = (float(take("grid_min", "-10")), float(take("grid_max", "10")),
                int(take("grid_points", "1001")))
        outdir = Path(take("outdir", "."))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    if kv:
        key, (lineno, _) = sorted(kv.items())[0]
        raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")

    n = len(levels)
    v = np.zeros((n, n, n, n), dtype=complex)
    have = {}
    for lineno, idx, val in vmat_entries:
        if any(not 0 <= x < n for x in idx):
            raise ConfigError(f"{path}:{lineno}: vmat index out of range 0..{n-1}")
        for op in _SYM_OPS:
            jdx, conj = op(*idx)
            w = np.conj(val) if conj else val
            if jdx in have and abs(have[jdx] - w) > 1e-12:
                raise ConfigError(
                    f"{path}:{lineno}: vmat{jdx} conflicts with an earlier "
                    f"entry through the tensor symmetries")
            have[jdx] = w
            v[jdx] = w
    try:
        spec = SystemSpec(levels=levels, vmat=v, beta=beta, mu=mu, eta=eta)
        ApproximationSeries(family, order)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    return RunConfig(spec=spec, family=family, order=order,
                     psd_extend=psd_extend, self_consistent=self_consistent,
                     grid=grid, outdir=outdir)


def load_config(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path!r} not found")
    return parse_config(p.read_text(), path=str(path))


# ---------------------------------------------------------------------------
# deterministic CSV export
# ---------------------------------------------------------------------------

def _fmt(x):
    return f"{float(x):.17g}"


def write_matrix_csv(path, omegas, values, comments=()):
    """omega,<re_ij,im_ij row-major>,min_eig with 17 significant digits."""
    n = values.shape[1]
    cols = ["omega"]
    for i in range(n):
        for j in range(n):
            cols.append(f"re_{i}{j}")
            cols.append(f"im_{i}{j}")
    cols.append("min_eig")
    herm = 0.5 * (values + np.conj(np.transpose(values, (0, 2, 1))))
    mins = np.array([np.linalg.eigvalsh(m)[0] for m in herm])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for k, w in enumerate(omegas):
            row = [_fmt(w)]
            for i in range(n):
                for j in range(n):
                    row.append(_fmt(values[k, i, j].real))
                    row.append(_fmt(values[k, i, j].imag))
            row.append(_fmt(mins[k]))
            fh.write(",".join(row) + "\n")
        for c in comments:
            fh.write(f"# {c}\n")
    return mins


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _expansion_for(cfg, fixture=None):
    series = ApproximationSeries(cfg.family, cfg.order)
    if fixture == "non-psd":
        return non_psd_fixture()
    if cfg.psd_extend:
        return minimal_psd_extension(expand_series(series))
    return diagram_cut_union(series)


def cmd_expand(cfg, out=sys.stdout):
    series = ApproximationSeries(cfg.family, cfg.order)
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    for d in generate_series(series):
        cuts = enumerate_retarded_cuts(d)
        out.write(f"diagram {d.label}: order {d.order}, {len(cuts)} retarded cut terms\n")
        for k, t in enumerate(cuts.terms):
            out.write(
                f"  term {k}: N={t.n_pairs} left={t.left.topology_id} "
                f"right={t.right.topology_id} perm={t.perm} sign={t.sign:+d}\n")
            for side, h in (("L", t.left), ("R", t.right)):
                name = cfg.outdir / f"{d.label}_cut{k}_{side}.dot"
                name.write_text(_half_dot(h, f"{d.label}_cut{k}_{side}"))
        (cfg.outdir / f"{d.label}.dot").write_text(to_dot(d))
    return EXIT_OK


def _half_dot(h, name):
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for v in range(h.n_vertices):
        shape = 'peripheries=2' if v == h.external else 'peripheries=1'
        lines.append(f'  v{v} [label="{v}", shape=circle, {shape}];')
    for s, d in sorted(h.g_edges):
        lines.append(f"  v{s} -> v{d} [style=solid];")
    for grp in sorted(h.slots):
        if len(grp) == 2:
            lines.append(f"  v{grp[0]} -> v{grp[1]} [style=dashed, dir=none];")
    for k, v in enumerate(h.exits):
        lines.append(f'  x{k} [label="p{k}", shape=none];')
        lines.append(f"  v{v} -> x{k} [style=dotted];")
    for k, v in enumerate(h.entries):
        lines.append(f'  e{k} [label="h{k}", shape=none];')
        lines.append(f"  e{k} -> v{v} [style=dotted];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_spectra(cfg, fixture=None, out=sys.stdout):
    prop = Propagator(cfg.spec)
    expansion = _expansion_for(cfg, fixture)
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    try:
        if cfg.self_consistent and fixture is None:
            result, _history = self_consistent_spectra(cfg.spec, expansion,
                                                       cfg.grid)
        else:
            sl = sigma_lesser(expansion, prop)
            sg = sigma_greater(expansion, prop)
            result = dyson_spectral(prop, sl, sg, cfg.grid)
    except np.linalg.LinAlgError as exc:
        out.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    gm = result.gamma_poles
    verdict_g = psd_report(gm).verdict
    verdict_a = psd_report(result.spectral, tol=1e-8).verdict
    verdict = "PASS" if (verdict_g and verdict_a) else "FAIL"
    write_matrix_csv(cfg.outdir / "sigma_gamma.csv", result.omegas,
                     result.gamma_broadened.values, comments=[f"PSD: {verdict}"])
    write_matrix_csv(cfg.outdir / "spectral.csv", result.omegas,
                     result.spectral.values, comments=[f"PSD: {verdict}"])
    out.write(f"wrote sigma_gamma.csv, spectral.csv (PSD: {verdict})\n")
    return EXIT_OK


def _run_checks(cfg, names, etas, out):
    spec = cfg.spec
    prop = Propagator(spec)
    rng = np.random.default_rng(20240915)
    results = []

    def record(name, dev, tol):
        results.append((name, dev, tol))
        out.write(f"CHECK {name} {dev:.3e} {tol:.1e} "
                  f"{'PASS' if dev < tol else 'FAIL'}\n")

    L = spec.basis_size

    def active_legs(h, count=4):
        """Leg assignments whose interaction wiring is nonzero."""
        import itertools as it
        out_ = []
        for cand in it.product(range(L), repeat=2 * h.n_pairs + 1):
            v = eval_slots(h, prop, (0.0,) * h.n_slots, cand,
                           ext_index=0).value()
            if abs(v) > 1e-14:
                out_.append(cand)
                if len(out_) == count:
                    break
        return out_ or [(0,) * (2 * h.n_pairs + 1)]

    if "continuation" in names:
        for label, size in (("second_born", 1), ("tmatrix3", 2)):
            h = series_half("tmatrix_pp", size)
            legsets = active_legs(h)
            samples = [(legsets[k % len(legsets)],
                        tuple(rng.standard_normal(h.n_slots) * 2.0))
                       for k in range(50)]
            for eta in etas:
                dev = 0.0
                for legs, omegas in samples:
                    dev = max(dev, check_continuation(
                        h, prop, [omegas], leg_levels=legs, eta=eta))
                suffix = f"_eta={eta:g}" if len(etas) > 1 else ""
                record(f"continuation_{label}{suffix}", dev, 1e-10)
    if "gluing" in names:
        series = ApproximationSeries("second_born", 2)
        sl = sigma_lesser(diagram_cut_union(series), prop, eta_internal=0.0)
        ref = direct_second_born(prop, "lesser", "both")
        dev = _polesum_deviation(sl, ref)
        record("gluing_second_born", dev, 1e-10)
    if "fdt" in names:
        series = ApproximationSeries(cfg.family, cfg.order)
        expansion = minimal_psd_extension(expand_series(series))
        sl = sigma_lesser(expansion, prop).merged()
        sg = sigma_greater(expansion, prop).merged()
        gm = gamma(sl, sg)
        dev = 0.0
        for e, w in zip(gm.energies, gm.weights):
            fw = fermi(e - spec.mu, spec.beta)
            m = np.abs(sl.energies - e) < 1e-9
            wl = sl.weights[m].sum(axis=0) if m.any() else np.zeros_like(w)
            dev = max(dev, float(np.max(np.abs(wl - fw * w))))
        record("fdt_residues", dev, 1e-10)
    if "adjoint" in names:
        from .cutting import half_prefactor
        h = series_half("tmatrix_pp", 2)
        hrev, scalar, leg_map = half_adjoint(h)
        dev, scale = 0.0, 0.0
        for legs in active_legs(h):
            rev_legs = [0] * len(legs)
            for i, lv in enumerate(legs):
                rev_legs[leg_map[i]] = lv
            for _ in range(5):
                omegas = tuple(rng.standard_normal(h.n_slots))
                lhs = np.conj(eval_slots(h, prop, tuple(-w for w in omegas),
                                         legs, ext_index=0).value())
                rhs = scalar * eval_slots(
                    hrev, prop, omegas, tuple(rev_legs), ext_index=0,
                    prefactor=np.conj(half_prefactor(h))).value()
                dev = max(dev, abs(lhs - rhs))
                scale = max(scale, abs(lhs))
        record("adjoint_reversal", dev / max(scale, 1e-300), 1e-12)
    return results


def _polesum_deviation(a, b):
    am, bm = a.merged(), b.merged()
    if am.n_poles != bm.n_poles or not np.allclose(am.energies, bm.energies,
                                                   atol=1e-9):
        return float("inf")
    return float(np.max(np.abs(am.weights - bm.weights)))


def cmd_check(cfg, only=None, eta_sweep=False, out=sys.stdout):
    names = {"continuation", "gluing", "fdt", "adjoint"}
    if only:
        if only not in names:
            out.write(f"unknown check {only!r}; choose from {sorted(names)}\n")
            return EXIT_CONFIG
        names = {only}
    etas = [cfg.spec.eta]
    if eta_sweep:
        etas = [cfg.spec.eta, cfg.spec.eta / 2.0, cfg.spec.eta / 4.0]
    results = _run_checks(cfg, names, etas, out)
    ok = all(dev < tol for _, dev, tol in results)
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_oracle(cfg, preset=None, out=sys.stdout):
    spec = cfg.spec
    if preset == "hubbard-dimer":
        spec = hubbard_dimer_spec(t=0.5, u=2.0, beta=spec.beta, mu=spec.mu,
                                  eta=spec.eta)
    if spec.basis_size > 10:
        out.write("oracle limited to 10 spin-orbitals\n")
        return EXIT_CONFIG
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    fs = build_fock(spec)
    state = GrandCanonicalState.from_fock(fs)
    omegas = np.linspace(cfg.grid[0], cfg.grid[1], int(cfg.grid[2]))
    a_poles = exact_spectral(fs, state)
    a_grid = a_poles.broadened(omegas, spec.eta)
    write_matrix_csv(cfg.outdir / "oracle_spectral.csv", omegas, a_grid)
    sig, flags = exact_sigma(fs, state, omegas)
    write_matrix_csv(cfg.outdir / "oracle_sigma.csv", omegas, sig,
                     comments=[f"near-singular inversions: {int(flags.sum())}"])

    # Cauchy-Schwarz table on the equal-time lesser function
    rho = exact_green(fs, state, "lesser").total_weight()
    out.write("cauchy_schwarz |rho_ij|^2 / (rho_ii rho_jj):\n")
    worst = 0.0
    for i in range(spec.basis_size):
        for j in range(spec.basis_size):
            if i == j:
                continue
            ratio = abs(rho[i, j]) ** 2 / max(rho[i, i].real * rho[j, j].real,
                                              1e-300)
            worst = max(worst, ratio)
            out.write(f"  {i} {j} {ratio:.6f}\n")
    out.write(f"cauchy_schwarz worst ratio: {worst:.6f} "
              f"({'PASS' if worst <= 1.0 + 1e-12 else 'FAIL'})\n")

    # weak-coupling scaling table for the second Born comparison
    from .assembly import hartree_fock_sigma, sigma_retarded_from_gamma
    exp2b = expand_series(ApproximationSeries("second_born", 2))
    probes = _pole_free_frequencies(a_poles, cfg.grid, count=3)
    devs = []
    for scale in (1.0, 0.5):
        sp = spec.scaled_interaction(scale)
        fss = build_fock(sp)
        sts = GrandCanonicalState.from_fock(fss)
        sig_ex, _ = exact_sigma(fss, sts, probes)
        pr = Propagator(sp)
        rho_ex = exact_green(fss, sts, "lesser").total_weight()
        sl = sigma_lesser(exp2b, pr)
        sg = sigma_greater(exp2b, pr)
        s2 = sigma_retarded_from_gamma(gamma(sl, sg), sp.eta)(probes)
        shf = hartree_fock_sigma(pr, density=rho_ex)
        devs.append(float(np.max(np.abs(sig_ex - shf[None, :, :] - s2))))
        out.write(f"second_born deviation at coupling {scale:g}: {devs[-1]:.6e}\n")
    if devs[1] > 0:
        out.write(f"halving ratio: {devs[0] / devs[1]:.3f} (O(v^3) -> ~8)\n")
    return EXIT_OK


def _pole_free_frequencies(pole_sum, grid, count=3, min_dist=0.5):
    lo, hi, _ = grid
    candidates = np.linspace(lo, hi, 977)
    if pole_sum.n_poles:
        dist = np.min(np.abs(candidates[:, None] - pole_sum.energies[None, :]),
                      axis=1)
    else:
        dist = np.full(len(candidates), np.inf)
    good = candidates[dist > min_dist]
    if len(good) < count:
        good = candidates[np.argsort(-dist)][:count]
    idx = np.linspace(0, len(good) - 1, count).astype(int)
    return good[idx]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="retcut",
        description="Finite-temperature self-energies from retarded cutting "
                    "rules with PSD spectral functions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_expand = sub.add_parser("expand", help="list retarded cut expansions")
    p_expand.add_argument("config")

    p_spectra = sub.add_parser("spectra", help="run the spectral pipeline")
    p_spectra.add_argument("config")
    p_spectra.add_argument("--fixture", choices=["non-psd"], default=None)

    p_check = sub.add_parser("check", help="run verification checks")
    p_check.add_argument("config")
    p_check.add_argument("--check", dest="only", default=None)
    p_check.add_argument("--eta-sweep", action="store_true")

    p_oracle = sub.add_parser("oracle", help="exact-diagonalization reference")
    p_oracle.add_argument("config")
    p_oracle.add_argument("--preset", choices=["hubbard-dimer"], default=None)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG

    if args.command == "expand":
        return cmd_expand(cfg)
    if args.command == "spectra":
        return cmd_spectra(cfg, fixture=args.fixture)
    if args.command == "check":
        return cmd_check(cfg, only=args.only, eta_sweep=args.eta_sweep)
    if args.command == "oracle":
        return cmd_oracle(cfg, preset=args.preset)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

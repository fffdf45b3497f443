import numpy as np
from retcut.propagator import SystemSpec, Propagator, random_hermitian_vmat
from retcut.diagram import (tmatrix_ladder, gw_chain, second_born_direct,
                            second_born_exchange, count_loops, prefactor,
                            ApproximationSeries)
from retcut.cutting import (enumerate_retarded_cuts, enumerate_time_ordered_cuts,
                            half_prefactor, expand_series, glue, parity,
                            series_half, diagram_cut_union, minimal_psd_extension,
                            is_psd_form)
from retcut.retarded import (eval_slots, half_tensor, physical_leg_args,
                             evaluate_retarded_frequency)
from retcut.matsubara import check_continuation, evaluate_matsubara, matsubara_reference
from retcut.assembly import (sigma_lesser, sigma_greater, direct_second_born,
                             gamma, psd_report)
from retcut.diagram import diagrams_isomorphic

rng = np.random.default_rng(7)
L = 3
spec = SystemSpec(levels=[0.0, 0.7, 1.3], vmat=random_hermitian_vmat(rng, L, 0.8),
                  beta=1.3, mu=0.45, eta=0.05)
prop = Propagator(spec)

print("== loops/prefactors ==")
d = second_born_direct(); x = second_born_exchange()
print("2B direct loops:", count_loops(d), "prefactor:", prefactor(d))
print("2B exch   loops:", count_loops(x), "prefactor:", prefactor(x))

print("== cut counts ==")
for n in (2, 3, 4, 5):
    td = tmatrix_ladder(n)
    rc = enumerate_retarded_cuts(td)
    tc = enumerate_time_ordered_cuts(td)
    print(f"T{n}: retarded {len(rc)} (want {n-1}), TO {len(tc)} (want {2**(n-2)}),"
          f" islands {sum(not t.connected for t in tc.terms)}")

print("== 2B cut structure ==")
cd = enumerate_retarded_cuts(d).terms[0]
cx = enumerate_retarded_cuts(x).terms[0]
print("direct: perm", cd.perm, "sign", cd.sign, "left==right:", cd.left == cd.right)
print("exch:   perm", cx.perm, "sign", cx.sign, "left==left(d):", cx.left == cd.left,
      "right==right(d):", cx.right == cd.right)

print("== glue round trip ==")
gd = glue(cd.left, cd.right, cd.perm)
gx = glue(cx.left, cx.right, cx.perm)
print("glued direct iso to 2Bd:", diagrams_isomorphic(gd, d))
print("glued exch iso to 2Bx:", diagrams_isomorphic(gx, x))
print("glue prefactor thm (direct):",
      half_prefactor(cd.left) * half_prefactor(cd.right) * (-1j) * (-1)**cd.left.n_pairs * cd.sign,
      "vs -i*prefactor:", -1j * prefactor(gd))
print("glue prefactor thm (exch):",
      half_prefactor(cx.left) * half_prefactor(cx.right) * (-1j) * (-1)**cx.left.n_pairs * cx.sign,
      "vs -i*prefactor:", -1j * prefactor(gx))

print("== sigma_lesser vs direct 2B ==")
exp2b = expand_series(ApproximationSeries("second_born", 2))
print("terms:", [(t.perm, t.sign) for t in exp2b.terms])
sl = sigma_lesser(exp2b, prop)
ref = direct_second_born(prop, "lesser", "both")
print("poles:", sl.n_poles, ref.n_poles)
if sl.n_poles == ref.n_poles:
    print("pole dev:", np.max(np.abs(sl.energies - ref.energies)))
    print("weight dev:", np.max(np.abs(sl.weights - ref.weights)))

sg = sigma_greater(exp2b, prop)
refg = direct_second_born(prop, "greater", "both")
print("greater weight dev:", np.max(np.abs(sg.weights - refg.weights)))

gm = gamma(sl, sg)
rep = psd_report(gm)
print("gamma PSD:", rep.verdict, "worst:", rep.worst, "herm dev:", rep.hermiticity_deviation)

print("== FDT residues ==")
from retcut.propagator import fermi
ok = True
for e, wl, wg in zip(gm.energies, sigma_lesser(exp2b, prop).merged().weights, sg.merged().weights):
    f = fermi(e - spec.mu, spec.beta)
    tot = wl + wg
    ok = ok and np.allclose(wl, f * tot, atol=1e-12)
print("FDT:", ok)

print("== continuation ==")
h2 = series_half("tmatrix_pp", 2)   # two-slot half
tuples = [tuple(rng.standard_normal(h2.n_slots)) for _ in range(10)]
dev = check_continuation(h2, prop, tuples, leg_levels=(0, 1, 2))
print("cont dev 2-slot T half:", dev)

print("== matsubara vs reference ==")
zs = tuple(rng.standard_normal(2) + 1j * rng.standard_normal(2))
mv = evaluate_matsubara(h2, prop, zs, (0, 1, 2)).value()
mr = matsubara_reference(h2, prop, zs, (0, 1, 2))
print("matsubara dev:", abs(mv - mr), "value:", mv)

print("== tensors vs scalar eval ==")
ht = half_tensor(h2, prop, eta=spec.eta)
legs = (1, 0, 2)
val = evaluate_retarded_frequency(h2, prop, physical_leg_args(h2, spec, legs), legs,
                                  eta=spec.eta, ext_index=2).value()
print("tensor vs scalar:", abs(ht[(2,) + legs] - val))

print("== bracket vs union extension ==")
ser = ApproximationSeries("tmatrix_pp", 4)
bracket = expand_series(ser)
union = diagram_cut_union(ser)
ext = minimal_psd_extension(union)
kb = sorted(t.key() for t in bracket.terms)
ke = sorted(t.key() for t in ext.terms)
print("bracket terms:", len(bracket), "union:", len(union), "extended:", len(ext),
      "equal:", kb == ke)
print("is_psd_form(bracket):", is_psd_form(bracket), "is_psd_form(union):", is_psd_form(union))

"""Self-energy assembly: pole sums, rate function, Dyson equation.

The cut expansion of an approximation turns into the lesser/greater
correlation self-energy in Fermi-golden-rule form,

    -i Sigma^<(w) = sum over terms, leg levels I:
        sign * B_left(I) conj(B_right(P(I))) * F^<(I) * 2 pi delta(w - E(I)),

with F^< the product of hole occupations f and particle blocking
factors 1-f on the cut lines and E(I) the net energy they carry.  The
delta peaks are kept exact as (pole, weight-matrix) pairs; the rate
function Gamma, the retarded self-energy, the Dyson equation and the
spectral function follow, with Lorentzian broadening applied only on
export grids.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .propagator import Propagator, fermi
from .retarded import half_tensor

__all__ = [
    "PoleSum",
    "SpectralGrid",
    "SpectralResult",
    "PsdReport",
    "occupation_weight",
    "sigma_lesser",
    "sigma_greater",
    "gamma",
    "sigma_retarded_from_gamma",
    "dyson_spectral",
    "psd_report",
    "hartree_fock_sigma",
    "direct_second_born",
    "self_consistent_spectra",
    "effective_threads",
]

POLE_MERGE_TOL = 1e-9


def effective_threads():
    """Thread cap from PSD_DIAGRAMS_THREADS (0 = auto, unset = serial)."""
    raw = os.environ.get("PSD_DIAGRAMS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PSD_DIAGRAMS_THREADS={raw!r} is not an integer")
    if n < 0:
        raise ValueError("PSD_DIAGRAMS_THREADS must be >= 0")
    if n == 0:
        return min(4, os.cpu_count() or 1)
    return n


@dataclass(frozen=True)
class PoleSum:
    """Exact spectral object: sum_k 2 pi delta(w - E_k) W_k.

    Weights are Hermitian L x L matrices; the integral of the object
    over dw/2pi is sum_k W_k.
    """

    energies: np.ndarray
    weights: np.ndarray  # shape (n_poles, L, L)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        w = np.asarray(self.weights, dtype=complex)
        if w.shape[:1] != e.shape or w.ndim != 3 or w.shape[1] != w.shape[2]:
            raise ValueError("weights must be (n_poles, L, L) matching energies")
        order = np.argsort(e, kind="stable")
        object.__setattr__(self, "energies", e[order])
        object.__setattr__(self, "weights", w[order])

    @property
    def n_poles(self):
        return len(self.energies)

    @property
    def basis_size(self):
        return self.weights.shape[1]

    def total_weight(self):
        return self.weights.sum(axis=0)

    def hermiticity_deviation(self):
        dev = self.weights - np.conj(np.transpose(self.weights, (0, 2, 1)))
        return float(np.max(np.abs(dev))) if self.n_poles else 0.0

    def hermitized(self):
        w = 0.5 * (self.weights + np.conj(np.transpose(self.weights, (0, 2, 1))))
        return PoleSum(self.energies, w)

    def min_eigenvalues(self):
        if self.n_poles == 0:
            return np.zeros(0)
        herm = self.hermitized().weights
        return np.array([np.linalg.eigvalsh(wk)[0] for wk in herm])

    def merged(self, tol=POLE_MERGE_TOL):
        """Combine poles closer than ``tol`` (degenerate energies must
        merge before any eigenvalue check)."""
        if self.n_poles == 0:
            return self
        es, ws = [], []
        for e, w in zip(self.energies, self.weights):
            if es and abs(e - es[-1]) <= tol:
                ws[-1] = ws[-1] + w
                continue
            es.append(e)
            ws.append(w.copy())
        return PoleSum(np.array(es), np.array(ws))

    def broadened(self, omegas, eta):
        """Grid samples with each delta smeared to a Lorentzian:
        2 pi delta_eta(w - E) = 2 eta / ((w - E)^2 + eta^2)."""
        omegas = np.asarray(omegas, dtype=float)
        out = np.zeros((len(omegas), self.basis_size, self.basis_size),
                       dtype=complex)
        for e, w in zip(self.energies, self.weights):
            lor = 2.0 * eta / ((omegas - e) ** 2 + eta**2)
            out += lor[:, None, None] * w[None, :, :]
        return out

    def resolvent(self, z):
        """sum_k W_k / (z - E_k) at complex z (vectorized over z)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (self.basis_size, self.basis_size),
                       dtype=complex)
        for e, w in zip(self.energies, self.weights):
            out += (1.0 / (z - e))[..., None, None] * w
        return out


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform frequency grid carrying matrix-valued samples."""

    omegas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        vals = np.asarray(self.values)
        if om.ndim != 1 or np.any(np.diff(om) <= 0):
            raise ValueError("grid must be strictly increasing")
        if vals.shape[0] != len(om):
            raise ValueError("one matrix sample per grid point required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "values", vals)


def occupation_weight(prop, particles, holes):
    """Occupation factor and net energy of one cut-line assignment.

    Returns (F, E) with F = prod (1-f) over particle levels times
    prod f over hole levels and E = sum(hole energies) - sum(particle
    energies); the lesser self-energy pole at this assignment sits at
    w = E.  The greater component swaps f and 1-f.
    """
    spec = prop.spec
    F = 1.0
    E = 0.0
    for p in particles:
        F *= prop.fbar[p]
        E -= spec.levels[p]
    for q in holes:
        F *= prop.f[q]
        E += spec.levels[q]
    return F, E


def _aligned_right(tensor, perm, n_legs):
    """Reindex a right-half tensor so its leg axes follow the left's
    labels through the pairing permutation."""
    axes = [0] + [1 + perm[k] for k in range(n_legs)]
    return np.transpose(tensor, axes)


def _assemble(expansion, prop, component, eta_internal, mode, tensor_cache=None):
    spec = prop.spec
    L = spec.basis_size
    eps = np.asarray(spec.levels)
    if eta_internal is None:
        # internal resonances (a cut pair degenerate with an internal
        # pair) are secular divergences kept finite by the global eta
        eta_internal = spec.eta
    if tensor_cache is None:
        tensor_cache = {}

    def tensor(half):
        key = (half.topology_id, mode, eta_internal)
        if key not in tensor_cache:
            tensor_cache[key] = half_tensor(half, prop, eta=eta_internal,
                                            mode=mode)
        return tensor_cache[key]

    pole_map = {}
    for term in expansion.terms:
        n = term.n_pairs
        n_legs = 2 * n + 1
        bl = tensor(term.left)
        br = _aligned_right(tensor(term.right), term.perm, n_legs)
        blf = bl.reshape(L, -1)
        brf = br.reshape(L, -1)

        # occupation factors and pole energies over the leg-level grid
        shape = (L,) * n_legs
        F = np.ones(shape)
        E = np.zeros(shape)
        for k in range(n_legs):
            ax = [1] * n_legs
            ax[k] = L
            if k < n:   # particle (exit) leg
                occ = prop.fbar if component == "lesser" else prop.f
                F = F * occ.reshape(ax)
                E = E - eps.reshape(ax)
            else:       # hole (entry) leg
                occ = prop.f if component == "lesser" else prop.fbar
                F = F * occ.reshape(ax)
                E = E + eps.reshape(ax)
        Ff = F.reshape(-1)
        Ef = np.round(E.reshape(-1), 12)

        for e_val in np.unique(Ef):
            idx = np.nonzero(Ef == e_val)[0]
            # the alpha-side factor is unconjugated for both components;
            # lesser and greater differ only in the occupation factors
            w = np.einsum("ia,ja->ij", blf[:, idx] * Ff[idx],
                          np.conj(brf[:, idx]))
            w = term.sign * w
            if e_val in pole_map:
                pole_map[e_val] += w
            else:
                pole_map[e_val] = w

    if not pole_map:
        return PoleSum(np.zeros(0), np.zeros((0, L, L), dtype=complex))
    energies = np.array(sorted(pole_map))
    weights = np.array([pole_map[e] for e in energies])
    return PoleSum(energies, weights).merged()


def sigma_lesser(expansion, prop, eta_internal=None, mode="retarded",
                 tensor_cache=None):
    """Pole sum of -i Sigma^<(w) from a cut expansion.

    ``eta_internal`` regularizes the half-diagram energy denominators
    and defaults to the global eta of the system; expansions without
    internal lines (second Born) evaluate exactly for any value.
    """
    return _assemble(expansion, prop, "lesser", eta_internal, mode,
                     tensor_cache)


def sigma_greater(expansion, prop, eta_internal=None, mode="retarded",
                  tensor_cache=None):
    """Pole sum of +i Sigma^>(w); entry legs carry 1-f, exits f."""
    return _assemble(expansion, prop, "greater", eta_internal, mode,
                     tensor_cache)


def gamma(sl, sg, tol=POLE_MERGE_TOL):
    """Rate function Gamma(w) = i(Sigma^> - Sigma^<) as a pole sum.

    Merges the two pole lists; weights add (both inputs are already the
    sign-normalized PSD candidates -i Sigma^< and +i Sigma^>).
    """
    energies = np.concatenate([sl.energies, sg.energies])
    weights = np.concatenate([sl.weights, sg.weights])
    return PoleSum(energies, weights).merged(tol)


def sigma_retarded_from_gamma(gamma_ps, eta):
    """Retarded self-energy reconstructed from the rate function:
    Sigma^R(w) = sum_k W_k / (w - E_k + i eta).  Returns a callable
    accepting scalar or array w."""
    if eta <= 0:
        raise ValueError("eta must be positive")

    def sigma_r(omega):
        return gamma_ps.resolvent(np.asarray(omega, dtype=complex) + 1j * eta)

    return sigma_r


def _grid(grid_spec):
    lo, hi, n = grid_spec
    if not (hi > lo and int(n) >= 2):
        raise ValueError("grid must be (min, max, count) with max > min, count >= 2")
    return np.linspace(lo, hi, int(n))


def dyson_spectral(prop, sl, sg, grid_spec, eta=None, threads=None):
    """Dressed propagator components and spectral function on a grid.

    G^R(w)   = [(w + i eta) - diag(eps) - Sigma^R(w)]^{-1}
    -iG^<(w) = G^R [broadened(-i Sigma^<) + 2 eta f(w-mu)] G^A
    +iG^>(w) = G^R [broadened(+i Sigma^>) + 2 eta (1-f(w-mu))] G^A
    A(w)     = i(G^> - G^<) = -iG^< + iG^>

    The 2*eta source terms restore the bare-pole spectral weight so
    that A = i(G^R - G^A) holds exactly at finite eta; with PSD
    self-energy weights every piece is a congruence of a PSD matrix.
    Raises on a singular Dyson inversion, reporting the frequency.
    """
    spec = prop.spec
    if eta is None:
        eta = spec.eta
    omegas = _grid(grid_spec)
    L = spec.basis_size
    eps = np.asarray(spec.levels)
    gm = gamma(sl, sg)
    sr = sigma_retarded_from_gamma(gm, eta)

    less_b = sl.broadened(omegas, eta)
    grt_b = sg.broadened(omegas, eta)
    fw = fermi(omegas - spec.mu, spec.beta)

    out_less = np.empty((len(omegas), L, L), dtype=complex)
    out_grt = np.empty_like(out_less)
    out_spec = np.empty_like(out_less)
    out_gr = np.empty_like(out_less)

    def work(i):
        w = omegas[i]
        m = (w + 1j * eta) * np.eye(L) - np.diag(eps) - sr(w)
        try:
            gr = np.linalg.inv(m)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                f"singular Dyson inversion at omega = {w!r}")
        ga = gr.conj().T
        src_l = less_b[i] + 2.0 * eta * fw[i] * np.eye(L)
        src_g = grt_b[i] + 2.0 * eta * (1.0 - fw[i]) * np.eye(L)
        out_gr[i] = gr
        out_less[i] = gr @ src_l @ ga
        out_grt[i] = gr @ src_g @ ga
        out_spec[i] = out_less[i] + out_grt[i]

    n_threads = effective_threads() if threads is None else threads
    if n_threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(work, range(len(omegas))))
    else:
        for i in range(len(omegas)):
            work(i)

    return SpectralResult(
        omegas=omegas,
        minus_ig_lesser=SpectralGrid(omegas, out_less),
        i_g_greater=SpectralGrid(omegas, out_grt),
        spectral=SpectralGrid(omegas, out_spec),
        g_retarded=SpectralGrid(omegas, out_gr),
        gamma_poles=gm,
        gamma_broadened=SpectralGrid(omegas, less_b + grt_b),
    )


@dataclass(frozen=True)
class SpectralResult:
    omegas: np.ndarray
    minus_ig_lesser: SpectralGrid
    i_g_greater: SpectralGrid
    spectral: SpectralGrid
    g_retarded: SpectralGrid
    gamma_poles: PoleSum
    gamma_broadened: SpectralGrid

    def occupations(self):
        """Level occupations from the lesser function:
        n_i = int dw/2pi (-iG^<)_{ii}."""
        dw = self.omegas[1] - self.omegas[0]
        diag = np.real(np.einsum("wii->wi", self.minus_ig_lesser.values))
        return np.trapezoid(diag, dx=dw, axis=0) / (2.0 * np.pi)


@dataclass(frozen=True)
class PsdReport:
    """Minimum eigenvalue scan of a pole sum or a grid of matrices."""

    labels: np.ndarray          # pole energies or grid frequencies
    min_eigenvalues: np.ndarray
    scales: np.ndarray          # max(1, ||W||) per entry
    tol: float
    hermiticity_deviation: float

    @property
    def verdict(self):
        if len(self.min_eigenvalues) == 0:
            return True
        return bool(np.all(self.min_eigenvalues >= -self.tol * self.scales))

    @property
    def worst(self):
        if len(self.min_eigenvalues) == 0:
            return 0.0
        return float(np.min(self.min_eigenvalues / self.scales))


def psd_report(obj, tol=1e-10):
    """PSD scan: PASS iff every min eigenvalue >= -tol * max(1, ||W||)."""
    if isinstance(obj, PoleSum):
        merged = obj.merged()
        herm = merged.hermiticity_deviation()
        ws = merged.hermitized().weights
        labels = merged.energies
    elif isinstance(obj, SpectralGrid):
        vals = obj.values
        herm = float(np.max(np.abs(vals - np.conj(np.transpose(vals, (0, 2, 1)))))) \
            if len(vals) else 0.0
        ws = 0.5 * (vals + np.conj(np.transpose(vals, (0, 2, 1))))
        labels = obj.omegas
    else:
        raise TypeError("psd_report expects a PoleSum or a SpectralGrid")
    mins = np.array([np.linalg.eigvalsh(w)[0] for w in ws]) if len(ws) \
        else np.zeros(0)
    scales = np.array([max(1.0, np.linalg.norm(w)) for w in ws]) if len(ws) \
        else np.zeros(0)
    return PsdReport(labels=np.asarray(labels), min_eigenvalues=mins,
                     scales=scales, tol=tol, hermiticity_deviation=herm)


def hartree_fock_sigma(prop, density=None):
    """Static mean-field self-energy (oracle support only; the spectral
    pipeline works with the correlation part exclusively):

        Sigma^HF_ij = sum_kl (<ik|v|jl> - <ik|v|lj>) rho_lk

    With the free density (default) this is the first-order term; with
    the exact density it also absorbs the static higher-order
    insertions, leaving Sigma_exact - Sigma^HF - Sigma_2B = O(v^3).
    """
    spec = prop.spec
    v = spec.vmat
    rho = np.diag(prop.f) if density is None else np.asarray(density)
    direct = np.einsum("ikjl,lk->ij", v, rho)
    exch = np.einsum("iklj,lk->ij", v, rho)
    return direct - exch


def direct_second_born(prop, component="lesser", which="both"):
    """Second-order self-energy by the explicit Feynman formula.

    Independent of the cutting machinery; used as the gluing oracle.
    Returns the pole sum of -i Sigma^< (or +i Sigma^> with f <-> 1-f):

        sum over p, q0, q1 of
            [v[i,p,q0,q1] (- v[i,p,q1,q0] for the exchange term)]
            * conj(v[j,p,q0,q1]) * f_q0 f_q1 (1-f_p)
            * 2 pi delta(w - (e_q0 + e_q1 - e_p))
    """
    spec = prop.spec
    L = spec.basis_size
    v = spec.vmat
    eps = np.asarray(spec.levels)
    f = prop.f if component == "lesser" else prop.fbar
    fbar = prop.fbar if component == "lesser" else prop.f
    pole_map = {}
    for p in range(L):
        for q0 in range(L):
            for q1 in range(L):
                F = f[q0] * f[q1] * fbar[p]
                E = round(eps[q0] + eps[q1] - eps[p], 12)
                amp_d = v[:, p, q0, q1]
                amp_x = v[:, p, q1, q0]
                ref = np.conj(v[:, p, q0, q1])
                if which == "direct":
                    w = np.outer(amp_d, ref)
                elif which == "exchange":
                    w = -np.outer(amp_x, ref)
                else:
                    w = np.outer(amp_d - amp_x, ref)
                w = F * w
                if E in pole_map:
                    pole_map[E] += w
                else:
                    pole_map[E] = w
    energies = np.array(sorted(pole_map))
    weights = np.array([pole_map[e] for e in energies])
    return PoleSum(energies, weights).merged()


def self_consistent_spectra(spec, expansion, grid_spec, eta=None,
                            max_iter=20, damping=0.5, tol=1e-6):
    """Occupation-dressed fixed point of the spectral pipeline.

    The level occupations entering the Fermi factors (and the square
    roots on the cut legs) are recomputed from -iG^< each sweep with
    the given damping; iteration stops when the spectral grid moves by
    less than ``tol`` in the max norm.  Returns (result, history) where
    history records per-iterate occupations and the worst Gamma-pole
    eigenvalue, so PSD preservation along the iteration is observable.
    """
    occ = fermi(np.asarray(spec.levels) - spec.mu, spec.beta)
    prev = None
    history = []
    result = None
    for it in range(max_iter):
        prop = Propagator(spec, occ)
        sl = sigma_lesser(expansion, prop)
        sg = sigma_greater(expansion, prop)
        result = dyson_spectral(prop, sl, sg, grid_spec, eta=eta)
        gm = result.gamma_poles
        worst = psd_report(gm).worst
        history.append({"iteration": it, "occupations": occ.copy(),
                        "gamma_min_eig": worst})
        if prev is not None:
            delta = np.max(np.abs(result.spectral.values - prev))
            if delta < tol:
                break
        prev = result.spectral.values.copy()
        new_occ = np.clip(result.occupations(), 1e-12, 1.0 - 1e-12)
        occ = damping * new_occ + (1.0 - damping) * occ
    return result, history

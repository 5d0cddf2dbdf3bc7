"""Verification suites behind ``almosthermitian verify``.

Every suite takes a :class:`SuiteConfig` and returns a list of records
``{id, paper_anchor, residual, tolerance, pass}``; a record passes when
``residual <= tolerance``.  Exact checks carry tolerance 0.
"""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import ach_model as am
from . import connections as cn
from . import series_expansion as se
from . import variational as va
from .backends import SeriesBackend
from .lattice import (TorusLattice, flat_pair, random_pair, random_two_form, retract,
                      two_form_from_block)

SUITES = ("connections", "variational", "linearization", "indicial", "model", "expansion",
          "descent")
WORKERS_ENV = "ALMOSTHERMITIAN_WORKERS"
DATA = Path(__file__).parent / "data"

DEFAULT_TOLERANCES = {
    "connections": {"kahler": 1e-10, "torsion": 1e-8, "identities": 1e-7, "order_slope": 0.5},
    "variational": {"first_variation": 1e-4, "gateaux": 1e-4, "s_split": 1e-12},
    "linearization": {"dolbeault": 1e-7, "fourier_mode": 1e-7, "energy_exponent": 0.3,
                      "table": 1e-3, "family_member": 1e-8},
    "indicial": {"roots": 1e-12},
    "model": {},
    "expansion": {},
    "descent": {"s_ratio": 0.1},
}

# explicit steps at rate 0.1 lose stability once fields vary along all four axes
DESCENT_DEFAULTS = {"extent": 12, "steps": 200, "rate": 0.1, "field_axes": 2}


class ConfigError(ValueError):
    pass


@dataclass
class SuiteConfig:
    n: int = 2
    extent: int = 16
    fd_scheme: str = "order4"
    check_scheme: str = "spectral"
    seed: int = 0
    samples: int = 10
    suites: tuple = SUITES
    tolerances: dict = field(default_factory=dict)
    descent: dict = field(default_factory=lambda: dict(DESCENT_DEFAULTS))
    refinement: tuple = (8, 16, 32)
    field_axes: int = None
    timings: bool = True

    def tol(self, suite, key):
        return self.tolerances.get(suite, {}).get(key, DEFAULT_TOLERANCES[suite][key])

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(isinstance(self.n, int) and self.n >= 2, "n must be an integer >= 2")
        need(isinstance(self.extent, int) and self.extent >= 8 and self.extent % 2 == 0,
             "extent must be an even integer >= 8")
        for key in ("fd_scheme", "check_scheme"):
            need(getattr(self, key) in ("order2", "order4", "order6", "spectral"),
                 f"{key} must be one of order2, order4, order6, spectral")
        need(isinstance(self.seed, int), "seed must be an integer")
        need(isinstance(self.samples, int) and self.samples >= 1, "samples must be >= 1")
        if isinstance(self.suites, str):
            self.suites = (self.suites,)
        self.suites = tuple(self.suites)
        bad = [s for s in self.suites if s not in SUITES]
        need(not bad, f"unknown suites {bad}; choose from {list(SUITES)}")
        need(isinstance(self.tolerances, dict), "tolerances must be an object")
        for suite, tols in self.tolerances.items():
            need(suite in DEFAULT_TOLERANCES and isinstance(tols, dict),
                 f"tolerances: unknown suite {suite!r}")
            for key, v in tols.items():
                need(key in DEFAULT_TOLERANCES[suite], f"tolerances.{suite}: unknown key {key!r}")
                need(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0,
                     f"tolerances.{suite}.{key} must be positive")
        need(isinstance(self.descent, dict) and set(self.descent) <= set(DESCENT_DEFAULTS),
             "descent takes extent, steps, rate and field_axes")
        self.descent = {**DESCENT_DEFAULTS, **self.descent}
        need(all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
                 for v in self.descent.values()), "descent values must be positive")
        need(self.descent["field_axes"] <= 2 * self.n, "descent field_axes must be at most 2n")
        need(isinstance(self.refinement, (list, tuple)) and len(self.refinement) >= 2
             and all(isinstance(e, int) and e >= 8 and e % 2 == 0 for e in self.refinement),
             "refinement needs at least two even extents >= 8")
        self.refinement = tuple(self.refinement)
        need(isinstance(self.timings, bool), "timings must be true or false")
        need(self.field_axes is None or (isinstance(self.field_axes, int)
                                         and 1 <= self.field_axes <= 2 * self.n),
             "field_axes must be between 1 and 2n")


def record(rid, anchor, residual, tolerance, **detail):
    residual = float(residual)
    out = {"id": rid, "paper_anchor": anchor, "residual": residual,
           "tolerance": float(tolerance), "pass": bool(residual <= tolerance)}
    if detail:
        out["detail"] = detail
    return out


def _mx(x):
    return float(np.max(np.abs(x)))


def _rel(x, ref):
    return _mx(x) / _mx(ref)


def _rng(cfg, k=0):
    return np.random.default_rng([cfg.seed, k])


def field_modes(naxes):
    """Wave vectors for random fields: constant, each axis, and neighbouring-axis pairs."""
    eye = np.eye(naxes, dtype=int)
    modes = [np.zeros(naxes, dtype=int)] + list(eye)
    modes += [eye[i] + eye[(i + 1) % naxes] for i in range(0, naxes, 2)]
    return tuple(tuple(int(v) for v in m) for m in modes)


def field_kw(cfg, n=None):
    naxes = cfg.field_axes or 2 * (n or cfg.n)
    return {"modes": field_modes(naxes), "axes": tuple(range(naxes))}


def perturbed_pair(cfg, k, extent=None, amplitude=0.3):
    lat = TorusLattice(cfg.n, extent or cfg.extent)
    return random_pair(lat, _rng(cfg, k), amplitude=amplitude, **field_kw(cfg))


# -- connections ----------------------------------------------------------------

def flat_checks(n, extent, scheme):
    pair = flat_pair(TorusLattice(n, extent))
    st = va.Structure.of_pair(pair, scheme)
    return {"N": _mx(st.tors.N), "T": _mx(st.tors.T), "tau": _mx(st.tors.tau),
            "S": _mx(va.s_tensor(st)), "E": abs(va.energy(pair, scheme=scheme, struct=st))}


def torsion_convention_residuals(pair, scheme):
    n = pair.n
    lc = cn.levi_civita(pair, scheme)
    lich = cn.lichnerowicz(pair, scheme, lc=lc)
    _, tors = cn.ehresmann_libermann(pair, scheme, lich=lich)
    geom = lc.geom
    t_mixed = np.einsum("...kd,...idj->...kij", geom.Ginv, tors.t_low)
    r_t = _mx(cn.block(lc.gamma + 0.5 * t_mixed, "UUB", n))
    r_n = _mx(cn.block(tors.N, "BUU", n) + cn.block(geom.C, "BUU", n))
    return r_t, r_n


def identity_residuals(pair, scheme):
    el, tors = cn.ehresmann_libermann(pair, scheme)
    out = cn.bianchi_residuals(cn.curvature(el), tors, el)
    out.update(cn.form_identities(pair, scheme))
    return out


def refinement_slopes(cfg, keys=("bianchi_21", "bianchi_12", "divergence")):
    extents = list(cfg.refinement)
    res = {k: [] for k in keys}
    for extent in extents:
        pair = random_pair(TorusLattice(cfg.n, extent), _rng(cfg, 100), amplitude=0.1)
        r = identity_residuals(pair, cfg.fd_scheme)
        for k in keys:
            res[k].append(r[k])
    h = np.log(2 * np.pi / np.array(extents))
    return {k: (float(np.polyfit(h, np.log(v), 1)[0]), v) for k, v in res.items()}


NOMINAL_ORDER = {"order2": 2, "order4": 4, "order6": 6}

IDENTITY_ANCHORS = {
    "bianchi_30": "first Bianchi identity, (3,0) part",
    "bianchi_21": "first Bianchi identity, (2,1) part",
    "bianchi_12": "first Bianchi identity, (1,2) part",
    "bianchi_03": "first Bianchi identity, (0,3) part",
    "dF": "exterior derivative of the fundamental form through N and T",
    "dstarF": "codifferential of the fundamental form through tau",
    "tau_from_dstarF": "tau recovered from the codifferential of F",
    "divergence": "integration by parts with the tau-corrected divergence",
}


def suite_connections(cfg):
    recs = []
    tol = cfg.tol("connections", "kahler")
    for key, r in flat_checks(cfg.n, cfg.extent, cfg.fd_scheme).items():
        recs.append(record(f"kahler_flat_{key}", "flat torus: Kahler structure has vanishing "
                           "torsion, gradient and energy", r, tol))
    tol = cfg.tol("connections", "torsion")
    for k in range(cfg.samples):
        pair = perturbed_pair(cfg, k)
        r_t, r_n = torsion_convention_residuals(pair, cfg.fd_scheme)
        recs.append(record(f"torsion_T_levi_civita_{k}", "mixed Levi-Civita coefficients "
                           "equal -1/2 T", r_t, tol))
        recs.append(record(f"torsion_N_brackets_{k}", "Nijenhuis tensor from torsion equals "
                           "the bracket projection", r_n, tol))
    tol = cfg.tol("connections", "identities")
    pair = perturbed_pair(cfg, 50)
    for key, r in identity_residuals(pair, cfg.check_scheme).items():
        recs.append(record(f"identity_{key}", IDENTITY_ANCHORS[key], r, tol))
    if cfg.fd_scheme in NOMINAL_ORDER:
        order = NOMINAL_ORDER[cfg.fd_scheme]
        tol = cfg.tol("connections", "order_slope")
        for key, (slope, res) in refinement_slopes(cfg).items():
            recs.append(record(f"refinement_slope_{key}", "structural identity residuals "
                               "converge at the nominal difference order",
                               abs(slope - order), tol, slope=slope, residuals=res,
                               extents=list(cfg.refinement)))
    return recs


# -- variational ----------------------------------------------------------------

def variational_pair(cfg, k):
    lat = TorusLattice(cfg.n, cfg.extent)
    rng = _rng(cfg, 200 + k)
    kw = field_kw(cfg)
    return (random_pair(lat, rng, amplitude=0.3, **kw),
            random_two_form(lat, rng, amplitude=0.3, **kw))


def first_variation_errors(base, A, scheme, t=1e-3):
    st = va.Structure.of_pair(base, scheme)
    exact = va.first_variations(st, A)
    fd = va.fd_variations(base, A, t, scheme)
    return {k: _rel(fd[k] - exact[k], exact[k]) for k in ("gamma", "N", "T", "tau")}


EL_KEYS = {"nsym": "nsym2", "nskew": "nskew2", "T": "t2", "tau": "tau2"}


def gateaux_errors(base, A, scheme, t=1e-3):
    lat = base.lattice
    st = va.Structure.of_pair(base, scheme)
    terms = va.termwise_el(st)
    sides = [va.Structure.of_pair(retract(base, A, sign * t), scheme) for sign in (1, -1)]
    plus, minus = (va.densities(s) for s in sides)

    def fd(f):
        return (va._integral(sides[0], f(plus), lat) - va._integral(sides[1], f(minus), lat)) / (2 * t)

    out = {}
    for key, attr in EL_KEYS.items():
        d = fd(lambda rec: getattr(rec, attr))
        out[key] = abs(d - va.gateaux(st, terms[key], A, lat)) / abs(d)
    d = fd(lambda rec: rec.combination(va.STANDARD))
    out["standard"] = abs(d - va.gateaux(st, va.combine_el(terms, va.STANDARD), A, lat)) / abs(d)
    split = _mx(va.s_tensor(st) - terms["N"] - 0.5 * terms["tau"])
    return out, split


def suite_variational(cfg):
    recs = []
    tol = cfg.tol("variational", "first_variation")
    for k in range(cfg.samples):
        base, A = variational_pair(cfg, k)
        for key, r in first_variation_errors(base, A, cfg.check_scheme).items():
            recs.append(record(f"first_variation_{key}_{k}", f"first variation of {key} "
                               "against central differences", r, tol))
    base, A = variational_pair(cfg, 0)
    errs, split = gateaux_errors(base, A, cfg.check_scheme)
    tol = cfg.tol("variational", "gateaux")
    for key, r in errs.items():
        recs.append(record(f"gateaux_{key}", "Euler-Lagrange tensor reproduces the "
                           "directional derivative of the energy", r, tol))
    recs.append(record("s_split", "S is the N part plus half the tau part", split,
                       cfg.tol("variational", "s_split")))
    return recs


# -- linearization -------------------------------------------------------------

def smooth_direction(lat, rng, **kw):
    return random_two_form(lat, rng, amplitude=1.0, **kw)


def fourier_mode_residual(base, st):
    n = base.n
    u = base.lattice.coordinate(0)
    blk = np.zeros(u.shape + (n, n), complex)
    blk[..., 0, 1] = np.exp(1j * u)
    blk[..., 1, 0] = -np.exp(1j * u)
    A = two_form_from_block(blk)
    return _mx(va.linearized_ps(st, A) - 0.25 * A[..., :n, :n])


def energy_exponent(base, A, scheme, ts=(1e-1, 3e-2, 1e-2)):
    st = va.Structure.of_pair(base, scheme)
    pairing = va.dolbeault_pairing(st, A, base.lattice)
    errs = [abs(va.energy(retract(base, A, t), scheme=scheme) - 0.5 * t * t * pairing)
            for t in ts]
    return float(np.polyfit(np.log(ts), np.log(errs), 1)[0])


def lattice_table_fit(extent, seed, scheme, samples=2, t=1e-3):
    """Fit the second-variation table on a flat n=3 torus (lambda column unidentified)."""
    lat = TorusLattice(3, extent)
    base = flat_pair(lat)
    st = va.Structure.of_pair(base, scheme)
    rng = np.random.default_rng(seed)
    data = []
    for _ in range(samples):
        A = random_two_form(lat, rng, amplitude=1.0)
        data.append((va.fd_second_variations(base, A, t, scheme),
                     va.second_variation_basis(st, A)))
    return va.fit_second_variation_table(data)


def combined_table(lattice_fit, model_fit):
    out = lattice_fit.copy()
    out[:, 1] = model_fit[:, 1]
    return out


def suite_linearization(cfg):
    recs = []
    lat = TorusLattice(cfg.n, cfg.extent)
    base = flat_pair(lat)
    st = va.Structure.of_pair(base, cfg.check_scheme)
    tol = cfg.tol("linearization", "dolbeault")
    rng = _rng(cfg, 300)
    directions = [smooth_direction(lat, rng, **field_kw(cfg)) for _ in range(cfg.samples)]
    for k, A in enumerate(directions):
        r = _mx(va.linearized_ps(st, A) - 0.5 * va.dolbeault_as_two_form(st, A)) / _mx(A)
        recs.append(record(f"ps_half_dolbeault_{k}", "linearized gradient equals half the "
                           "Dolbeault Laplacian at a Kahler point", r, tol))
    recs.append(record("fourier_mode", "single Fourier mode is an eigenvector with eigenvalue 1/4",
                       fourier_mode_residual(base, st), cfg.tol("linearization", "fourier_mode")))
    slope = energy_exponent(base, directions[0], cfg.check_scheme)
    recs.append(record("energy_quadratic_exponent", "energy is quadratic in t with the Dolbeault "
                       "pairing as Hessian (residual: shortfall of the fitted exponent from 3)",
                       max(0.0, 3.0 - slope), cfg.tol("linearization", "energy_exponent"),
                       exponent=slope))
    fam = va.characterize_family()
    r = max(_mx(np.subtract(fam.base, (1.0, 1.0, 0.0, 0.5))),
            _mx(np.subtract(fam.direction, (1.0, -3.0, 1.0, -2.0))))
    recs.append(record("family_exact", "energies sharing the second variation of the standard "
                       "energy form the line (1+s, 1-3s, s, 1/2-2s)", r, 0.0,
                       base=list(fam.base), direction=list(fam.direction)))
    model_fit = va.fit_second_variation_table(se.second_variation_samples(3, seed=cfg.seed))
    lat_fit = lattice_table_fit(min(cfg.extent, 12), cfg.seed, cfg.check_scheme)
    table = combined_table(lat_fit, model_fit)
    tol = cfg.tol("linearization", "table")
    recs.append(record("second_variation_table_fit", "second-variation coefficient table fitted "
                       "from finite differences (lattice for derivative columns, complex "
                       "hyperbolic model for the Einstein column)",
                       _mx(table - va.SECOND_VARIATION_TABLE), tol, table=table.tolist()))
    recs.append(record("second_variation_table_model", "second-variation coefficient table "
                       "fitted on the complex hyperbolic model alone",
                       _mx(model_fit - va.SECOND_VARIATION_TABLE), tol))
    A = directions[0]
    ps = va.linearized_ps(st, A)
    member = va.combine_el(va.second_variations(st, A), fam.at(0.0))
    recs.append(record("family_member_reproduces_ps", "the s=0 member of the family has the "
                       "linearized gradient of the standard energy", _rel(member - ps, ps),
                       cfg.tol("linearization", "family_member")))
    return recs


# -- indicial ------------------------------------------------------------------

def suite_indicial(cfg):
    n = cfg.n
    d = am.indicial_data(n)
    tol = cfg.tol("indicial", "roots")
    recs = []
    closed = {"0a": np.sqrt(n * n + 2 * n + 5), "ab": np.sqrt(n * n + 8)}
    for block, roots in d.roots.items():
        r = max(abs(roots[0] - (n - closed[block])), abs(roots[1] - (n + closed[block])))
        recs.append(record(f"indicial_roots_{block}", f"indicial roots of the {block} block",
                           r, tol, roots=roots, exact=d.exact_roots[block]))
    recs.append(record("indicial_radius", "indicial radius sqrt(n^2+8)",
                       abs(d.radius - closed["ab"]), tol, radius=d.radius))
    for s in (0, 1, 2, 2 * n - 1):
        for block, r in am.radial_indicial_check(n, s).items():
            if r is None:
                continue
            recs.append(record(f"radial_check_{block}_s{s}", "radial model operator acts on "
                               "x^s A by the indicial polynomial (exact)", r, 0.0,
                               value=_json_scalar(am.indicial_value(n, s, block))))
    return recs


def _json_scalar(v):
    c = complex(v) if not hasattr(v, "x") else complex(float(v.x), float(v.y))
    return c.real if c.imag == 0 else [c.real, c.imag]


# -- model ---------------------------------------------------------------------

def _model_data(n):
    return DATA / f"torsion_n{n}.json"


def suite_model(cfg):
    n = cfg.n
    recs = []
    el = am.chn_christoffels(n)
    be = el.geom.be
    table = chn_reference_table(n)
    recs.append(record("chn_christoffel_table", "complex hyperbolic Christoffel table in the "
                       "model frame (exact)", be.maxabs(el.gamma[0] - be.convert(table)), 0.0))
    geom = am.model_geometry(am.chn_data(n), max_degree=2)
    st = am.structure(geom)
    recs.append(record("chn_ricci", "complex hyperbolic space is Einstein with Ric = -(n+1) g "
                       "(exact)", geom.be.maxabs(am.einstein_defect(st, -(n + 1))), 0.0))
    path = _model_data(n)
    if path.exists():
        tw = am.TWBoundaryData.load(path)
        ms = am.model_structure(tw, max_degree=4)
        mbe = ms.geometry.be
        recs.append(record("model_torsion_table", "model torsion N^cbar_0b = i x^2 A and "
                           "N^cbar_ab = x Nhat (exact)",
                           mbe.maxabs(ms.torsion.N - am.torsion_table(ms)), 0.0, data=path.name))
        recs.append(record("model_T_vanishes", "model has vanishing T (exact)",
                           mbe.maxabs(ms.torsion.T), 0.0))
        recs.append(record("model_S_order_x", "model gradient vanishes at degree 0 (exact)",
                           mbe.maxabs(ms.s_series()[:1]), 0.0))
    return recs


def chn_reference_table(n):
    """Christoffel symbols of CH^n in the model frame, entry by entry.

    ``out[k, i, j]`` is the coefficient of ``E_k`` in ``nabla_{E_i} E_j``; the
    barred rows follow by conjugation.
    """
    from fractions import Fraction
    half = Fraction(1, 2)
    dim = 2 * n
    out = np.zeros((dim, dim, dim), dtype=object)
    out[...] = 0
    for k in range(n):
        for i in range(dim):
            bar = i >= n
            ii = i - n if bar else i
            for j in range(n):
                if k == 0 and j == 0:
                    v = {(0, False): -1, (0, True): 1}.get((ii, bar), 0)
                elif j == 0:
                    v = -1 if (not bar and ii == k) else 0
                elif k == 0:
                    v = half if (bar and ii == j) else 0
                elif ii == 0 and k == j:
                    v = half if bar else -half
                else:
                    v = 0
                out[k, i, j] = v
                # conjugate: nabla_{conj E_i} conj E_j
                out[k + n, (i + n) % dim, j + n] = v
    return out


# -- expansion -----------------------------------------------------------------

def expansion_checks(tw, g=None, split="truncate"):
    g = se.model_metric_series(tw) if g is None else g
    t0 = time.perf_counter()
    state = se.solve_expansion(g, tw, split=split)
    elapsed = time.perf_counter() - t0
    check = se.verify_state(state, g, tw)
    be = SeriesBackend(tw.n, 2 * tw.n)
    corrections = max([be.maxabs(r["A"]) for r in state.orders]
                      + [be.maxabs(r["B"]) for r in state.orders if "B" in r])
    dens = [se.indicial_denominators(tw.n, r["l"]) for r in state.orders]
    return state, check, corrections, dens, elapsed


def suite_expansion(cfg):
    n = cfg.n
    recs = []
    tw = am.TWBoundaryData.heisenberg(n)
    state, check, corr, _, _ = expansion_checks(tw)
    recs.append(record("heisenberg_zero_corrections", "the complex hyperbolic model needs no "
                       "corrections (exact)", corr, 0.0))
    recs.append(record("heisenberg_S_vanishes", "the complex hyperbolic model is critical (exact)",
                       SeriesBackend(n, 2 * n).maxabs(state.S), 0.0))
    inputs = []
    if _model_data(n).exists():
        inputs.append((f"torsion_n{n}", am.TWBoundaryData.load(_model_data(n)), None))
    inputs.append(("perturbed_metric", tw, se.perturbed_metric(tw, range(1, 2 * n), seed=cfg.seed)))
    for name, data, g in inputs:
        state, check, corr, dens, _ = expansion_checks(data, g)
        low = check["S_low_degrees_nonzero"]
        recs.append(record(f"{name}_S_vanishes", "recomputed gradient vanishes through degree "
                           "2n-1 (exact)", len(low), 0, nonzero_degrees=low,
                           orders=[r["l"] for r in state.orders]))
        recs.append(record(f"{name}_compatible", "solution is an almost complex structure "
                           "compatible with the metric (exact)",
                           max(check["J_squared"], check["metric_invariance"]), 0.0))
        zero_den = sum(1 for d in dens for v in d.values() if v == 0)
        recs.append(record(f"{name}_denominators", "indicial denominators l^2-2nl-c are nonzero "
                           "for l = 1..2n-1", zero_den, 0,
                           denominators=[{"l": r["l"], **d} for r, d in zip(state.orders, dens)]))
    return recs


# -- descent -------------------------------------------------------------------

def suite_descent(cfg):
    d = cfg.descent
    lat = TorusLattice(cfg.n, d["extent"])
    pair = random_pair(lat, _rng(cfg, 400), amplitude=0.1,
                       **field_kw(SuiteConfig(n=cfg.n, field_axes=d["field_axes"])))
    traj = va.gradient_descend(pair, d["steps"], d["rate"], scheme=cfg.check_scheme)
    E = np.array([r["E"] for r in traj.records])
    S = np.array([r["S_norm"] for r in traj.records])
    increase = float(max(0.0, np.max(np.diff(E)))) / E[0] if len(E) > 1 else 0.0
    return [
        record("descent_monotone", "energy decreases along the discrete gradient flow "
               "(residual: largest relative increase)", increase, 0.0, halted=traj.halted,
               E_first=float(E[0]), E_last=float(E[-1])),
        record("descent_s_ratio", "gradient norm drops by the required factor (residual: final "
               "over initial norm)", S[-1] / S[0], cfg.tol("descent", "s_ratio"),
               steps=len(E) - 1, S_first=float(S[0]), S_last=float(S[-1])),
    ]


RUNNERS = {"connections": suite_connections, "variational": suite_variational,
           "linearization": suite_linearization, "indicial": suite_indicial,
           "model": suite_model, "expansion": suite_expansion, "descent": suite_descent}


def workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _timed(name, cfg):
    t0 = time.perf_counter()
    recs = RUNNERS[name](cfg)
    return recs, time.perf_counter() - t0


def run(cfg):
    """Run the selected suites; report assembly is in suite order whatever the concurrency."""
    names = [s for s in SUITES if s in cfg.suites]
    nworkers = min(workers(), max(1, len(names)))
    if nworkers > 1:
        with ThreadPoolExecutor(nworkers) as pool:
            results = list(pool.map(lambda s: _timed(s, cfg), names))
    else:
        results = [_timed(s, cfg) for s in names]
    report = {"config": config_summary(cfg), "suites": {}, "summary": {}}
    total = passed = 0
    for name, (recs, elapsed) in zip(names, results):
        ok = sum(r["pass"] for r in recs)
        entry = {"records": recs, "passed": ok, "failed": len(recs) - ok}
        if cfg.timings:
            entry["seconds"] = elapsed
        report["suites"][name] = entry
        total += len(recs)
        passed += ok
    report["summary"] = {"total": total, "passed": passed, "failed": total - passed,
                         "pass": passed == total}
    return report


def config_summary(cfg):
    return {"n": cfg.n, "extent": cfg.extent, "fd_scheme": cfg.fd_scheme,
            "check_scheme": cfg.check_scheme, "seed": cfg.seed, "samples": cfg.samples,
            "suites": [s for s in SUITES if s in cfg.suites], "descent": dict(cfg.descent),
            "refinement": list(cfg.refinement), "field_axes": cfg.field_axes or 2 * cfg.n,
            "tolerances": {s: {k: cfg.tol(s, k) for k in DEFAULT_TOLERANCES[s]}
                           for s in SUITES if s in cfg.suites}}

"""The twelve acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary).  A
criterion whose literal statement cannot hold is reported as FAIL, with the
attainable parts asserted and the literal part kept as a strict xfail.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from almosthermitian import ach_model as am
from almosthermitian import connections as cn
from almosthermitian import series_expansion as se
from almosthermitian import suites as su
from almosthermitian import variational as va
from almosthermitian.backends import SeriesBackend
from almosthermitian.lattice import TorusLattice, flat_pair, random_pair

ACCEPTANCE_LINES = {}
CFG = su.SuiteConfig()


def report(number, ok, text):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def timed(f, *args, **kw):
    t0 = time.perf_counter()
    out = f(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_01_kahler_sanity():
    res, dt = timed(su.flat_checks, 2, 16, "order4")
    ok = max(res.values()) <= 1e-10 and dt <= 5
    report(1, ok, f"flat torus max(N,T,tau,S,E) = {max(res.values()):.1e} (<= 1e-10), "
               f"{dt:.2f} s (<= 5 s)")
    assert ok


def test_criterion_02_torsion_conventions():
    worst = 0.0
    for k in range(10):
        pair = su.perturbed_pair(CFG, k)
        worst = max(worst, *su.torsion_convention_residuals(pair, "order4"))
    ok = worst <= 1e-8
    report(2, ok, f"T from Levi-Civita and N from brackets, 10 pairs: max residual "
                  f"{worst:.1e} (<= 1e-8), fields varying along all four axes")
    assert ok


def test_criterion_03_first_variations():
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(10):
        base, A = su.variational_pair(CFG, k)
        worst = max(worst, *su.first_variation_errors(base, A, "spectral").values())
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and dt <= 120
    report(3, ok, f"Gammadot, Ndot, Tdot, taudot vs central differences (t = 1e-3, 10 pairs, "
                  f"extent 16): max relative error {worst:.1e} (<= 1e-4), {dt:.1f} s (<= 120 s)")
    assert ok


def test_criterion_04_euler_lagrange():
    base, A = su.variational_pair(CFG, 0)
    errs, split = su.gateaux_errors(base, A, "spectral")
    ok = max(errs.values()) <= 1e-4 and split <= 1e-12
    report(4, ok, f"Gateaux derivatives of nsym, nskew, T, tau and (1,1,0,1/2): max relative "
                  f"error {max(errs.values()):.1e} (<= 1e-4); S split {split:.1e} (<= 1e-12)")
    assert ok


def _flat(extent=16):
    base = flat_pair(TorusLattice(2, extent))
    return base, va.Structure.of_pair(base, "spectral")


def test_criterion_05_linearization():
    base, st = _flat()
    rng = su._rng(CFG, 300)
    worst = 0.0
    for _ in range(10):
        A = su.smooth_direction(base.lattice, rng, **su.field_kw(CFG))
        r = su._mx(va.linearized_ps(st, A) - 0.5 * va.dolbeault_as_two_form(st, A)) / su._mx(A)
        worst = max(worst, r)
    mode = su.fourier_mode_residual(base, st)
    ok = worst <= 1e-7 and mode <= 1e-7 and va.einstein_constant(st) == 0
    report(5, ok, f"P_S - Dolbeault/2 over 10 fields: {worst:.1e} (<= 1e-7); e^(iu) mode "
                  f"eigenvalue 1/4: {mode:.1e} (<= 1e-7)")
    assert ok


def test_criterion_06_energy_quadratic():
    base, _ = _flat()
    A = su.smooth_direction(base.lattice, su._rng(CFG, 300), **su.field_kw(CFG))
    slope = su.energy_exponent(base, A, "spectral")
    ok = slope >= 2.7
    report(6, ok, f"|E - t^2/2 (Delta A, A)| fitted exponent {slope:.3f} (>= 2.7)")
    assert ok


RADIAL_S = (0, 1, Fraction(3, 2))


def _indicial_work():
    roots_err = radius_err = radial = 0.0
    for n in (2, 3, 4):
        d = am.indicial_data(n)
        c0, c1 = np.sqrt(n * n + 2 * n + 5), np.sqrt(n * n + 8)
        roots_err = max(roots_err, abs(d.roots["0a"][0] - (n - c0)), abs(d.roots["0a"][1] - (n + c0)),
                        abs(d.roots["ab"][0] - (n - c1)), abs(d.roots["ab"][1] - (n + c1)))
        radius_err = max(radius_err, abs(d.radius - c1))
        for s in RADIAL_S + (2 * n - 1,):
            radial = max(radial, *(r for r in am.radial_indicial_check(n, s).values()
                                   if r is not None))
    return roots_err, radius_err, radial


def _quarter_scale_residual():
    return max(r for n in (2, 3, 4) for s in RADIAL_S
               for r in am.radial_indicial_check(n, s, scale=Fraction(-1, 4)).values()
               if r is not None)


def test_criterion_07_indicial():
    am.indicial_data(2)  # import warm-up outside the timed region
    (roots_err, radius_err, radial), dt = timed(_indicial_work)
    quarter = _quarter_scale_residual()
    attainable = roots_err <= 1e-12 and radius_err <= 1e-12 and radial == 0 and dt <= 1
    report(7, attainable and quarter == 0,
           f"roots {roots_err:.1e}, radius {radius_err:.1e} (<= 1e-12), {dt:.2f} s (<= 1 s); "
           f"radial series check with factor -1/8 exact (residual {radial}); with the stated "
           f"factor -1/4 the residual is {quarter:.4g}, not 0 (see decisions ledger)")
    assert attainable


@pytest.mark.xfail(strict=True, reason="the operator acts by -1/8 (s^2-2ns-c), not -1/4")
def test_criterion_07_stated_quarter_factor():
    assert _quarter_scale_residual() == 0


def test_criterion_08_model_tables():
    worst = 0.0
    for n in (2, 3):
        el = am.chn_christoffels(n)
        be = el.geom.be
        worst = max(worst, be.maxabs(el.gamma[0] - be.convert(su.chn_reference_table(n))),
                    be.maxabs(el.gamma[1:]))
        geom = am.model_geometry(am.chn_data(n), max_degree=2)
        worst = max(worst, geom.be.maxabs(am.einstein_defect(am.structure(geom), -(n + 1))))
        ms = am.model_structure(am.TWBoundaryData.load(su.DATA / f"torsion_n{n}.json"),
                                max_degree=4)
        mbe = ms.geometry.be
        assert mbe.maxabs(am.torsion_table(ms)) > 0
        worst = max(worst, mbe.maxabs(ms.torsion.N - am.torsion_table(ms)),
                    mbe.maxabs(ms.torsion.T), mbe.maxabs(ms.s_series()[:1]))
    ok = worst == 0
    report(8, ok, f"CH^n Christoffel table, Ric = -(n+1)g, model torsion N = i x^2 A, T = 0, "
                  f"S = O(x) for n = 2, 3: max exact residual {worst}")
    assert ok


def test_criterion_09_expansion():
    lines, ok = [], True
    for n in (2, 3):
        heis = am.TWBoundaryData.heisenberg(n)
        (state, check, corr, _, _), dt = timed(su.expansion_checks, heis)
        good = corr == 0 and SeriesBackend(n, 2 * n).is_zero(state.S) and dt <= 30
        ok &= good
        lines.append(f"CH^{n} corrections {corr} S=0 {dt:.1f}s")
        inputs = [(f"torsion_n{n}", am.TWBoundaryData.load(su.DATA / f"torsion_n{n}.json"), None),
                  ("perturbed", heis, se.perturbed_metric(heis, range(1, 2 * n), seed=0))]
        for name, tw, g in inputs:
            (state, check, corr, dens, _), dt = timed(su.expansion_checks, tw, g)
            good = (check["S_vanishes"] and check["J_squared"] == 0
                    and check["metric_invariance"] == 0 and dt <= 30
                    and [r["l"] for r in state.orders] == list(range(1, 2 * n))
                    and all(v != 0 for d in dens for v in d.values()))
            if n == 2:
                good &= dens[0] == {"0a": -12, "ab": -11}
            ok &= good
            lines.append(f"{name} S lowest degree {check['S_lowest_degree']} {dt:.1f}s")
    report(9, ok, "; ".join(lines) + " (S vanishes through 2n-1, each <= 30 s)")
    assert ok


def test_criterion_10_characterization():
    fam = va.characterize_family()
    exact = fam.base == (1.0, 1.0, 0.0, 0.5) and fam.direction == (1.0, -3.0, 1.0, -2.0)
    model_fit = va.fit_second_variation_table(se.second_variation_samples(3))
    lat_fit = su.lattice_table_fit(12, 0, "spectral")
    table_err = su._mx(su.combined_table(lat_fit, model_fit) - va.SECOND_VARIATION_TABLE)
    base, st = _flat()
    A = su.smooth_direction(base.lattice, su._rng(CFG, 300), **su.field_kw(CFG))
    ps = va.linearized_ps(st, A)
    member = su._rel(va.combine_el(va.second_variations(st, A), fam.at(0.0)) - ps, ps)
    ok = exact and table_err <= 1e-3 and member <= 1e-8
    report(10, ok, f"family (1+s, 1-3s, s, 1/2-2s) exact: {exact}; fitted table entry error "
                   f"{table_err:.1e} (<= 1e-3); s=0 member vs P_S {member:.1e} (<= 1e-8)")
    assert ok


def test_criterion_11_descent():
    d = su.DESCENT_DEFAULTS
    pair = random_pair(TorusLattice(2, d["extent"]), su._rng(CFG, 400), amplitude=0.1,
                       **su.field_kw(su.SuiteConfig(field_axes=d["field_axes"])))
    traj, dt = timed(va.gradient_descend, pair, 200, 0.1, scheme="spectral")
    E = np.array([r["E"] for r in traj.records])
    S = np.array([r["S_norm"] for r in traj.records])
    monotone = bool(np.all(np.diff(E) <= 0))
    ratio = S[0] / S[-1]
    ok = monotone and ratio >= 10 and dt <= 180 and not traj.halted
    report(11, ok, f"200 steps at rate 0.1: E monotone {monotone}, |S| drop {ratio:.0f}x "
                   f"(>= 10x), {dt:.1f} s (<= 180 s); start varies along two axes")
    assert ok


def test_criterion_12_structural_identities():
    worst = 0.0
    unhalved = 0.0
    for k in range(3):
        pair = su.perturbed_pair(CFG, 500 + k)
        worst = max(worst, *su.identity_residuals(pair, "spectral").values())
        el, tors = cn.ehresmann_libermann(pair, "spectral")
        geom = el.geom
        dF = cn.exterior_derivative_2form(geom, cn.fundamental_form(geom))
        unhalved = max(unhalved, su._mx(dF - 2 * cn.df_closed_form(geom, tors)))
    slopes = su.refinement_slopes(CFG)
    slope_err = max(abs(s - 4) for s, _ in slopes.values())
    ok = worst <= 1e-7 and slope_err <= 0.5
    fitted = ", ".join(f"{k} {s:.2f}" for k, (s, _) in slopes.items())
    report(12, ok, f"Bianchi, dF, d*F, integration by parts on 3 pairs: {worst:.1e} (<= 1e-7); "
                   f"order4 slopes {fitted} (4 +- 0.5); dF with the unhalved coefficient "
                   f"would leave {unhalved:.2f}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

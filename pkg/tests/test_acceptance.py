"""Acceptance criteria, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v`` (the PASS/FAIL lines appear in
the terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import time

import numpy as np

from dro_sens.cli import asian_figure
from dro_sens.continuous import (SigmaSpec, UtilitySpec, upsilon_hyperbolic,
                                 upsilon_mart_parabolic)
from dro_sens.core import (CostSpec, check_martingale, enumerate_paths, random_martingale_lattice,
                           random_walk, sample_brownian, sample_lattice)
from dro_sens.discrete import adversarial_map, upsilon, upsilon_mart, v_map
from dro_sens.malliavin import discrete_malliavin
from dro_sens.oracle import slope_check
from dro_sens.payoffs import asian, cubic, linear, log_contract, merton, quad_var
from dro_sens.penalty import Penalty
from dro_sens.projection import (lq_predictable_projection, optional_projection,
                                 predictable_projection, regression_bootstrap_se,
                                 regression_projection)

# (K, upsilon_mart, parametric) on the N = 10 symmetric walk. Computed once with
# exact rational arithmetic over all 1024 paths, independently of the package.
ASIAN_GOLDEN = [
    (-4.761904761904762, 0.01315119615564006, 0.0030320133815534885),
    (-4.285714285714286, 0.027313467865123797, 0.007215068880178209),
    (-3.8095238095238093, 0.05479289486163259, 0.018472822269094403),
    (-3.3333333333333335, 0.09166395458983286, 0.039107357782444535),
    (-2.857142857142857, 0.12230301296601649, 0.05912426094029303),
    (-2.380952380952381, 0.1730999134743663, 0.09553649571691224),
    (-1.9047619047619047, 0.22560223566285403, 0.13792853466270638),
    (-1.4285714285714286, 0.2579093004297282, 0.1661711778279176),
    (-0.9523809523809523, 0.2981448102767902, 0.20207807704094455),
    (-0.47619047619047616, 0.3159370005861287, 0.21864185384757934),
    (0.0, 0.3260550454677464, 0.22852397153560552),
    (0.47619047619047616, 0.3159370005861287, 0.21864185384757934),
    (0.9523809523809523, 0.2981448102767902, 0.20207807704094455),
    (1.4285714285714286, 0.2579093004297282, 0.1661711778279176),
    (1.9047619047619047, 0.22560223566285403, 0.13792853466270638),
    (2.380952380952381, 0.1730999134743663, 0.09553649571691224),
    (2.857142857142857, 0.12230301296601649, 0.05912426094029303),
    (3.3333333333333335, 0.09166395458983286, 0.039107357782444535),
    (3.8095238095238093, 0.05479289486163259, 0.018472822269094403),
    (4.285714285714286, 0.027313467865123797, 0.007215068880178209),
    (4.761904761904762, 0.01315119615564006, 0.0030320133815534885),
]


def _line(tag, ok, detail):
    return f"{tag}: {'PASS' if ok else 'FAIL'} {detail}"


def criterion_1():
    t0 = time.perf_counter()
    wp = sample_brownian(1.0, 64, 1, 100_000, seed=0)
    rep = upsilon_hyperbolic(wp, merton(0.5, T=1.0), 2.0, Penalty.indicator(1.0))
    dt = time.perf_counter() - t0
    ok = abs(rep.upsilon - 0.5) <= 0.005 and dt < 10
    return ok, _line("criterion 1 (Merton hyperbolic)", ok,
                     f"upsilon={rep.upsilon:.12g} target=0.5+-0.005 time={dt:.2f}s<10s")


def criterion_2():
    t0 = time.perf_counter()
    wp = sample_brownian(1.0, 64, 1, 100_000, seed=0)
    rep = upsilon_mart_parabolic(wp, SigmaSpec.constant(0.2), UtilitySpec.quad(),
                                 Penalty.indicator(1.0))
    dt = time.perf_counter() - t0
    ok = abs(rep.upsilon - 0.04) <= 0.0008 and dt < 30
    return ok, _line("criterion 2 (log contract)", ok,
                     f"upsilon_mart={rep.upsilon:.12g} target=0.04+-0.0008 time={dt:.2f}s<30s")


def criterion_3():
    t0 = time.perf_counter()
    wp = sample_brownian(1.0, 64, 1, 100_000, seed=0)
    rep = upsilon_mart_parabolic(wp, SigmaSpec.constant(1.0), UtilitySpec.quad(),
                                 Penalty.indicator(1.0))
    dt = time.perf_counter() - t0
    ok = abs(rep.upsilon - 1.0) <= 0.01 and dt < 30
    return ok, _line("criterion 3 (quadratic variation)", ok,
                     f"upsilon_mart={rep.upsilon:.12g} target=1+-0.01 time={dt:.2f}s<30s")


def criterion_4():
    t0 = time.perf_counter()
    rows, gap = asian_figure(10, 21)
    dt = time.perf_counter() - t0
    got = np.array([r[:3] for r in rows])
    err = float(np.max(np.abs(got - np.array(ASIAN_GOLDEN))))
    dominance = bool(np.all(got[:, 1] >= got[:, 2]))
    ok = dominance and err <= 1e-12 and dt < 5 and len(rows) == 21
    return ok, _line("criterion 4 (Asian figure)", ok,
                     f"dominance={dominance} max_golden_err={err:.2e}<=1e-12 "
                     f"atom_gap={gap:.3g} time={dt:.2f}s<5s")


def criterion_5():
    t0 = time.perf_counter()
    deltas = (0.1, 0.05, 0.025, 0.0125)
    s_a, rep_a = slope_check(random_walk(3), linear(1.5), deltas=deltas)
    s_b, rep_b = slope_check(random_walk(2), cubic(0.1), deltas=deltas)
    s_c, rep_c = slope_check(random_walk(3), asian(0.5), deltas=deltas, constrained=True)
    dt = time.perf_counter() - t0
    ok_a = abs(s_a - rep_a["upsilon"]) <= 1e-9
    ok_b = rep_b["rel_error"] <= 0.05
    ok_c = rep_c["rel_error"] <= 0.05
    ok = ok_a and ok_b and ok_c and dt < 60
    return ok, _line("criterion 5 (oracle slopes)", ok,
                     f"(a) |s-U|={abs(s_a - rep_a['upsilon']):.1e} "
                     f"(b) rel={rep_b['rel_error']:.4f} (c) rel={rep_c['rel_error']:.2e} "
                     f"time={dt:.2f}s<60s")


def _property_checks():
    rng = np.random.default_rng(2024)
    out = {}

    worst = 0.0
    for _ in range(1000):
        p = rng.uniform(1.0 + 1e-3, 4.0)
        q = p / (p - 1)
        e = rng.normal(size=int(rng.integers(1, 5))) * rng.uniform(0.1, 3)
        v = v_map(e, q)
        lq = np.sum(np.abs(e) ** q)
        worst = max(worst, abs(v @ e - lq) / lq, abs(np.sum(np.abs(v) ** p) - lq) / lq)
    out["v-map identities"] = (worst <= 1e-10, f"{worst:.1e}")

    lattices = [random_martingale_lattice(int(rng.integers(1, 5)), rng, d=int(rng.integers(1, 3)))
                for _ in range(20)]
    tower = idem = contr = lq2 = el = 0.0
    for lat in lattices:
        wp = enumerate_paths(lat)
        Z = rng.normal(size=(wp.n_paths, wp.N, wp.d))
        o, pr = optional_projection(wp, Z), predictable_projection(wp, Z)
        tower = max(tower, np.max(np.abs(wp.expect(o) - wp.expect(Z))),
                    np.max(np.abs(wp.expect(pr) - wp.expect(Z))))
        idem = max(idem, np.max(np.abs(optional_projection(wp, o) - o)),
                   np.max(np.abs(predictable_projection(wp, pr) - pr)))
        for q in (1.5, 2.0, 4.0):
            norm = lambda A: wp.expect(np.sum(np.abs(A) ** q, axis=(1, 2)))
            contr = max(contr, norm(o) - norm(Z), norm(pr) - norm(Z))
        h2, _ = lq_predictable_projection(wp, Z, 2.0)
        lq2 = max(lq2, np.max(np.abs(h2 - pr)))
        for q in (1.5, 3.0):
            h, _ = lq_predictable_projection(wp, Z, q)
            el = max(el, np.max(np.abs(predictable_projection(wp, v_map(Z - h, q)))))
    out["projection tower"] = (tower <= 1e-10, f"{tower:.1e}")
    out["projection idempotence"] = (idem <= 1e-10, f"{idem:.1e}")
    out["projection contraction"] = (contr <= 1e-10, f"{contr:.1e}")
    out["L^2 projection = predictable"] = (lq2 <= 1e-9, f"{lq2:.1e}")
    out["Euler-Lagrange"] = (el <= 1e-8, f"{el:.1e}")

    viol = 0
    for _ in range(100):
        lat = random_martingale_lattice(int(rng.integers(1, 4)), rng)
        f = [asian(float(rng.normal())), cubic(float(rng.normal())), quad_var()][int(rng.integers(3))]
        if upsilon_mart(lat, f).upsilon > upsilon(lat, f).upsilon + 1e-12:
            viol += 1
    out["upsilon_mart <= upsilon"] = (viol == 0, f"{viol} violations/100")

    audit, mart = 0.0, 0.0
    for _ in range(20):
        lat = random_martingale_lattice(3, rng)
        p = float(rng.uniform(1.3, 3.5))
        L = Penalty.indicator(float(rng.uniform(0.5, 2))) if rng.random() < 0.5 else Penalty.power(4.0)
        delta = float(rng.uniform(0.01, 0.2))
        res = adversarial_map(lat, cubic(0.2), CostSpec(p), L, delta=delta)
        audit = max(audit, abs(res.cost - (res.u * delta) ** p) / (res.u * delta) ** p)
        con = adversarial_map(lat, cubic(0.2), CostSpec(p), L, delta=delta, constrained=True)
        mart = max(mart, check_martingale(con.perturbed)[1])
    out["adversarial cost audit"] = (audit <= 1e-9, f"{audit:.1e}")
    out["constrained adversarial martingale"] = (mart <= 1e-8, f"{mart:.1e}")

    bump = 0.0
    for f in (cubic(0.1), quad_var(), log_contract(SigmaSpec.tanh(0.2, 0.05))):
        x = np.zeros((40, 6, 1))
        x[:, 1:] = np.cumsum(rng.normal(scale=0.5, size=(40, 5, 1)), axis=1)
        a = discrete_malliavin(f, x, backend="analytic")
        b = discrete_malliavin(f, x, backend="bump")
        bump = max(bump, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
    out["analytic vs bump"] = (bump <= 1e-5, f"{bump:.1e}")

    fy = 0.0
    for L in (Penalty.indicator(0.7), Penalty.power(3.0, 1.5), Penalty.power(5.0),
              Penalty.table([0, 1, 2, 4], [0, 0.2, 1.0, 5.0])):
        for v in rng.uniform(0, 1.9, 50):
            u = L.optimal_u(v)
            fy = max(fy, abs(u * v - float(L(u)) - float(L.conjugate(v))))
    out["Fenchel-Young equality"] = (fy <= 1e-9, f"{fy:.1e}")
    return out


def criterion_6():
    t0 = time.perf_counter()
    checks = _property_checks()
    dt = time.perf_counter() - t0
    ok = all(v[0] for v in checks.values())
    failed = [k for k, v in checks.items() if not v[0]]
    detail = "; ".join(f"{k}={v[1]}" for k, v in checks.items())
    return ok, _line("criterion 6 (property suites)", ok,
                     f"{len(checks) - len(failed)}/{len(checks)} ok time={dt:.2f}s [{detail}]")


def criterion_7():
    t0 = time.perf_counter()
    model = random_walk(4)
    exact = enumerate_paths(model)
    D = discrete_malliavin(cubic(0.1), exact.paths)
    ref = optional_projection(exact, D)
    mc = sample_lattice(model, 100_000, seed=0)
    field = D[mc.source_index]
    fit = regression_projection(mc, field, "optional")
    gap = float(np.sqrt(np.mean(np.sum((fit - ref[mc.source_index]) ** 2, axis=-1))))
    se = regression_bootstrap_se(mc, field, "optional", n_boot=50, seed=1)
    dt = time.perf_counter() - t0
    ok = gap <= 3 * se
    return ok, _line("criterion 7 (regression vs exact projection)", ok,
                     f"L2 gap={gap:.4g} bootstrap_se={se:.4g} ratio={gap / se:.3f}<=3 time={dt:.2f}s")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7]


def test_criterion_1_merton(acceptance):
    ok, line = criterion_1()
    acceptance(line)
    assert ok, line


def test_criterion_2_log_contract(acceptance):
    ok, line = criterion_2()
    acceptance(line)
    assert ok, line


def test_criterion_3_quadratic_variation(acceptance):
    ok, line = criterion_3()
    acceptance(line)
    assert ok, line


def test_criterion_4_asian_figure(acceptance):
    ok, line = criterion_4()
    acceptance(line)
    assert ok, line


def test_criterion_5_oracle_slopes(acceptance):
    ok, line = criterion_5()
    acceptance(line)
    assert ok, line


def test_criterion_6_properties(acceptance):
    ok, line = criterion_6()
    acceptance(line)
    assert ok, line


def test_criterion_7_regression_consistency(acceptance):
    ok, line = criterion_7()
    acceptance(line)
    assert ok, line


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    for _, line in results:
        print(line)
    raise SystemExit(0 if all(ok for ok, _ in results) else 1)

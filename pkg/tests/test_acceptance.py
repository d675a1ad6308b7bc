"""Acceptance suite: one group of tests per numbered criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints
one PASS/FAIL line per criterion (see ``conftest.py``).
"""

import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from srot.bench import DATASETS, SweepAxes, generate, median_l1, sweep, timing_study
from srot.colortransfer import median_cut, method_plan, palette_measure, read_image, read_pairs
from srot.core import DiscreteMeasure, cost_matrix, independent_coupling, l1_error
from srot.divergence import shifted, srot_divergence
from srot.exact import brute_force_small, solve_exact
from srot.flow import FlowConfig, finite_difference_gradient, flow_gradient, gaussian_blobs, references, run_flow
from srot.sinkhorn import SolverConfig, dual_objective, solve_eot, solve_srot, solve_with_reference
from srot.sliced import SlicedConfig, sot_plan

CORPUS = Path(__file__).resolve().parents[1] / "data" / "images" / "pairs.csv"
SEEDS = range(5)


def acceptance(number, title):
    return pytest.mark.acceptance(number, title)


def random_instance(seed, uniform):
    rng = np.random.default_rng(seed)
    n, m = (int(v) for v in rng.integers(3, 15, 2))
    if uniform:
        mu = DiscreteMeasure.uniform(rng.normal(size=(n, 2)))
        nu = DiscreteMeasure.uniform(rng.normal(size=(m, 2)) + 0.5)
    else:
        mu = DiscreteMeasure(rng.normal(size=(n, 2)), rng.dirichlet(np.ones(n)))
        nu = DiscreteMeasure(rng.normal(size=(m, 2)) + 0.5, rng.dirichlet(np.ones(m)))
    return mu, nu, cost_matrix(mu, nu)


# 1 -------------------------------------------------------------------------

@acceptance(1, "exact solver matches brute-force enumeration on 200 instances")
def test_c1_oracle_equivalence(record_property):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        if seed < 100:
            n = m = int(rng.integers(2, 9))
            a = b = np.full(n, 1.0 / n)
        else:
            n, m = (int(v) for v in rng.integers(1, 5, 2))
            a, b = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
        C = rng.uniform(0.0, 1.0, (n, m))
        worst = max(worst, abs(solve_exact(C, a, b).cost - brute_force_small(C, a, b)))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max |cost diff| = {worst:.2e}, runtime {elapsed:.1f} s")
    assert worst <= 1e-9
    assert elapsed < 10.0


# 2 -------------------------------------------------------------------------

@acceptance(2, "gamma = 1 reproduces the entropic iterates bit for bit")
@pytest.mark.parametrize("domain", ["scaling", "log"])
def test_c2_eot_reduction(domain, record_property):
    compared = 0
    for seed in range(20):
        mu, nu, C = random_instance(seed, uniform=seed % 2 == 0)
        cfg = SolverConfig(epsilon=0.5, max_iter=500, domain=domain)
        seen = {"eot": [], "srot": []}

        def record(key):
            return lambda it, *state: seen[key].append([s.copy() for s in state if isinstance(s, np.ndarray)])

        p1, d1 = solve_eot(mu, nu, C, cfg, callback=record("eot"))
        p2, d2 = solve_srot(mu, nu, C, SlicedConfig(projections=10, gamma=1.0, seed=seed), cfg,
                            callback=record("srot"))
        assert d1.domain == d2.domain == domain
        assert len(seen["eot"]) == len(seen["srot"]) > 0
        for a, b in zip(seen["eot"], seen["srot"]):
            for x, y in zip(a, b):
                assert np.array_equal(x, y)
        assert np.array_equal(d1.u, d2.u) and np.array_equal(d1.v, d2.v)
        assert np.array_equal(p1.entries, p2.entries)
        compared += len(seen["eot"])
    record_property("detail", f"20 instances, {compared} iterates identical")


# 3 -------------------------------------------------------------------------

@acceptance(3, "symmetric 2x2 instance matches the closed form")
@pytest.mark.parametrize("domain", ["scaling", "log"])
def test_c3_closed_form(domain, record_property):
    mu = DiscreteMeasure.uniform([[0.0], [1.0]])
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    plan, _ = solve_eot(mu, mu, C, SolverConfig(epsilon=1.0, tol=1e-14, domain=domain))
    expected = 0.5 / (1.0 + math.exp(-1.0))
    err = abs(plan.entries[0, 0] - expected)
    record_property("detail", f"|a - 0.5/(1+e^-1)| = {err:.1e}")
    assert err <= 1e-9


# 4 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def large_eps_plans():
    out = {}
    cfg = SolverConfig(epsilon=1e3)
    for ds in DATASETS:
        mu, nu = generate(ds, 240, 0)
        C = cost_matrix(mu, nu)
        srot, _ = solve_srot(mu, nu, C, SlicedConfig(seed=0), cfg)
        eot, _ = solve_eot(mu, nu, C, cfg)
        out[ds] = (l1_error(srot, srot.meta["reference"]), l1_error(eot, independent_coupling(mu, nu)))
    return out


@acceptance(4, "limits: eps = 1e3 recovers the references, eps = 1e-4 recovers the exact plan")
@pytest.mark.parametrize("dataset", DATASETS)
def test_c4_large_eps_srot_is_sliced_reference(dataset, large_eps_plans, record_property):
    err = large_eps_plans[dataset][0]
    record_property("detail", f"L1(SROT, smoothed SOT) = {err:.3e}")
    assert err <= 1e-3


@acceptance(4, "limits: eps = 1e3 recovers the references, eps = 1e-4 recovers the exact plan")
@pytest.mark.parametrize("dataset", DATASETS)
def test_c4_large_eps_eot_is_independent(dataset, large_eps_plans, record_property):
    err = large_eps_plans[dataset][1]
    record_property("detail", f"L1(EOT, independent) = {err:.3e}")
    assert err <= 1e-3


@acceptance(4, "limits: eps = 1e3 recovers the references, eps = 1e-4 recovers the exact plan")
@pytest.mark.parametrize("dataset", DATASETS)
def test_c4_small_eps_recovers_unique_vertex(dataset, record_property):
    eps = 1e-4
    # First seed whose exact optimum is a certified unique vertex with a margin of 10 eps.
    for seed in range(20):
        mu, nu = generate(dataset, 10, seed)
        C = cost_matrix(mu, nu)
        exact = solve_exact(C, mu, nu)
        if exact.unique and exact.min_reduced_cost >= 10 * eps:
            break
    else:
        pytest.fail("no instance with a certified unique vertex")
    plan, duals = solve_srot(mu, nu, C, SlicedConfig(seed=seed),
                             SolverConfig(epsilon=eps, tol=1e-10, max_iter=100_000, domain="log"))
    err = l1_error(plan, exact.plan)
    record_property("detail", f"n=10 seed {seed}, margin {exact.min_reduced_cost:.1e}, L1 = {err:.2e}, "
                              f"{duals.iterations} iterations, violation {duals.violation:.1e}")
    # The criterion fixes tol = 1e-10 as the stopping rule and bounds only the plan error. At this eps
    # the marginal violation decays sublinearly, so the run usually ends at max_iter above that tol.
    assert err <= 1e-2


# 5 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep_records():
    start = time.perf_counter()
    records = sweep(SweepAxes(epsilons=(0.01, 0.1), iterations=(5000,), projections=(100,)), DATASETS,
                    seeds=SEEDS, n=240)
    return records, time.perf_counter() - start


@acceptance(5, "synthetic benchmark trend: SOT beats independent, SROT beats EOT at eps 0.01 and 0.1")
@pytest.mark.parametrize("dataset", DATASETS)
def test_c5_sot_beats_independent(dataset, sweep_records, record_property):
    records, _ = sweep_records
    sot, ind = median_l1(records, dataset=dataset, method="sot"), median_l1(records, dataset=dataset,
                                                                            method="independent")
    record_property("detail", f"median L1 SOT {sot:.4f} vs independent {ind:.4f}")
    assert sot < ind


@acceptance(5, "synthetic benchmark trend: SOT beats independent, SROT beats EOT at eps 0.01 and 0.1")
@pytest.mark.parametrize("eps", [0.01, 0.1])
@pytest.mark.parametrize("dataset", DATASETS)
def test_c5_srot_beats_eot(dataset, eps, sweep_records, record_property):
    records, _ = sweep_records
    srot = median_l1(records, dataset=dataset, method="srot", epsilon=eps)
    eot = median_l1(records, dataset=dataset, method="eot", epsilon=eps)
    record_property("detail", f"median L1 SROT {srot:.4f} vs EOT {eot:.4f}")
    assert srot < eot


@acceptance(5, "synthetic benchmark trend: SOT beats independent, SROT beats EOT at eps 0.01 and 0.1")
def test_c5_runtime(sweep_records, record_property):
    records, elapsed = sweep_records
    failed = [r for r in records if r.error]
    record_property("detail", f"{len(records)} cells in {elapsed:.0f} s, {len(failed)} failed")
    assert not failed
    assert elapsed < 300.0


# 6 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def projection_records():
    axes = SweepAxes(epsilons=(0.01,), iterations=(5000,), projections=(1, 100), aggregations=("uniform",))
    return sweep(axes, DATASETS, methods=("srot",), seeds=SEEDS, n=240)


@acceptance(6, "SROT with 100 projections is at least as accurate as with 1")
@pytest.mark.parametrize("dataset", DATASETS)
def test_c6_more_projections_help(dataset, projection_records, record_property):
    one = median_l1(projection_records, dataset=dataset, projections=1)
    many = median_l1(projection_records, dataset=dataset, projections=100)
    record_property("detail", f"median L1 at L=1 {one:.4f}, at L=100 {many:.4f}")
    assert many <= one


# 7 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def color_errors():
    errors = {}
    for index, (_, src_path, tgt_path) in enumerate(read_pairs(CORPUS)):
        src, tgt = median_cut(read_image(src_path), 256), median_cut(read_image(tgt_path), 256)
        mu, nu = palette_measure(src), palette_measure(tgt)
        C = cost_matrix(mu, nu)
        exact = solve_exact(C, mu, nu).plan
        sliced = SlicedConfig(seed=index)
        errors.setdefault("sot", []).append(l1_error(sot_plan(mu, nu, C, sliced), exact))
        for eps in (1e-3, 1e-2, 1e-1):
            solver = SolverConfig(epsilon=eps, max_iter=5000)
            for method in ("eot", "srot"):
                plan, _ = method_plan(method, mu, nu, C, solver, sliced, exact)
                errors.setdefault((method, eps), []).append(l1_error(plan, exact))
    return errors


@acceptance(7, "color transfer: mean L1 of SROT below EOT and SOT at every eps")
@pytest.mark.parametrize("eps", [1e-3, 1e-2, 1e-1])
def test_c7_color_transfer_ordering(eps, color_errors, record_property):
    assert len(color_errors["sot"]) >= 10
    srot = statistics.mean(color_errors[("srot", eps)])
    eot = statistics.mean(color_errors[("eot", eps)])
    sot = statistics.mean(color_errors["sot"])
    record_property("detail", f"{len(color_errors['sot'])} pairs, mean L1 SROT {srot:.4f}, EOT {eot:.4f}, "
                              f"SOT {sot:.4f}")
    assert srot < eot
    assert srot < sot


# 8 -------------------------------------------------------------------------

@acceptance(8, "sliced reference costs at most 10% of the SROT solve")
@pytest.mark.parametrize("eps", [1e-3, 1e-2, 1e-1])
def test_c8_reference_is_cheap(eps, record_property):
    # tol = 1e-300 never triggers, so every run performs exactly T = 5000 sweeps.
    fractions = [timing_study(ds, 240, 0, projections=100, epsilon=eps, max_iter=5000, repeats=1, tol=1e-300)
                 for ds in DATASETS]
    worst = max(f["fraction"] for f in fractions)
    record_property("detail", f"max SOT share {100 * worst:.2f}% "
                              f"(SOT {1e3 * max(f['sot_s'] for f in fractions):.1f} ms)")
    assert all(f["iterations"] == 5000 for f in fractions)
    assert worst <= 0.10


# 9 -------------------------------------------------------------------------

def divergence_pair(seed):
    rng = np.random.default_rng(seed)
    n, m = (int(v) for v in rng.integers(5, 16, 2))
    mu = DiscreteMeasure(rng.normal(size=(n, 2)), rng.dirichlet(np.ones(n)))
    nu = DiscreteMeasure(rng.normal(size=(m, 2)) + rng.normal(size=2), rng.dirichlet(np.ones(m)))
    return mu, nu


@acceptance(9, "divergence axioms: identity, symmetry, non-negativity, shrinking shifts")
@pytest.mark.parametrize("eps", [0.01, 0.1])
def test_c9_axioms_on_random_pairs(eps, record_property):
    worst_self = worst_swap = 0.0
    lowest = math.inf
    for seed in range(50):
        mu, nu = divergence_pair(seed)
        cfg, sliced = SolverConfig(epsilon=eps, max_iter=100_000), SlicedConfig(seed=seed)
        forward = srot_divergence(mu, nu, sliced, cfg).value
        backward = srot_divergence(nu, mu, sliced, cfg).value
        worst_self = max(worst_self, abs(srot_divergence(mu, mu, sliced, cfg).value))
        worst_swap = max(worst_swap, abs(forward - backward))
        lowest = min(lowest, forward, backward)
    record_property("detail", f"max |S(mu,mu)| {worst_self:.1e}, max asymmetry {worst_swap:.1e}, "
                              f"min S {lowest:.3e}")
    assert worst_self <= 1e-8
    assert worst_swap <= 1e-10
    assert lowest >= -1e-8


@acceptance(9, "divergence axioms: identity, symmetry, non-negativity, shrinking shifts")
def test_c9_shrinking_shift(record_property):
    mu, _ = divergence_pair(0)
    cfg, sliced = SolverConfig(epsilon=0.1), SlicedConfig(seed=0)
    direction = np.array([1.0, 0.0])
    values = np.array([srot_divergence(shifted(mu, direction / k), mu, sliced, cfg).value for k in range(1, 31)])
    record_property("detail", f"S(mu_1, mu) = {values[0]:.3e}, S(mu_30, mu) = {values[-1]:.3e}")
    assert np.all(np.diff(values) <= 0)
    assert values[-1] <= 0.05 * values[0]


# 10 ------------------------------------------------------------------------

@acceptance(10, "analytic flow gradient matches central finite differences")
@pytest.mark.parametrize("kind", ["srot", "sinkhorn"])
def test_c10_gradient_check(kind, record_property):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        points = rng.normal(size=(10, 2))
        target = DiscreteMeasure.uniform(rng.normal(size=(10, 2)) + 1.0)
        cfg = FlowConfig(divergence=kind, solver=SolverConfig(epsilon=0.1, tol=1e-12, max_iter=100_000),
                         sliced=SlicedConfig(projections=20, seed=seed))
        refs = references(points, target, cfg)
        grad = flow_gradient(points, target, cfg, refs)
        fd = finite_difference_gradient(points, target, cfg, 1e-5, refs)
        worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
    record_property("detail", f"worst relative l2 error {worst:.2e} over 20 instances")
    assert worst <= 1e-3


# 11 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def flow_finals():
    finals = {"srot": [], "sinkhorn": []}
    for seed in SEEDS:
        source, target = gaussian_blobs(50, seed)
        for kind in finals:
            cfg = FlowConfig(step_size=0.05, steps=100, divergence=kind, solver=SolverConfig(epsilon=0.5),
                             sliced=SlicedConfig(seed=seed), stride=25)
            traj = run_flow(source, target, cfg)
            assert not traj.aborted
            finals[kind].append(traj.wasserstein[-1])
    return finals


@acceptance(11, "SROT-divergence flow ends closer to the target than the Sinkhorn-divergence flow")
def test_c11_flow_comparison(flow_finals, record_property):
    srot, sink = statistics.median(flow_finals["srot"]), statistics.median(flow_finals["sinkhorn"])
    record_property("detail", f"median final W1: SROT {srot:.4f}, Sinkhorn {sink:.4f}")
    assert srot <= sink


# 12 ------------------------------------------------------------------------

@acceptance(12, "log-domain dual objective never decreases across block updates")
@pytest.mark.parametrize("reference", ["independent", "sliced"])
def test_c12_dual_monotonicity(reference, record_property):
    worst = 0.0
    updates = 0
    for seed in range(20):
        mu, nu, C = random_instance(seed, uniform=seed % 2 == 0)
        if reference == "independent":
            ref = independent_coupling(mu, nu)
        else:
            ref = sot_plan(mu, nu, C, SlicedConfig(projections=20, seed=seed))
        for eps in (0.01, 0.1, 1.0):
            values = []

            def record(it, block, f, g):
                values.append(dual_objective(C, ref, mu, nu, f, g, eps))

            solve_with_reference(mu, nu, C, ref, SolverConfig(epsilon=eps, max_iter=2000, domain="log"), record)
            drops = np.diff(values)
            worst = min(worst, drops.min()) if drops.size else worst
            updates += len(values)
    record_property("detail", f"{updates} block updates, largest decrease {-worst:.1e}")
    assert worst >= -1e-10

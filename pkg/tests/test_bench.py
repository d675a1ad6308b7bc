import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from srot import bench
from srot.bench import (DATASETS, SweepAxes, SweepRecord, emit, generate, median_l1, read_csv, run_instance, sweep,
                        timing_study, with_axes, write_csv)

SMALL = SweepAxes(epsilons=(0.1,), iterations=(200,), projections=(5,), aggregations=("uniform", "softmin"))


class TestGenerate:
    @pytest.mark.parametrize("dataset", DATASETS)
    def test_shape_and_determinism(self, dataset):
        mu, nu = generate(dataset, 40, 3)
        assert mu.atoms.shape == nu.atoms.shape == (40, 2)
        np.testing.assert_allclose(mu.weights, 1 / 40)
        mu2, nu2 = generate(dataset, 40, 3)
        np.testing.assert_array_equal(mu.atoms, mu2.atoms)
        np.testing.assert_array_equal(nu.atoms, nu2.atoms)
        assert not np.array_equal(mu.atoms, generate(dataset, 40, 4)[0].atoms)

    def test_noiseless_gaussians_sit_on_eight_centres(self):
        mu, _ = generate("eight_gaussians", 64, 0, noise=0.0)
        assert len(np.unique(mu.atoms.round(12), axis=0)) == 8

    def test_noiseless_rings_have_fixed_radii(self):
        mu, nu = generate("two_rings", 50, 0, noise=0.0)
        for m in (mu, nu):
            assert np.ptp(np.linalg.norm(m.atoms, axis=1)) <= 1e-12

    @pytest.mark.parametrize("args", [("spirals", 10), ("half_moons", 1)])
    def test_errors(self, args):
        with pytest.raises(ValueError):
            generate(*args)


class TestSweep:
    def test_cells_and_order(self):
        recs = sweep(SMALL, datasets=("half_moons",), seeds=(0, 1), n=20)
        # Per instance: independent, 2 SOT, 1 EOT, 2 SROT.
        assert len(recs) == 2 * 6
        assert [r.method for r in recs[:6]] == ["independent", "sot", "sot", "eot", "srot", "srot"]
        assert [r.seed for r in recs] == [0] * 6 + [1] * 6
        assert all(not r.error and 0 <= r.l1_vs_exact <= 2 for r in recs)
        assert all(math.isnan(r.epsilon) for r in recs if r.method in ("independent", "sot"))

    def test_deterministic(self):
        a = sweep(SMALL, datasets=("two_rings",), n=15)
        b = sweep(SMALL, datasets=("two_rings",), n=15)
        assert [r.l1_vs_exact for r in a] == [r.l1_vs_exact for r in b]

    def test_method_filter(self):
        recs = sweep(SMALL, datasets=("half_moons",), methods=("eot",), n=12)
        assert [r.method for r in recs] == ["eot"]

    def test_cell_failure_is_recorded(self, monkeypatch):
        def broken(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr(bench, "solve_eot", broken)
        recs = run_instance("half_moons", 12, 0, SMALL, ("eot", "sot"))
        failed = [r for r in recs if r.method == "eot"]
        assert failed[0].error == "RuntimeError: boom" and not failed[0].converged
        assert all(not r.error for r in recs if r.method == "sot")

    def test_empty_inputs(self):
        with pytest.raises(ValueError):
            sweep(SMALL, datasets=())
        with pytest.raises(ValueError):
            SweepAxes(epsilons=())

    def test_median_l1(self):
        recs = [SweepRecord("d", "eot", 0.1, 10, 0, "", v, 0.0, s) for s, v in enumerate([3.0, 1.0, 2.0])]
        assert median_l1(recs, method="eot") == 2.0
        with pytest.raises(KeyError):
            median_l1(recs, method="srot")

    def test_with_axes(self):
        assert with_axes(SMALL, epsilons=(1.0,)).epsilons == (1.0,)


@pytest.fixture(scope="module")
def records():
    return sweep(SweepAxes(epsilons=(1e3,), iterations=(5000,)), datasets=("half_moons",), n=240)


class TestLimits:
    def test_sot_beats_independent(self, records):
        assert median_l1(records, method="sot") < median_l1(records, method="independent")

    def test_large_epsilon_eot_is_independent(self, records):
        assert abs(median_l1(records, method="eot") - median_l1(records, method="independent")) <= 1e-3

    def test_large_epsilon_srot_is_sot(self, records):
        assert abs(median_l1(records, method="srot") - median_l1(records, method="sot")) <= 1e-3


class TestOutput:
    def test_csv_round_trip(self, tmp_path):
        recs = sweep(SMALL, datasets=("half_moons",), n=12)
        write_csv(recs, tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().startswith("# dataset_params: {")
        back = read_csv(tmp_path / "r.csv")
        assert len(back) == len(recs)
        for a, b in zip(recs, back):
            assert a.method == b.method and a.l1_vs_exact == b.l1_vs_exact and a.converged == b.converged
            assert (math.isnan(a.epsilon) and math.isnan(b.epsilon)) or a.epsilon == b.epsilon

    def test_emit(self, tmp_path):
        recs = sweep(SMALL, datasets=("half_moons", "two_rings"), n=12)
        written = emit(recs, tmp_path / "out", figure="fig")
        names = sorted(p.name for p in written)
        assert names == ["fig.csv", "fig_half_moons.svg", "fig_two_rings.svg"]
        assert ET.parse(tmp_path / "out" / "fig_half_moons.svg").getroot().tag.endswith("svg")

    def test_emit_requires_records(self, tmp_path):
        with pytest.raises(ValueError):
            emit([], tmp_path)
        with pytest.raises(ValueError):
            write_csv([], tmp_path / "x.csv")


def test_timing_study():
    out = timing_study(n=40, projections=10, epsilon=0.1, max_iter=200, repeats=1)
    assert out["total_s"] == pytest.approx(out["sot_s"] + out["sinkhorn_s"])
    assert 0 < out["fraction"] < 1 and out["iterations"] >= 1

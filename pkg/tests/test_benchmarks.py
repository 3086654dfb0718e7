import math

import numpy as np
import pytest

import snakebo.benchmarks as B


class TestKnownValues:
    def test_branin_maximum(self):
        b = B.make_benchmark("branin2d")
        v = B.eval(b, b.to_normalized(np.array([math.pi, 2.275])))
        assert v == pytest.approx(-0.39789, abs=1e-5)
        assert b.f_max == pytest.approx(-0.397887, abs=1e-6)

    def test_branin_has_three_global_maxima(self):
        b = B.make_benchmark("branin2d")
        for pt in ([-math.pi, 12.275], [math.pi, 2.275], [9.42478, 2.475]):
            v = b.evaluate_native(np.array([pt]))[0]
            assert v == pytest.approx(b.f_max, abs=1e-4)

    def test_ackley_maximum_at_origin(self):
        b = B.make_benchmark("ackley4d")
        v = B.eval(b, b.to_normalized(np.zeros(4)))
        assert v == pytest.approx(0.0, abs=1e-12)
        # origin sits at 0.45 in normalized coordinates (shifted domain)
        assert np.allclose(b.to_normalized(np.zeros(4)), 0.45)

    def test_hartmann6_maximum(self):
        b = B.make_benchmark("hartmann6d")
        assert b.f_max == pytest.approx(3.32237, abs=1e-4)

    def test_hartmann4_uses_leading_subblocks(self):
        b = B.make_benchmark("hartmann4d")
        x = np.full(4, 0.5)
        alpha = np.array([1.0, 1.2, 3.0, 3.2])
        A = np.array([[10.0, 3.0, 17.0, 3.5], [0.05, 10.0, 17.0, 0.1],
                      [3.0, 3.5, 1.7, 10.0], [17.0, 8.0, 0.05, 10.0]])
        P = 1e-4 * np.array([[1312.0, 1696.0, 5569.0, 124.0],
                             [2329.0, 4135.0, 8307.0, 3736.0],
                             [2348.0, 1451.0, 3522.0, 2883.0],
                             [4047.0, 8828.0, 8732.0, 5743.0]])
        s = float(np.exp(-(A * (x - P) ** 2).sum(axis=1)) @ alpha)
        assert b.evaluate_native(x[None, :])[0] == pytest.approx((s - 1.1) / 0.839, abs=1e-12)

    def test_shekel_value_at_first_center(self):
        b = B.make_benchmark("shekel-o1")
        x = np.array([0.2, 0.9])  # 10x equals the first bump center
        cross = 1.0 / ((2.0 - 6.7) ** 2 + (9.0 - 2.0) ** 2 + 9.0)
        assert B.eval(b, x) == pytest.approx(1.0 / 9.0 + cross, abs=1e-12)

    def test_michalewicz_maximum(self):
        b = B.make_benchmark("michalewicz2d")
        assert b.f_max == pytest.approx(1.8013, abs=1e-4)

    def test_perm_maximum_at_identity_scaling(self):
        b = B.make_benchmark("perm10d")
        x = np.arange(1.0, 11.0)
        assert b.evaluate_native(x[None, :])[0] == pytest.approx(0.0, abs=1e-15)


class TestEval:
    def test_normalization_consistency_at_center(self):
        b = B.make_benchmark("branin2d")
        assert B.eval(b, np.array([0.5, 0.5])) == pytest.approx(
            b.evaluate_native(np.array([[2.5, 7.5]]))[0])

    def test_corner_maps_to_native_lower_bounds(self):
        b = B.make_benchmark("branin2d")
        assert np.allclose(b.to_native(np.zeros(2)), [-5.0, 0.0])

    def test_out_of_box_point_rejected(self):
        b = B.make_benchmark("branin2d")
        with pytest.raises(ValueError):
            B.eval(b, np.array([1.2, 0.5]))

    def test_unknown_name_raises(self):
        with pytest.raises(KeyError):
            B.make_benchmark("nope")

    def test_deterministic(self):
        b = B.make_benchmark("hartmann3d")
        x = np.array([0.2, 0.4, 0.8])
        assert B.eval(b, x) == B.eval(b, x)

    @pytest.mark.parametrize("name", B.benchmark_names())
    def test_argmax_beats_dense_sobol_sweep(self, name):
        b = B.make_benchmark(name)
        from snakebo.planner import sobol_grid

        pts = sobol_grid(100_000, b.dim)
        vals = b.eval_batch(pts)
        at_argmax = b.eval_batch(b.to_normalized(b.argmax_native)[None, :])[0]
        assert at_argmax >= vals.max() - 1e-9
        assert vals.max() <= b.f_max + 1e-9


class TestMask:
    def make_masked(self):
        from pathlib import Path

        mask_file = Path(B.__file__).parent / "data" / "lake_outline.txt"
        return B.make_benchmark("shekel-o1", mask_file=mask_file)

    def test_inside_point_evaluates(self):
        m = self.make_masked()
        assert np.isfinite(B.eval(m, np.array([0.5, 0.5])))

    def test_outside_point_rejected(self):
        m = self.make_masked()
        with pytest.raises(ValueError):
            B.eval(m, np.array([0.01, 0.01]))

    def test_projection_returns_in_mask_point(self):
        m = self.make_masked()
        p = m.project_to_mask(np.array([0.01, 0.01]))
        assert m.in_mask(p)

    def test_polygon_loader_rejects_degenerate_files(self, tmp_path):
        f = tmp_path / "poly.txt"
        f.write_text("0 0\n1 1\n")
        with pytest.raises(ValueError):
            B.load_polygon(f)

    def test_polygon_loader_roundtrip(self, tmp_path):
        f = tmp_path / "poly.txt"
        f.write_text("# square\n0 0\n1 0\n1 1\n0 1\n")
        poly = B.load_polygon(f)
        assert B.point_in_polygon(np.array([0.5, 0.5]), poly)
        assert not B.point_in_polygon(np.array([1.5, 0.5]), poly)

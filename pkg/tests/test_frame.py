import json
import math

import numpy as np
import pytest

from spreadsamp import (DegenerateFrameError, Frame, FrameFormatError, OutcomeSpec,
                        ParameterError, PopulationRecipe, attach_gaussian_outcome,
                        build_population, generate_grid, generate_neyman_scott,
                        read_frame, write_frame)


def ns_recipe(kernel_scale=0.03, target_n=1000, seed=0, outcomes=()):
    return PopulationRecipe(kind="neyman_scott", center_intensity=10.0,
                            mean_per_cluster=100.0, kernel_scale=kernel_scale,
                            target_n=target_n, outcome_specs=tuple(outcomes), seed=seed)


class TestGrid:
    def test_degenerate_single_unit(self):
        f = generate_grid(1, 1, 1.0)
        assert f.n == 1
        assert np.array_equal(f.coords, [[0.0, 0.0]])

    def test_5x5_geometry(self):
        f = generate_grid(5, 5, 1.0)
        assert f.n == 25
        dmax = max(np.linalg.norm(a - b) for a in f.coords for b in f.coords)
        assert dmax == pytest.approx(4 * math.sqrt(2), abs=1e-12)

    def test_10x10_size(self):
        assert generate_grid(10, 10, 1.0).n == 100

    def test_row_major_ids(self):
        f = generate_grid(3, 4, 0.5)
        # id = r*cols + c at (r*spacing, c*spacing)
        assert np.array_equal(f.coords[1 * 4 + 2], [0.5, 1.0])

    def test_rejects_bad_parameters(self):
        with pytest.raises(ParameterError):
            generate_grid(0, 5, 1.0)
        with pytest.raises(ParameterError):
            generate_grid(5, 5, 0.0)


class TestNeymanScott:
    def test_exact_count_and_domain(self):
        f = generate_neyman_scott(ns_recipe(kernel_scale=0.03, target_n=1000, seed=3))
        assert f.n == 1000
        assert np.all(f.coords >= 0.0) and np.all(f.coords <= 1.0)

    def test_minimal_population(self):
        f = generate_neyman_scott(ns_recipe(target_n=2, seed=11))
        assert f.n == 2
        assert not np.array_equal(f.coords[0], f.coords[1])

    def test_deterministic_in_seed(self):
        a = generate_neyman_scott(ns_recipe(target_n=500, seed=5))
        b = generate_neyman_scott(ns_recipe(target_n=500, seed=5))
        assert np.array_equal(a.coords, b.coords)

    def test_clustered_tighter_than_sparse(self):
        tight = generate_neyman_scott(ns_recipe(kernel_scale=0.005, target_n=1000, seed=7))
        loose = generate_neyman_scott(ns_recipe(kernel_scale=0.03, target_n=1000, seed=7))

        def mean_nn(frame):
            d2 = ((frame.coords[:, None] - frame.coords[None]) ** 2).sum(-1)
            np.fill_diagonal(d2, np.inf)
            return np.sqrt(d2.min(1)).mean()

        assert mean_nn(tight) < mean_nn(loose)


class TestGaussianOutcome:
    def test_exact_standardization(self):
        f = generate_grid(8, 8, 0.1)
        out = attach_gaussian_outcome(f, OutcomeSpec("y", variogram_range=0.3), seed=1)
        y = out.outcome("y")
        assert abs(y.mean() - 5.0) < 1e-10
        assert abs(y.std(ddof=1) - 1.0) < 1e-10

    def test_two_point_standardization(self):
        f = Frame(np.array([[0.0, 0.0], [1.0, 0.0]]))
        y = attach_gaussian_outcome(f, OutcomeSpec("y", variogram_range=1.0), seed=2).outcome("y")
        assert (y[0] + y[1]) / 2 == pytest.approx(5.0, abs=1e-10)
        assert np.std(y, ddof=1) == pytest.approx(1.0, abs=1e-10)

    def test_appends_one_column_coords_untouched(self):
        f = generate_grid(4, 4, 1.0)
        out = attach_gaussian_outcome(f, OutcomeSpec("y", variogram_range=0.5), seed=3)
        assert out.outcome_names == ["y"]
        assert np.array_equal(out.coords, f.coords)
        assert f.outcome_names == []

    def test_trend_share_exact(self):
        f = generate_neyman_scott(ns_recipe(target_n=400, seed=9))
        spec = OutcomeSpec("y", variogram_range=0.1, trend=True, trend_share=0.8)
        y = attach_gaussian_outcome(f, spec, seed=4).outcome("y")
        t = f.coords[:, 0] + f.coords[:, 1]
        t = t - t.mean()
        yc = y - y.mean()
        r2 = float((yc @ t) ** 2 / ((t @ t) * (yc @ yc)))
        assert r2 == pytest.approx(0.8, abs=1e-12)

    def test_variogram_increases_over_first_bins(self):
        # independent oracle: binned empirical variogram of the column
        f = generate_neyman_scott(ns_recipe(kernel_scale=0.03, target_n=1000, seed=21))
        y = attach_gaussian_outcome(f, OutcomeSpec("y", variogram_range=0.1), seed=22).outcome("y")
        d = np.sqrt(((f.coords[:, None] - f.coords[None]) ** 2).sum(-1))
        iu = np.triu_indices(f.n, 1)
        h = d[iu]
        sq = 0.5 * (y[iu[0]] - y[iu[1]]) ** 2
        width = 0.02
        means = []
        for k in range(10):
            sel = (h > k * width) & (h <= (k + 1) * width)
            assert sel.sum() > 50
            means.append(sq[sel].mean())
        assert all(a < b for a, b in zip(means, means[1:]))

    def test_duplicate_name_rejected(self):
        f = generate_grid(3, 3, 1.0)
        out = attach_gaussian_outcome(f, OutcomeSpec("y", variogram_range=0.5), seed=1)
        with pytest.raises(ParameterError):
            attach_gaussian_outcome(out, OutcomeSpec("y", variogram_range=0.5), seed=2)

    def test_duplicate_coordinates_degenerate(self):
        f = Frame(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(DegenerateFrameError):
            attach_gaussian_outcome(f, OutcomeSpec("y", variogram_range=0.5), seed=1)

    def test_build_population_deterministic(self):
        recipe = ns_recipe(target_n=300, seed=6,
                           outcomes=[OutcomeSpec("y", variogram_range=0.1, trend=True)])
        a = build_population(recipe)
        b = build_population(recipe)
        assert np.array_equal(a.outcome("y"), b.outcome("y"))
        assert a.fingerprint() == b.fingerprint()


class TestFrameIO:
    def test_csv_roundtrip(self, tmp_path):
        f = attach_gaussian_outcome(generate_grid(5, 5, 1.0),
                                    OutcomeSpec("y", variogram_range=0.4), seed=8)
        path = tmp_path / "frame.csv"
        write_frame(f, path, "csv")
        g = read_frame(path, "csv")
        assert np.array_equal(f.coords, g.coords)
        assert np.array_equal(f.outcome("y"), g.outcome("y"))

    def test_json_roundtrip(self, tmp_path):
        f = attach_gaussian_outcome(generate_grid(3, 4, 0.5),
                                    OutcomeSpec("z", variogram_range=0.2), seed=9)
        path = tmp_path / "frame.json"
        write_frame(f, path, "json")
        g = read_frame(path, "json")
        assert np.array_equal(f.coords, g.coords)
        assert np.array_equal(f.outcome("z"), g.outcome("z"))

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,x,z\n0,0.0,1.0\n")
        with pytest.raises(FrameFormatError, match="'y'"):
            read_frame(path, "csv")

    def test_non_numeric_cell_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,x,y\n0,0.0,0.0\n1,oops,1.0\n")
        with pytest.raises(FrameFormatError, match="row 3"):
            read_frame(path, "csv")

    def test_duplicate_id_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,x,y\n0,0.0,0.0\n0,1.0,1.0\n")
        with pytest.raises(FrameFormatError, match="duplicate id 0"):
            read_frame(path, "csv")

    def test_meuse_layout(self, tmp_path):
        rng = np.random.default_rng(0)
        path = tmp_path / "metals.csv"
        lines = ["id,x,y,cadmium,copper,lead,zinc"]
        coords = rng.uniform(0, 5000, size=(155, 2))
        for i in range(155):
            vals = rng.uniform(0.1, 100, size=4)
            lines.append(",".join([str(i), repr(float(coords[i, 0])), repr(float(coords[i, 1])),
                                   *(repr(float(v)) for v in vals)]))
        path.write_text("\n".join(lines) + "\n")
        f = read_frame(path, "csv")
        assert f.n == 155
        assert f.outcome_names == ["cadmium", "copper", "lead", "zinc"]

    def test_duplicate_coords_rejected_without_jitter(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("id,x,y\n0,1.0,1.0\n1,1.0,1.0\n2,0.0,0.0\n")
        with pytest.raises(FrameFormatError, match="duplicate coordinates"):
            read_frame(path, "csv")
        with pytest.warns(UserWarning):
            f = read_frame(path, "csv", jitter=True)
        assert f.n == 3
        assert not np.array_equal(f.coords[0], f.coords[1])

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ParameterError):
            read_frame(tmp_path / "x.bin", "parquet")


class TestFrameInvariants:
    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            Frame(np.array([[0.0, np.inf]]))
        with pytest.raises(ParameterError):
            Frame(np.array([[0.0, 0.0]]), {"y": np.array([np.nan])})

    def test_rejects_length_mismatch(self):
        with pytest.raises(ParameterError):
            Frame(np.array([[0.0, 0.0], [1.0, 1.0]]), {"y": np.array([1.0])})

    def test_frames_are_readonly(self):
        f = generate_grid(2, 2, 1.0)
        with pytest.raises(ValueError):
            f.coords[0, 0] = 9.0

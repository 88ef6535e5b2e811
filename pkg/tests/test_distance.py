import math

import numpy as np
import pytest

from spreadsamp import (DegenerateFrameError, DistanceMatrix, Frame, ParameterError,
                        apply_gamma, build_distances, dump_matrix, generate_grid,
                        hpwd_step, nearest_neighbors, standardize)


def offdiag_log_rowsums(values):
    n = values.shape[0]
    mask = ~np.eye(n, dtype=bool)
    logs = np.zeros((n, n))
    logs[mask] = np.log(values[mask])
    return logs.sum(axis=1)


def random_frame(rng, n=None):
    n = n or int(rng.integers(5, 40))
    return Frame(rng.uniform(0.0, 1.0, size=(n, 2)))


class TestBuildDistances:
    def test_3_4_5_triangle(self):
        f = Frame(np.array([[0.0, 0.0], [3.0, 4.0]]))
        D = build_distances(f)
        assert D.values[0, 1] == 5.0

    def test_grid_max_entry(self):
        D = build_distances(generate_grid(5, 5, 1.0))
        assert D.values.max() == pytest.approx(4 * math.sqrt(2), abs=1e-12)

    def test_symmetric_zero_diagonal(self):
        D = build_distances(random_frame(np.random.default_rng(0)))
        assert np.array_equal(D.values, D.values.T)
        assert np.all(np.diagonal(D.values) == 0.0)

    def test_duplicate_coordinates_named(self):
        f = Frame(np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(DegenerateFrameError, match="1 and 2"):
            build_distances(f)


class TestApplyGamma:
    def test_identity(self):
        D = build_distances(generate_grid(3, 3, 1.0))
        assert np.array_equal(apply_gamma(D, 1.0).values, D.values)

    def test_power_arithmetic(self):
        D = DistanceMatrix(np.array([[0.0, 2.0], [2.0, 0.0]]))
        assert apply_gamma(D, 10.0).values[0, 1] == 1024.0

    def test_ratio_property(self):
        D = build_distances(generate_grid(4, 4, 1.0))
        off = ~np.eye(D.n, dtype=bool)
        g = apply_gamma(D, 5.0)
        raw_ratio = D.values[off].max() / D.values[off].min()
        pow_ratio = g.values[off].max() / g.values[off].min()
        assert pow_ratio == pytest.approx(raw_ratio ** 5, rel=1e-12)

    def test_rejects_nonpositive(self):
        D = build_distances(generate_grid(2, 2, 1.0))
        with pytest.raises(ParameterError):
            apply_gamma(D, 0.0)


class TestStandardize:
    def test_two_units_forced_to_one(self):
        D = build_distances(Frame(np.array([[0.0, 0.0], [7.3, 0.0]])))
        sd = standardize(D)
        assert sd.values[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_equilateral_all_ones(self):
        side = 2.7
        f = Frame(np.array([[0.0, 0.0], [side, 0.0], [side / 2, side * math.sqrt(3) / 2]]))
        for gamma in (1.0, 4.0):
            sd = standardize(apply_gamma(build_distances(f), gamma))
            off = ~np.eye(3, dtype=bool)
            assert np.allclose(sd.values[off], 1.0, atol=1e-12)

    def test_random_matrix_row_residuals(self):
        rng = np.random.default_rng(3)
        m = rng.uniform(0.2, 4.0, size=(5, 5))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 0.0)
        sd = standardize(DistanceMatrix(m), tolerance=1e-8)
        # independent recomputation of the row log sums
        assert np.abs(offdiag_log_rowsums(sd.values)).max() <= 1e-8
        assert sd.achieved_tolerance <= 1e-8
        assert sd.iterations_used >= 1

    def test_scale_invariance_of_output(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            D = build_distances(random_frame(rng))
            c = float(rng.uniform(0.01, 100.0))
            a = standardize(D, tolerance=1e-8)
            b = standardize(DistanceMatrix(D.values * c), tolerance=1e-8)
            assert np.abs(a.values - b.values).max() <= 1e-7

    def test_gamma_one_is_noop(self):
        D = build_distances(random_frame(np.random.default_rng(5)))
        a = standardize(D)
        b = standardize(apply_gamma(D, 1.0))
        assert np.array_equal(a.values, b.values)

    def test_hpwd_update_scale_invariant(self):
        # one multiplicative update from dbar and 7.3*dbar agree to 1e-12
        D = build_distances(generate_grid(5, 5, 1.0))
        dbar = standardize(apply_gamma(D, 5.0)).values
        probs = np.full(25, 1 / 25)
        a = hpwd_step(probs, dbar[7])
        b = hpwd_step(probs, 7.3 * dbar[7])
        assert np.abs(a - b).max() <= 1e-12

    def test_reports_iterations(self):
        D = build_distances(generate_grid(6, 6, 1.0))
        sd = standardize(apply_gamma(D, 10.0))
        assert 1 <= sd.iterations_used <= 1000
        assert sd.target_log_row_sum == 0.0


class TestNearestNeighbors:
    def test_grid_corner_orthogonal(self):
        f = generate_grid(5, 5, 1.0)
        (unit, dist), = nearest_neighbors(f, 0, set(range(1, 25)), 1)
        assert dist == 1.0
        assert unit == 1  # lowest-id orthogonal neighbor wins the tie

    def test_all_others_sorted(self):
        f = generate_grid(3, 3, 1.0)
        got = nearest_neighbors(f, 4, set(range(9)) - {4}, 8)
        dists = [d for _, d in got]
        assert dists == sorted(dists)
        assert len(got) == 8

    def test_square_corner_tie_break(self):
        f = Frame(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        got = nearest_neighbors(f, 0, {1, 2, 3}, 3)
        assert [u for u, _ in got] == [1, 2, 3]
        assert got[0][1] == got[1][1] == 1.0
        assert got[2][1] == pytest.approx(math.sqrt(2))

    def test_self_in_mask_is_nearest(self):
        f = generate_grid(2, 2, 1.0)
        got = nearest_neighbors(f, 0, {0, 1}, 1)
        assert got[0] == (0, 0.0)

    def test_empty_mask_error(self):
        f = generate_grid(2, 2, 1.0)
        with pytest.raises(ParameterError):
            nearest_neighbors(f, 0, set(), 1)


def test_dump_matrix_format(tmp_path):
    D = build_distances(generate_grid(2, 2, 1.0))
    path = tmp_path / "m.txt"
    dump_matrix(D, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "4"
    assert len(lines) == 5
    parsed = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    assert np.array_equal(parsed, D.values)


def test_distance_matrix_validation():
    with pytest.raises(ParameterError):
        DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))  # asymmetric
    with pytest.raises(ParameterError):
        DistanceMatrix(np.array([[1.0, 1.0], [1.0, 0.0]]))  # nonzero diagonal
    with pytest.raises(ParameterError):
        DistanceMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]]))  # negative entry

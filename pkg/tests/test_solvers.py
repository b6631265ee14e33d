import math

import numpy as np
import pytest

from medianforge import solvers as sv
from medianforge.errors import AtVoterPoint
from medianforge.profiles import VoterProfile, WeightedProfile, uniform_profile

from conftest import fd_gradient, fd_jacobian, grid_refine_median, random_spd

UNIT_TRIANGLE = np.array(
    [[1.0, 0.0], [-0.5, math.sqrt(3.0) / 2.0], [-0.5, -math.sqrt(3.0) / 2.0]]
)
SIMPLEX3 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

# geometric median of {(0,0),(1,0),(0,1)}: all pairwise pulls at 120 degrees,
# computed by the grid-refinement oracle and equal to (3 - sqrt(3))/6 per axis
FERMAT_RIGHT_TRIANGLE = (3.0 - math.sqrt(3.0)) / 6.0


def four_corner_profile(x, copies=1):
    corners = np.array([[-x, -1.0], [-x, 1.0], [x, -1.0], [x, 1.0]])
    return uniform_profile(np.repeat(corners, copies, axis=0))


class TestAverage:
    def test_midpoint(self):
        wp = uniform_profile([[0.0, 0.0], [2.0, 2.0]])
        np.testing.assert_allclose(sv.average(wp), [1.0, 1.0])

    def test_simplex(self):
        np.testing.assert_allclose(sv.average(uniform_profile(SIMPLEX3)), [1 / 3] * 3)

    def test_single_voter_manipulation_identity(self, rng):
        pts = rng.standard_normal((7, 3))
        mean = pts.mean(axis=0)
        target = np.array([5.0, -2.0, 0.5])
        vote = 8.0 * target - 7.0 * mean
        wp = uniform_profile(np.vstack([pts, vote]))
        np.testing.assert_allclose(sv.average(wp), target, atol=1e-12)

    def test_weighted(self):
        wp = WeightedProfile([[0.0], [1.0]], [0.25, 0.75])
        np.testing.assert_allclose(sv.average(wp), [0.75])


class TestCoordinatewiseMedian:
    def test_paper_triangle(self):
        wp = uniform_profile([[0.0, 0.0], [1.0, 2.0], [2.0, 1.0]])
        np.testing.assert_array_equal(sv.coordinatewise_median(wp), [1.0, 1.0])

    def test_simplex_escapes_hull(self):
        np.testing.assert_array_equal(
            sv.coordinatewise_median(uniform_profile(SIMPLEX3)), [0.0, 0.0, 0.0]
        )

    def test_single_voter(self):
        wp = uniform_profile([[3.5, -1.0]])
        np.testing.assert_array_equal(sv.coordinatewise_median(wp), [3.5, -1.0])

    def test_even_count_lower_median(self):
        wp = uniform_profile([[1.0], [2.0], [3.0], [4.0]])
        assert sv.coordinatewise_median(wp)[0] == 2.0

    def test_weighted_median(self):
        wp = WeightedProfile([[1.0], [2.0], [3.0]], [0.6, 0.2, 0.2])
        assert sv.coordinatewise_median(wp)[0] == 1.0


class TestLossStack:
    def test_four_corner_hessian_formula(self):
        for x in (8.0, 20.0):
            h = sv.loss_hessian(four_corner_profile(x), np.zeros(2))
            expected = (1.0 + x * x) ** -1.5 * np.diag([1.0, x * x])
            np.testing.assert_allclose(h, expected, atol=1e-15)

    def test_gradient_zero_at_center_of_symmetry(self, rng):
        pts = rng.standard_normal((9, 3))
        wp = uniform_profile(np.vstack([pts, -pts]))
        np.testing.assert_allclose(sv.loss_gradient(wp, np.zeros(3)), 0.0, atol=1e-14)

    def test_gradient_matches_finite_differences(self, rng):
        pts = rng.standard_normal((8, 3))
        wp = uniform_profile(pts)
        for _ in range(10):
            z = rng.standard_normal(3) * 2.0
            fd = fd_gradient(lambda y: sv.loss_eval(wp, y), z)
            np.testing.assert_allclose(sv.loss_gradient(wp, z), fd, rtol=1e-5, atol=1e-8)

    def test_hessian_and_third_match_finite_differences(self, rng):
        pts = rng.standard_normal((6, 3))
        wp = uniform_profile(pts)
        for _ in range(5):
            z = rng.standard_normal(3) * 2.0
            np.testing.assert_allclose(
                sv.loss_hessian(wp, z),
                fd_jacobian(lambda y: sv.loss_gradient(wp, y), z),
                rtol=1e-5, atol=1e-7,
            )
            np.testing.assert_allclose(
                sv.loss_third_deriv(wp, z),
                fd_jacobian(lambda y: sv.loss_hessian(wp, y), z, h=1e-5),
                rtol=1e-4, atol=1e-6,
            )

    def test_at_voter_point_raises(self):
        wp = uniform_profile([[0.0, 0.0], [1.0, 1.0]])
        for fn in (sv.loss_gradient, sv.loss_hessian, sv.loss_third_deriv):
            with pytest.raises(AtVoterPoint):
                fn(wp, [1.0, 1.0])

    def test_min_norm_subgradient_on_voter(self):
        wp = uniform_profile([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
        g = sv.min_norm_subgradient(wp, [0.0, 0.0])
        pull = (np.array([-1.0, 0.0]) + np.array([0.0, -1.0])) / 3.0
        expected = pull * (1.0 - (1.0 / 3.0) / np.linalg.norm(pull))
        np.testing.assert_allclose(g, expected, atol=1e-12)


class TestGeometricMedian:
    def test_unit_triangle(self):
        res = sv.geometric_median(uniform_profile(UNIT_TRIANGLE))
        np.testing.assert_allclose(res.point, [0.0, 0.0], atol=1e-8)
        assert res.grad_norm <= 1e-10
        assert not res.degenerate

    def test_simplex(self):
        res = sv.geometric_median(uniform_profile(SIMPLEX3))
        np.testing.assert_allclose(res.point, [1 / 3] * 3, atol=1e-9)

    def test_fermat_point_and_pull_angles(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        res = sv.geometric_median(uniform_profile(pts))
        np.testing.assert_allclose(res.point, [FERMAT_RIGHT_TRIANGLE] * 2, atol=1e-9)
        oracle = grid_refine_median(pts, resolution=1e-7)
        assert np.linalg.norm(res.point - oracle) <= res.additive_bound + 1e-7
        pulls = [(res.point - p) / np.linalg.norm(res.point - p) for p in pts]
        for i in range(3):
            for j in range(i + 1, 3):
                angle = math.degrees(math.acos(np.clip(pulls[i] @ pulls[j], -1, 1)))
                assert angle == pytest.approx(120.0, abs=1e-4)

    def test_loss_field_consistency(self, rng):
        wp = uniform_profile(rng.standard_normal((9, 3)))
        res = sv.geometric_median(wp)
        assert res.loss == pytest.approx(sv.loss_eval(wp, res.point), abs=1e-12)

    def test_certificate_against_grid_oracle(self, rng):
        for _ in range(10):
            v = int(rng.integers(3, 8))
            pts = rng.standard_normal((v, 2)) * rng.uniform(0.5, 3.0)
            res = sv.geometric_median(uniform_profile(pts))
            oracle = grid_refine_median(pts, resolution=1e-7)
            assert np.linalg.norm(res.point - oracle) <= res.additive_bound + 1e-7
            # the solver is never worse than the oracle point
            assert res.loss <= sv.loss_eval(uniform_profile(pts), oracle) + 1e-12

    def test_optimum_on_voter_point(self):
        # one voter outweighs the rest: the median is its point, and the
        # certificate degrades to +inf because the Hessian blows up there
        wp = WeightedProfile([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.8, 0.1, 0.1])
        res = sv.geometric_median(wp)
        np.testing.assert_array_equal(res.point, [0.0, 0.0])
        assert res.grad_norm <= 1e-10
        assert res.additive_bound == np.inf

    def test_degenerate_collinear_flagged(self):
        pts = np.outer(np.arange(5.0), [1.0, 1.0])
        res = sv.geometric_median(uniform_profile(pts))
        assert res.degenerate
        assert res.grad_norm <= 1e-10

    def test_weighted_pull(self):
        wp = WeightedProfile([[0.0, 0.0], [10.0, 0.0]], [0.75, 0.25])
        res = sv.geometric_median(wp)
        np.testing.assert_array_equal(res.point, [0.0, 0.0])


class TestInvariances:
    def test_anonymity_bitwise(self, rng):
        pts = rng.standard_normal((10, 3))
        perm = rng.permutation(10)
        a, b = uniform_profile(pts), uniform_profile(pts[perm])
        np.testing.assert_array_equal(sv.average(a), sv.average(b))
        np.testing.assert_array_equal(
            sv.coordinatewise_median(a), sv.coordinatewise_median(b)
        )
        np.testing.assert_array_equal(
            sv.geometric_median(a).point, sv.geometric_median(b).point
        )
        sigma = np.diag([1.0, 2.0, 0.5])
        np.testing.assert_array_equal(
            sv.skewed_geometric_median(a, sigma).point,
            sv.skewed_geometric_median(b, sigma).point,
        )

    def test_translation_homothety_equivariance(self, rng):
        pts = rng.standard_normal((8, 2))
        tau = np.array([3.0, -1.0])
        lam = 2.5
        moved = uniform_profile(lam * pts + tau)
        base = uniform_profile(pts)
        np.testing.assert_allclose(
            sv.average(moved), lam * sv.average(base) + tau, atol=1e-9
        )
        np.testing.assert_allclose(
            sv.coordinatewise_median(moved),
            lam * sv.coordinatewise_median(base) + tau,
            atol=1e-9,
        )
        np.testing.assert_allclose(
            sv.geometric_median(moved).point,
            lam * sv.geometric_median(base).point + tau,
            atol=1e-9,
        )

    def test_orthogonal_equivariance_avg_gm(self, rng):
        pts = rng.standard_normal((7, 2))
        theta = 0.7
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        rotated = uniform_profile(pts @ rot.T)
        base = uniform_profile(pts)
        np.testing.assert_allclose(sv.average(rotated), rot @ sv.average(base), atol=1e-9)
        np.testing.assert_allclose(
            sv.geometric_median(rotated).point,
            rot @ sv.geometric_median(base).point,
            atol=1e-8,
        )

    def test_cw_rotation_counterexample(self):
        pts = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 1.0]])
        rot = (math.sqrt(2.0) / 2.0) * np.array([[1.0, -1.0], [1.0, 1.0]])
        cw_rotated = sv.coordinatewise_median(uniform_profile(pts @ rot.T))
        rotated_cw = rot @ sv.coordinatewise_median(uniform_profile(pts))
        np.testing.assert_allclose(
            cw_rotated, (math.sqrt(2.0) / 2.0) * np.array([0.0, 3.0]), atol=1e-12
        )
        np.testing.assert_allclose(
            rotated_cw, (math.sqrt(2.0) / 2.0) * np.array([0.0, 2.0]), atol=1e-12
        )
        assert np.linalg.norm(cw_rotated - rotated_cw) > 0.7

    def test_center_of_symmetry(self, rng):
        # the center itself votes too: with an even count the lower-median
        # tie-break would legitimately sit below the midpoint
        pts = rng.standard_normal((6, 3))
        center = np.array([1.0, -2.0, 0.5])
        wp = uniform_profile(np.vstack([center + pts, center - pts, center[None, :]]))
        np.testing.assert_allclose(sv.average(wp), center, atol=1e-12)
        np.testing.assert_allclose(sv.coordinatewise_median(wp), center, atol=1e-12)
        np.testing.assert_allclose(sv.geometric_median(wp).point, center, atol=1e-8)

    def test_continuity_under_single_voter_perturbation(self, rng):
        pts = rng.standard_normal((9, 2))
        base = sv.geometric_median(uniform_profile(pts)).point
        for delta in (1e-2, 1e-4, 1e-6):
            bumped = pts.copy()
            bumped[0] += delta * np.array([1.0, 1.0]) / math.sqrt(2.0)
            moved = sv.geometric_median(uniform_profile(bumped)).point
            assert np.linalg.norm(moved - base) <= 10.0 * math.sqrt(delta)


class TestSkewedGeometricMedian:
    def test_identity_skew_matches_plain(self, rng):
        pts = rng.standard_normal((7, 3))
        wp = uniform_profile(pts)
        plain = sv.geometric_median(wp)
        skewed = sv.skewed_geometric_median(wp, np.eye(3))
        np.testing.assert_allclose(skewed.point, plain.point, atol=1e-9)

    def test_stretched_triangle_moves_median(self):
        # stretching the vertical axis leaves a rightward residual pull at
        # the old median, so the skewed median moves off the origin
        sigma = np.diag([1.0, 2.0 / math.sqrt(3.0)])
        res = sv.skewed_geometric_median(uniform_profile(UNIT_TRIANGLE), sigma)
        assert np.linalg.norm(res.point) > 1e-3
        assert res.point[0] > 0.0
        residual = 1.0 - 2.0 / math.sqrt(5.0)
        pulls = sum(
            (sigma @ sigma @ (np.zeros(2) - v)) / np.linalg.norm(sigma @ v)
            for v in UNIT_TRIANGLE
        )
        assert -pulls[0] == pytest.approx(residual, abs=1e-12)

    def test_transform_identity(self, rng):
        for _ in range(10):
            pts = rng.standard_normal((8, 3))
            sigma = random_spd(rng, 3)
            wp = uniform_profile(pts)
            direct = sv.skewed_geometric_median(wp, sigma)
            mapped = sv.geometric_median(uniform_profile(pts @ sigma.T))
            back = np.linalg.solve(sigma, mapped.point)
            tol = direct.additive_bound + np.linalg.norm(
                np.linalg.inv(sigma), 2
            ) * mapped.additive_bound
            assert np.linalg.norm(direct.point - back) <= max(tol, 1e-9)

    def test_grad_norm_in_skewed_geometry(self, rng):
        pts = rng.standard_normal((6, 2))
        sigma = np.diag([2.0, 0.5])
        res = sv.skewed_geometric_median(uniform_profile(pts), sigma, tol_grad=1e-10)
        g = sv.skewed_loss_gradient(uniform_profile(pts), sigma, res.point)
        assert np.linalg.norm(g) <= 1e-10

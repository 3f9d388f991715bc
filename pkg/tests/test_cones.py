import numpy as np
import pytest

from hpipg.cones import (
    CONE_ORTHANT,
    CONE_SOC,
    CONE_ZERO,
    ConeBlock,
    SeparableSetBlock,
    SET_BOX,
    ball_set,
    box_set,
    check_contiguous,
    cone_distance,
    free_set,
    halfspace_set,
    project_cone,
    project_polar,
    project_set,
    soc_set,
    stacked_polar_projector,
    stacked_set_projector,
    uniform_scale,
)
from hpipg.errors import DimensionMismatch, IncompatibleScaling, InvalidInput


class TestConeProjections:
    def test_zero_cone(self):
        blk = ConeBlock(CONE_ZERO, 3)
        assert np.array_equal(project_cone(blk, [1.0, -2.0, 3.0]), np.zeros(3))
        # polar of {0} is everything
        assert np.array_equal(project_polar(blk, [1.0, -2.0, 3.0]), [1.0, -2.0, 3.0])

    def test_orthant(self):
        blk = ConeBlock(CONE_ORTHANT, 4)
        x = np.array([1.0, -2.0, 0.0, 3.0])
        assert np.array_equal(project_cone(blk, x), [1.0, 0.0, 0.0, 3.0])
        assert np.array_equal(project_polar(blk, x), [0.0, -2.0, 0.0, 0.0])

    def test_soc_interior_point_fixed(self):
        blk = ConeBlock(CONE_SOC, 3)
        x = np.array([0.3, 0.4, 1.0])
        assert np.array_equal(project_cone(blk, x), x)

    def test_soc_frozen_case(self):
        # (1, 0, 0) projects to (0.5, 0, 0.5); its polar part is (0.5, 0, -0.5)
        blk = ConeBlock(CONE_SOC, 3)
        x = np.array([1.0, 0.0, 0.0])
        assert np.allclose(project_cone(blk, x), [0.5, 0.0, 0.5])
        assert np.allclose(project_polar(blk, x), [0.5, 0.0, -0.5])

    def test_soc_polar_interior_maps_to_origin(self):
        blk = ConeBlock(CONE_SOC, 3)
        x = np.array([0.1, 0.0, -2.0])
        assert np.array_equal(project_cone(blk, x), np.zeros(3))

    def test_soc_boundary_tie_goes_to_origin(self):
        blk = ConeBlock(CONE_SOC, 2)
        assert np.array_equal(project_cone(blk, [1.0, -1.0]), np.zeros(2))

    def test_soc_needs_dim_two(self):
        with pytest.raises(InvalidInput):
            ConeBlock(CONE_SOC, 1)

    def test_unknown_tag(self):
        with pytest.raises(InvalidInput):
            ConeBlock("icecream", 2)

    def test_wrong_point_shape(self):
        with pytest.raises(DimensionMismatch):
            project_cone(ConeBlock(CONE_ZERO, 2), [1.0, 2.0, 3.0])


class TestSetProjections:
    def test_free_identity(self):
        x = np.array([5.0, -7.0])
        assert np.array_equal(project_set(free_set(2), x), x)

    def test_box_clip(self):
        blk = box_set([-1.0, 0.0], [1.0, 2.0])
        assert np.array_equal(project_set(blk, [5.0, -3.0]), [1.0, 0.0])
        assert np.array_equal(project_set(blk, [0.5, 1.5]), [0.5, 1.5])

    def test_zero_width_box_pins(self):
        blk = box_set([2.0], [2.0])
        assert np.array_equal(project_set(blk, [-9.0]), [2.0])

    def test_scaled_box(self):
        blk = box_set([-1.0, -1.0], [1.0, 1.0]).with_scale([2.0, 0.5])
        assert np.array_equal(project_set(blk, [5.0, 5.0]), [2.0, 0.5])

    def test_ball_frozen(self):
        blk = ball_set(2, 1.0)
        assert np.allclose(project_set(blk, [3.0, 4.0]), [0.6, 0.8])

    def test_ball_interior_untouched(self):
        blk = ball_set(2, 2.0)
        x = np.array([0.3, -0.4])
        assert np.array_equal(project_set(blk, x), x)

    def test_scaled_ball_radius(self):
        blk = ball_set(2, 1.0).with_scale([3.0, 3.0])
        assert np.allclose(np.linalg.norm(project_set(blk, [30.0, 40.0])), 3.0)

    def test_ball_mixed_scale_raises(self):
        blk = ball_set(2, 1.0).with_scale([1.0, 2.0])
        with pytest.raises(IncompatibleScaling):
            project_set(blk, [1.0, 1.0])

    def test_halfspace_frozen(self):
        blk = halfspace_set([1.0, 0.0], 0.0)
        assert np.allclose(project_set(blk, [2.0, 5.0]), [0.0, 5.0])

    def test_halfspace_inside_untouched(self):
        blk = halfspace_set([1.0, 1.0], 1.0)
        x = np.array([0.2, 0.3])
        assert np.array_equal(project_set(blk, x), x)

    def test_scaled_halfspace_consistent(self):
        # the scaled set is {z : a'(z/s) <= b}; project then check membership
        # and that the step moved orthogonally to the scaled-normal
        blk = halfspace_set([2.0, -1.0], 0.5).with_scale([2.0, 4.0])
        x = np.array([3.0, 1.0])
        y = project_set(blk, x)
        a = np.array([2.0, -1.0]) / np.array([2.0, 4.0])
        assert a @ y <= 0.5 + 1e-12
        step = x - y
        assert abs(step[0] * a[1] - step[1] * a[0]) < 1e-12

    def test_soc_set_matches_cone(self):
        x = np.array([1.0, 0.0, 0.0])
        assert np.allclose(project_set(soc_set(3), x),
                           project_cone(ConeBlock(CONE_SOC, 3), x))

    def test_factory_validation(self):
        with pytest.raises(InvalidInput):
            box_set([1.0], [0.0])
        with pytest.raises(InvalidInput):
            ball_set(2, 0.0)
        with pytest.raises(InvalidInput):
            halfspace_set([0.0, 0.0], 1.0)
        with pytest.raises(InvalidInput):
            halfspace_set([1.0], np.inf)
        with pytest.raises(InvalidInput):
            soc_set(1)
        with pytest.raises(InvalidInput):
            SeparableSetBlock(SET_BOX, 2, lower=np.zeros(2), upper=np.ones(2),
                              scale=np.array([1.0, -1.0]))

    def test_uniform_scale(self):
        assert uniform_scale(ball_set(2, 1.0)) == 1.0
        with pytest.raises(IncompatibleScaling):
            uniform_scale(ball_set(2, 1.0).with_scale([1.0, 2.0]))


class TestMoreau:
    def test_decomposition_random(self):
        rng = np.random.default_rng(17)
        for tag, dim in ((CONE_ZERO, 4), (CONE_ORTHANT, 4), (CONE_SOC, 4)):
            blk = ConeBlock(tag, dim)
            for _ in range(50):
                x = rng.standard_normal(dim) * 3
                onto = project_cone(blk, x)
                polar = project_polar(blk, x)
                assert np.allclose(onto + polar, x, atol=1e-12)
                assert abs(onto @ polar) < 1e-12


class TestStackedHelpers:
    def test_check_contiguous_passes(self):
        blocks = [ConeBlock(CONE_ZERO, 2), ConeBlock(CONE_ORTHANT, 3, offset=2)]
        check_contiguous(blocks, 5, "cone block")

    def test_check_contiguous_gap(self):
        blocks = [ConeBlock(CONE_ZERO, 2), ConeBlock(CONE_ORTHANT, 3, offset=3)]
        with pytest.raises(InvalidInput):
            check_contiguous(blocks, 6, "cone block")

    def test_check_contiguous_total(self):
        with pytest.raises(DimensionMismatch):
            check_contiguous([ConeBlock(CONE_ZERO, 2)], 3, "cone block")

    def test_set_blocks_have_no_positional_offset(self):
        # halfspace blocks carry a scalar bound; it must not be mistaken
        # for a block position
        check_contiguous([halfspace_set([1.0, 1.0], 0.0), free_set(2)], 4, "set block")

    def test_cone_distance(self):
        blocks = [ConeBlock(CONE_ZERO, 2), ConeBlock(CONE_ORTHANT, 2)]
        v = np.array([3.0, 4.0, -2.0, 5.0])
        assert cone_distance(blocks, v) == pytest.approx(np.sqrt(9 + 16 + 4))
        assert cone_distance(blocks, np.array([0.0, 0.0, 1.0, 0.0])) == 0.0

    def test_stacked_set_projector_all_boxes(self):
        blocks = [box_set([-1.0], [1.0]), free_set(2), box_set([0.0, 0.0], [2.0, 2.0])]
        proj = stacked_set_projector(blocks)
        x = np.array([5.0, 9.0, -9.0, -1.0, 3.0])
        expected = np.concatenate([
            project_set(blocks[0], x[:1]),
            project_set(blocks[1], x[1:3]),
            project_set(blocks[2], x[3:]),
        ])
        assert np.array_equal(proj(x), expected)

    def test_stacked_set_projector_mixed(self):
        blocks = [ball_set(2, 1.0), box_set([-1.0], [1.0]), soc_set(3)]
        proj = stacked_set_projector(blocks)
        rng = np.random.default_rng(23)
        x = rng.standard_normal(6) * 4
        expected = np.concatenate([
            project_set(blocks[0], x[:2]),
            project_set(blocks[1], x[2:3]),
            project_set(blocks[2], x[3:]),
        ])
        assert np.allclose(proj(x), expected)

    def test_stacked_polar_all_zero(self):
        proj = stacked_polar_projector([ConeBlock(CONE_ZERO, 3)])
        x = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(proj(x), x)

    def test_stacked_polar_zero_and_orthant(self):
        blocks = [ConeBlock(CONE_ZERO, 2), ConeBlock(CONE_ORTHANT, 2)]
        proj = stacked_polar_projector(blocks)
        x = np.array([4.0, -4.0, 3.0, -3.0])
        assert np.array_equal(proj(x), [4.0, -4.0, 0.0, -3.0])

    def test_stacked_polar_with_soc(self):
        blocks = [ConeBlock(CONE_ZERO, 1), ConeBlock(CONE_SOC, 3)]
        proj = stacked_polar_projector(blocks)
        x = np.array([7.0, 1.0, 0.0, 0.0])
        expected = np.concatenate([
            [7.0], project_polar(blocks[1], x[1:]),
        ])
        assert np.allclose(proj(x), expected)

    def test_projectors_copy_input(self):
        blocks = [ConeBlock(CONE_ZERO, 2)]
        proj = stacked_polar_projector(blocks)
        x = np.array([1.0, 2.0])
        y = proj(x)
        y[0] = 99.0
        assert x[0] == 1.0

"""
Tests for the heterogeneous coefficient and the inflow data registry.
"""

import json

import numpy as np
import pytest

from services.boundary import boundary_data
from services.errors import InvalidArgumentError
from services.media import (
    MediaSpec,
    cell_values,
    default_contrast_field,
    eval_media,
    inclusion_mask,
    oscillatory_media,
)
from services.mesh import build_nested_mesh


class TestEvalMedia:
    """Closed-form oscillatory media and piecewise-constant contrast media."""

    def test_oscillatory_at_origin(self):
        value = eval_media(oscillatory_media(), np.array([0.0, 0.0]))
        assert value == pytest.approx(2 / 3.8 + 1, rel=1e-14)
        assert value == pytest.approx(1.52632, abs=1e-5)

    def test_oscillatory_at_peak_of_sine(self):
        value = eval_media(oscillatory_media(), np.array([0.05, 0.0]))
        assert value == pytest.approx(1 + 2 / 3.8, rel=1e-12)

    def test_oscillatory_is_positive(self, rng):
        assert eval_media(oscillatory_media(), rng.random((500, 2))).min() > 0

    def test_contrast_power(self):
        spec = MediaSpec("contrast", rectangles=((0, 1, 0, 1),), grid=(2, 2), contrast=10.0, power=4.0)
        assert eval_media(spec, np.array([0.25, 0.25])) == pytest.approx(1e4)
        assert eval_media(spec, np.array([0.75, 0.75])) == pytest.approx(1.0)

    def test_contrast_closed_square_boundary(self):
        spec = MediaSpec("contrast", rectangles=((1, 2, 1, 2),), grid=(2, 2), contrast=5.0)
        assert eval_media(spec, np.array([1.0, 1.0])) == pytest.approx(5.0)

    def test_unknown_variant_rejected(self):
        with pytest.raises(InvalidArgumentError):
            eval_media(MediaSpec("layered"), np.zeros(2))  # type: ignore[arg-type]

    def test_cell_values_shape(self):
        mesh = build_nested_mesh(2, 3, 4)
        values = cell_values(oscillatory_media(), mesh)
        assert values.shape == (6, 16)
        assert values.min() > 0


class TestDefaultContrastField:
    """Seeded channel-and-inclusion surrogate."""

    def test_same_seed_same_field(self):
        mesh = build_nested_mesh(2, 2, 10)
        assert default_contrast_field(mesh, 10.0, seed=3) == default_contrast_field(mesh, 10.0, seed=3)

    def test_unit_contrast_is_homogeneous(self):
        mesh = build_nested_mesh(2, 2, 10)
        np.testing.assert_array_equal(cell_values(default_contrast_field(mesh, 1.0, seed=0), mesh), 1.0)

    def test_values_are_background_or_contrast(self):
        mesh = build_nested_mesh(2, 2, 10)
        spec = default_contrast_field(mesh, 10.0, seed=1, power=2.0)
        assert set(np.unique(cell_values(spec, mesh))) <= {1.0, 100.0}
        assert inclusion_mask(spec).shape == (20, 20)
        assert 0 < spec.coverage() < 1

    @pytest.mark.parametrize("seed", [0, 7, 11])
    def test_full_grid_coverage(self, seed):
        spec = default_contrast_field(build_nested_mesh(10, 10, 10), 10.0, seed=seed)
        assert 0.08 <= spec.coverage() <= 0.25

    def test_with_power_keeps_geometry(self):
        mesh = build_nested_mesh(2, 2, 10)
        spec = default_contrast_field(mesh, 10.0, seed=1, power=2.0)
        other = spec.with_power(6.0)
        assert other.rectangles == spec.rectangles
        assert other.power == 6.0

    def test_payload_is_json(self):
        mesh = build_nested_mesh(2, 2, 10)
        payload = default_contrast_field(mesh, 10.0, seed=1).to_payload()
        assert json.loads(json.dumps(payload)) == payload

    def test_contrast_below_one_rejected(self):
        with pytest.raises(InvalidArgumentError):
            default_contrast_field(build_nested_mesh(1, 1, 4), 0.5, seed=0)


class TestBoundaryData:
    """Named inflow data g(x, v)."""

    def test_cosine_data(self):
        g = boundary_data("cosine")
        points = np.array([[0.0, 0.0], [0.25, 0.0], [0.5, 0.0]])
        np.testing.assert_allclose(g(points, np.array([1.0, 0.0])), [2.0, 1.0, 0.0], atol=1e-14)

    def test_constant_and_zero_are_vectorized(self):
        points = np.zeros((3, 2, 2))
        assert boundary_data("constant")(points, np.array([0.0, 1.0])).shape == (3, 2)
        assert not boundary_data("zero")(points, np.array([0.0, 1.0])).any()

    def test_unknown_name_rejected(self):
        with pytest.raises(InvalidArgumentError):
            boundary_data("gaussian")

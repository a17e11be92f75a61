import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plateforge.core import (
    LicenseLabel,
    PlateImage,
    Rng,
    blend,
    clip,
    derive_stream,
    l2_distance,
    load_png,
    quantize8,
    sample_unit_sphere,
    save_png,
)

pixel_arrays = arrays(
    np.float64,
    st.tuples(st.integers(1, 5), st.integers(1, 5)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


class TestPlateImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            PlateImage(np.array([[0.5, 1.5]]))
        with pytest.raises(ValueError):
            PlateImage(np.array([[-0.1, 0.2]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            PlateImage(np.array([[np.nan, 0.0]]))
        with pytest.raises(ValueError):
            PlateImage(np.array([[np.inf, 0.0]]))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            PlateImage(np.zeros(4))
        with pytest.raises(ValueError):
            PlateImage(np.zeros((0, 3)))

    def test_equality_is_bitwise(self):
        a = PlateImage(np.array([[0.25, 0.5]]))
        b = PlateImage(np.array([[0.25, 0.5]]))
        c = PlateImage(np.array([[0.25, 0.5 + 1e-16]]))
        d = PlateImage(np.array([[0.25], [0.5]]))
        assert a == b and hash(a) == hash(b)
        assert (a == c) == (0.5 == 0.5 + 1e-16)
        assert a != d  # same values, different dimensions

    def test_pixels_immutable(self):
        img = PlateImage.full(3, 2, 0.5)
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1.0

    def test_from_flat_round_trip(self):
        flat = np.linspace(0, 1, 6)
        img = PlateImage.from_flat(flat, width=3, height=2)
        assert img.width == 3 and img.height == 2 and img.d == 6
        assert np.array_equal(img.ravel(), flat)
        with pytest.raises(ValueError):
            PlateImage.from_flat(flat, width=4, height=2)


class TestLicenseLabel:
    def test_round_trip(self):
        label = LicenseLabel(consonants="มค", digits="3456")
        assert str(label) == "มค3456"
        assert LicenseLabel.parse("มค3456") == label

    def test_rejects_malformed(self):
        with pytest.raises(ValueError):
            LicenseLabel(consonants="ม", digits="3456")
        with pytest.raises(ValueError):
            LicenseLabel(consonants="AB", digits="3456")
        with pytest.raises(ValueError):
            LicenseLabel(consonants="มค", digits="345")
        with pytest.raises(ValueError):
            LicenseLabel(consonants="มค", digits="345x")
        with pytest.raises(ValueError):
            LicenseLabel.parse("มค123")

    @given(st.integers(0, 43), st.integers(0, 43), st.integers(0, 9999))
    def test_round_trip_property(self, i, j, num):
        from plateforge.plate import MODERN_THAI_CONSONANTS as CONS

        label = LicenseLabel(CONS[i] + CONS[j], f"{num:04d}")
        assert LicenseLabel.parse(str(label)) == label


class TestL2Distance:
    def test_identity(self):
        a = PlateImage.full(2, 2, 0.3)
        assert l2_distance(a, a) == 0.0

    def test_all_zero_vs_all_one_d4(self):
        a = PlateImage.full(2, 2, 0.0)
        b = PlateImage.full(2, 2, 1.0)
        assert l2_distance(a, b) == 2.0

    def test_matches_elementwise_summation_oracle(self, gen):
        # Independent oracle: plain per-element loop, no vectorization.
        a = gen.uniform(size=(4, 4))
        b = gen.uniform(size=(4, 4))
        total = 0.0
        for i in range(4):
            for j in range(4):
                total += (a[i, j] - b[i, j]) ** 2
        expected = math.sqrt(total)
        got = l2_distance(PlateImage(a), PlateImage(b))
        assert abs(got - expected) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            l2_distance(PlateImage.full(2, 2), PlateImage.full(3, 2))

    @given(pixel_arrays)
    @settings(max_examples=50)
    def test_symmetry(self, arr):
        a, b = PlateImage(arr), PlateImage(np.flip(arr).copy())
        assert l2_distance(a, b) == l2_distance(b, a)

    def test_triangle_inequality_random_triples(self, gen):
        for _ in range(200):
            a, b, c = (PlateImage(gen.uniform(size=(3, 3))) for _ in range(3))
            assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-9


class TestClip:
    def test_in_range_identity(self):
        img = PlateImage(np.array([[0.0, 0.5, 1.0]]))
        assert clip(img) == img

    def test_clamps_out_of_range_array(self):
        # Raw arrays can exceed the box before wrapping; go through blend's
        # internals via a manual construction.
        from plateforge.core import clip_array

        arr = np.array([1.5, -0.25, 0.5])
        assert np.array_equal(clip_array(arr), [1.0, 0.0, 0.5])

    @given(pixel_arrays)
    @settings(max_examples=50)
    def test_idempotent(self, arr):
        img = PlateImage(arr)
        assert clip(clip(img)) == clip(img)


class TestBlend:
    def test_endpoints(self, gen):
        a = PlateImage(gen.uniform(size=(2, 3)))
        b = PlateImage(gen.uniform(size=(2, 3)))
        assert blend(a, b, 0.0) == a
        assert blend(a, b, 1.0) == b

    def test_midpoint_of_constants(self):
        a = PlateImage.full(2, 2, 0.2)
        b = PlateImage.full(2, 2, 0.6)
        mid = blend(a, b, 0.5)
        assert np.allclose(mid.pixels, 0.4)

    def test_alpha_out_of_range(self):
        a = PlateImage.full(2, 2, 0.2)
        with pytest.raises(ValueError):
            blend(a, a, 1.5)
        with pytest.raises(ValueError):
            blend(a, a, -0.1)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            blend(PlateImage.full(2, 2), PlateImage.full(3, 2), 0.5)


class TestSampleUnitSphere:
    def test_d1_is_sign(self):
        vecs = sample_unit_sphere(Rng(5, 1), d=1, count=50)
        assert set(np.round(vecs.ravel(), 12)) <= {1.0, -1.0}

    def test_unit_norm(self):
        vecs = sample_unit_sphere(Rng(5, 2), d=17, count=300)
        assert np.allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-9)

    def test_coordinate_means_near_zero(self):
        # Monte-Carlo symmetry check: per-coordinate mean within 0.05 of 0.
        vecs = sample_unit_sphere(Rng(5, 3), d=64, count=2000)
        assert np.all(np.abs(vecs.mean(axis=0)) < 0.05)

    def test_deterministic_per_stream(self):
        a = sample_unit_sphere(Rng(9, 7), d=10, count=5)
        b = sample_unit_sphere(Rng(9, 7), d=10, count=5)
        c = sample_unit_sphere(Rng(9, 8), d=10, count=5)
        assert a.tobytes() == b.tobytes()
        assert a.tobytes() != c.tobytes()

    def test_validation(self):
        with pytest.raises(ValueError):
            sample_unit_sphere(Rng(0), d=0, count=1)
        with pytest.raises(ValueError):
            sample_unit_sphere(Rng(0), d=1, count=0)


class TestRng:
    def test_same_stream_same_sequence(self):
        g1 = Rng(123, 4).generator()
        g2 = Rng(123, 4).generator()
        assert g1.integers(0, 1 << 30, 20).tolist() == g2.integers(0, 1 << 30, 20).tolist()

    def test_distinct_streams_differ(self):
        g1 = Rng(123, 0).generator()
        g2 = Rng(123, 1).generator()
        assert g1.integers(0, 1 << 30, 20).tolist() != g2.integers(0, 1 << 30, 20).tolist()

    def test_derive_is_stable_and_keyed(self):
        r = Rng(7, 0)
        assert r.derive("plate", 3) == r.derive("plate", 3)
        assert r.derive("plate", 3) != r.derive("plate", 4)
        assert r.derive("plate", 3) != r.derive("candidate", 3)

    def test_derive_stream_is_sha_based(self):
        # Known-stable value: guards against switching to salted hash().
        assert derive_stream("a", 1) == derive_stream("a", 1)
        assert derive_stream("a", 1) != derive_stream("a", 2)


class TestQuantizeAndPng:
    def test_quantize_idempotent(self, gen):
        img = PlateImage(gen.uniform(size=(5, 5)))
        q = quantize8(img)
        assert quantize8(q) == q

    def test_png_round_trip_within_one_level(self, tmp_path, gen):
        img = PlateImage(gen.uniform(size=(6, 4)))
        path = tmp_path / "img.png"
        save_png(img, path)
        back = load_png(path)
        assert back.pixels.shape == img.pixels.shape
        assert np.max(np.abs(back.pixels - img.pixels)) <= 1.0 / 255.0

    def test_png_round_trip_exact_for_quantized(self, tmp_path, gen):
        img = quantize8(PlateImage(gen.uniform(size=(6, 4))))
        path = tmp_path / "img.png"
        save_png(img, path)
        assert load_png(path) == img

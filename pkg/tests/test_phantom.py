import numpy as np
import numpy.testing as npt
import pytest

from dbpct.phantom import (
    PhantomSpec,
    generate_dataset,
    generate_phantom,
    inscribed_circle_mask,
    voronoi_image,
)


def bruteforce_labels(points, size):
    """Per-pixel nearest-point labels via an explicit loop (first index
    wins ties), the oracle for cell membership."""
    labels = np.empty((size, size), dtype=int)
    for r in range(size):
        for c in range(size):
            best, best_d = 0, np.inf
            for i, (pr, pc) in enumerate(points):
                d = (r - pr) ** 2 + (c - pc) ** 2
                if d < best_d:
                    best, best_d = i, d
            labels[r, c] = best
    return labels


class TestGeneratePhantom:
    def test_same_seed_bit_identical(self):
        spec = PhantomSpec(size=64, seed=123)
        npt.assert_array_equal(generate_phantom(spec), generate_phantom(spec))

    def test_values_in_range_and_support(self):
        for seed in range(5):
            img = generate_phantom(PhantomSpec(size=64, seed=seed))
            assert img.min() >= 0.0 and img.max() <= 1.0
            mask = inscribed_circle_mask(64)
            npt.assert_array_equal(img[~mask], 0.0)
            assert img[mask].min() >= 0.2

    def test_mirrored_seeds_give_symmetric_image(self):
        n = 32
        c = (n - 1) / 2.0
        points = np.array([[10.0, c - 6.0], [10.0, c + 6.0]])
        img = voronoi_image(points, np.array([0.5, 0.5]), n)
        npt.assert_array_equal(img, np.fliplr(img))

    def test_distinct_values_match_cells_intersecting_circle(self):
        rng = np.random.default_rng(3)
        n = 48
        g = 9
        points = rng.uniform(4, n - 4, size=(g, 2))
        intensities = rng.uniform(0.2, 1.0, size=g)  # distinct w.p. 1
        img = voronoi_image(points, intensities, n)
        labels = bruteforce_labels(points, n)
        mask = inscribed_circle_mask(n)
        cells_in_circle = len(np.unique(labels[mask]))
        assert len(np.unique(img[mask])) == cells_in_circle

    def test_cells_exactly_constant(self):
        rng = np.random.default_rng(5)
        n = 40
        points = rng.uniform(6, n - 6, size=(7, 2))
        intensities = rng.uniform(0.2, 1.0, size=7)
        img = voronoi_image(points, intensities, n)
        labels = bruteforce_labels(points, n)
        mask = inscribed_circle_mask(n)
        for i in range(7):
            cell = mask & (labels == i)
            if cell.any():
                assert np.all(img[cell] == intensities[i])

    def test_grain_count_bounds_distinct_values(self):
        spec = PhantomSpec(size=32, seed=9)
        img = generate_phantom(spec)
        mask = inscribed_circle_mask(32)
        assert 1 <= len(np.unique(img[mask])) <= spec.grain_range[1]

    def test_degenerate_specs_rejected(self):
        with pytest.raises(ValueError):
            PhantomSpec(grain_range=(5, 3))
        with pytest.raises(ValueError):
            PhantomSpec(grain_range=(1, 4))
        with pytest.raises(ValueError):
            PhantomSpec(intensity_range=(0.8, 0.2))
        with pytest.raises(ValueError):
            PhantomSpec(intensity_range=(0.5, 1.2))
        with pytest.raises(ValueError):
            PhantomSpec(size=4)


class TestGenerateDataset:
    def test_count_one_equals_base_seed_phantom(self):
        spec = PhantomSpec(size=32, seed=0)
        data = generate_dataset(spec, 1, base_seed=77)
        single = generate_phantom(PhantomSpec(size=32, seed=77))
        npt.assert_array_equal(data[0], single)

    def test_image_k_uses_seed_base_plus_k(self):
        spec = PhantomSpec(size=32, seed=0)
        data = generate_dataset(spec, 5, base_seed=100)
        for k in range(5):
            npt.assert_array_equal(
                data[k], generate_phantom(PhantomSpec(size=32, seed=100 + k))
            )

    def test_different_base_seeds_share_no_image(self):
        spec = PhantomSpec(size=64, seed=0)
        a = generate_dataset(spec, 100, base_seed=0)
        b = generate_dataset(spec, 100, base_seed=10_000)
        digests_a = {img.tobytes() for img in a}
        digests_b = {img.tobytes() for img in b}
        assert len(digests_a) == 100 and len(digests_b) == 100
        assert not (digests_a & digests_b)

    def test_rejects_bad_count(self):
        with pytest.raises(ValueError):
            generate_dataset(PhantomSpec(), 0, base_seed=0)

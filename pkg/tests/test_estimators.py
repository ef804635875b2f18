import numpy as np
import numpy.testing as npt
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dbpct.estimators import DeepBackProjection, FilteredBackProjection
from dbpct.phantom import PhantomSpec, generate_dataset
from dbpct.projection import ProjectionGeometry, fbp, radon, uniform_angles


def sino_stack(images, views):
    geom = ProjectionGeometry(images[0].shape[0])
    angles = uniform_angles(views)
    return np.stack([radon(im, angles, geom).data for im in images])


@pytest.fixture(scope="module")
def tiny_data():
    images = generate_dataset(PhantomSpec(size=16, seed=0), 6, 0)
    return np.stack(images), sino_stack(images, 4)


class TestFilteredBackProjection:
    def test_is_cloneable_with_params(self):
        est = FilteredBackProjection(image_size=32)
        cloned = clone(est)
        assert cloned.get_params()["image_size"] == 32

    def test_transform_matches_functional_fbp(self, tiny_data):
        images, sinos = tiny_data
        est = FilteredBackProjection()
        out = est.fit().transform(sinos)
        geom = ProjectionGeometry(16)
        angles = uniform_angles(4)
        for i in range(sinos.shape[0]):
            from dbpct.projection import Sinogram
            npt.assert_array_equal(
                out[i], fbp(Sinogram(data=sinos[i], angles=angles), geom)
            )

    def test_single_sinogram_promoted_to_stack(self, tiny_data):
        _, sinos = tiny_data
        out = FilteredBackProjection().transform(sinos[0])
        assert out.shape == (1, 16, 16)

    def test_set_params_round_trip(self):
        est = FilteredBackProjection()
        est.set_params(image_size=24)
        assert est.get_params()["image_size"] == 24


class TestDeepBackProjection:
    def test_get_params_covers_config(self):
        est = DeepBackProjection(depth=3, width=16, epochs=2)
        params = est.get_params()
        assert params["depth"] == 3
        assert params["width"] == 16
        assert params["epochs"] == 2

    def test_predict_before_fit_raises(self, tiny_data):
        _, sinos = tiny_data
        with pytest.raises(NotFittedError):
            DeepBackProjection().predict(sinos)

    def test_fit_predict_shapes(self, tiny_data):
        images, sinos = tiny_data
        est = DeepBackProjection(epochs=2, batch_size=8, patches_per_scan=20,
                                 depth=1, width=8, random_state=0)
        est.fit(sinos, images)
        out = est.predict(sinos)
        assert out.shape == images.shape
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert len(est.log_) == 2

    def test_fit_is_deterministic(self, tiny_data):
        images, sinos = tiny_data
        kwargs = dict(epochs=2, batch_size=8, patches_per_scan=20,
                      depth=1, width=8, random_state=7)
        a = DeepBackProjection(**kwargs).fit(sinos, images)
        b = DeepBackProjection(**kwargs).fit(sinos, images)
        npt.assert_array_equal(a.predict(sinos), b.predict(sinos))

    def test_clone_preserves_params(self):
        est = DeepBackProjection(epochs=4, random_state=9)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_mismatched_targets_rejected(self, tiny_data):
        images, sinos = tiny_data
        with pytest.raises(ValueError):
            DeepBackProjection(epochs=1).fit(sinos, images[:3])

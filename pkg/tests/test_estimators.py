import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from csiquant.channel import GenConfig, generate_dataset
from csiquant.estimators import ChannelPreprocessor, CsiAutoencoder


@pytest.fixture(scope="module")
def raw_channels():
    cfg = GenConfig(nc=64, nt=4, nc_crop=8, max_delay_fraction=0.05, seed=0)
    return generate_dataset(cfg, 16)


def test_preprocessor_transform_range(raw_channels):
    prep = ChannelPreprocessor(nc_crop=8).fit(raw_channels)
    planes = prep.transform(raw_channels)
    assert planes.shape == (16, 8, 4, 2)
    assert planes.min() > 0.0 and planes.max() < 1.0


def test_preprocessor_round_trip(raw_channels):
    prep = ChannelPreprocessor(nc_crop=8).fit(raw_channels)
    rec = prep.inverse_transform(prep.transform(raw_channels))
    err = np.linalg.norm(rec - raw_channels) / np.linalg.norm(raw_channels)
    assert err < 1e-10


def test_preprocessor_requires_fit(raw_channels):
    with pytest.raises(NotFittedError):
        ChannelPreprocessor().transform(raw_channels)


def test_preprocessor_clone_and_params(raw_channels):
    prep = ChannelPreprocessor(nc_crop=8, margin=0.02)
    assert prep.get_params()["margin"] == 0.02
    twin = clone(prep)
    assert twin.get_params() == prep.get_params()
    prep.fit(raw_channels)
    assert not hasattr(twin, "state_")


def _fitted_autoencoder(planes, **kw):
    params = dict(M=12, B=4, steps=4, batch_size=4, seed=1)
    params.update(kw)
    return CsiAutoencoder(**params).fit(planes)


def test_autoencoder_payload_shape(raw_channels):
    planes = ChannelPreprocessor(nc_crop=8).fit_transform(raw_channels)
    est = _fitted_autoencoder(planes)
    payloads = est.transform(planes)
    assert payloads.shape == (16, 6)
    assert payloads.dtype == np.uint8


def test_autoencoder_round_trip_shapes(raw_channels):
    planes = ChannelPreprocessor(nc_crop=8).fit_transform(raw_channels)
    est = _fitted_autoencoder(planes)
    rec = est.inverse_transform(est.transform(planes))
    assert rec.shape == planes.shape
    np.testing.assert_array_equal(est.predict(planes), rec)


def test_autoencoder_score_is_negative_mse(raw_channels):
    planes = ChannelPreprocessor(nc_crop=8).fit_transform(raw_channels)
    est = _fitted_autoencoder(planes)
    score = est.score(planes)
    assert score <= 0.0
    manual = float(np.sum((est.predict(planes) - planes) ** 2) / planes.shape[0])
    assert score == pytest.approx(-manual, rel=1e-9)


def test_autoencoder_requires_fit():
    with pytest.raises(NotFittedError):
        CsiAutoencoder().transform(np.zeros((1, 8, 4, 2)))


def test_autoencoder_loss_trace_recorded(raw_channels):
    planes = ChannelPreprocessor(nc_crop=8).fit_transform(raw_channels)
    est = _fitted_autoencoder(planes, steps=3)
    assert [s for s, _ in est.loss_trace_] == [1, 2, 3]


def test_pipeline_composition(raw_channels):
    pipe = Pipeline([
        ("prep", ChannelPreprocessor(nc_crop=8)),
        ("codec", CsiAutoencoder(M=12, B=4, steps=3, batch_size=4, seed=2)),
    ])
    pipe.fit(raw_channels)
    payloads = pipe.transform(raw_channels)
    assert payloads.shape == (16, 6)
    planes = pipe.named_steps["prep"].transform(raw_channels)
    rec = pipe.named_steps["codec"].inverse_transform(payloads)
    assert rec.shape == planes.shape

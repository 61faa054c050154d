"""Estimator-style wrappers around the preprocessing chain and autoencoder.

These follow the scikit-learn protocol: constructor arguments are stored
verbatim, ``fit`` learns state into trailing-underscore attributes, and
``transform``/``inverse_transform`` move between raw channels, normalized
planes, and packed bit payloads.  The functional API underneath stays the
primary surface; this layer exists for pipeline composition.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import autograd as ag
from .channel import (PreprocState, crop_shift, fit_normalization,
                      invert_preprocess, split_normalize, to_angular_delay)
from .network import Autoencoder, ModelConfig
from .quantizer import BitFlow, dequantize, pack, quantize, saturate_open_unit, unpack
from .training import TrainConfig, evaluate_mse, train_model


class ChannelPreprocessor(BaseEstimator, TransformerMixin):
    """Spatial-frequency channels -> cropped, normalized real planes.

    ``fit`` learns the global affine range on the angular-delay crop;
    ``transform`` maps complex (n, nc, nt) channels to (n, nc_crop, nt, 2)
    arrays in (0, 1); ``inverse_transform`` returns full complex channels.
    """

    def __init__(self, nc_crop: int = 32, shift: int = 0, margin: float = 0.01):
        self.nc_crop = nc_crop
        self.shift = shift
        self.margin = margin

    def _crop(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.complex128)
        if X.ndim != 3:
            raise ValueError("expected a (n_samples, nc, nt) complex array")
        probe = PreprocState(0.0, 1.0, self.shift)
        return crop_shift(to_angular_delay(X), probe, self.nc_crop)

    def fit(self, X, y=None):
        hcc = self._crop(X)
        a, b = fit_normalization(hcc, self.margin)
        self.state_ = PreprocState(a=a, b=b, shift=self.shift)
        self.nc_ = np.asarray(X).shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "state_")
        return split_normalize(self._crop(X), self.state_)

    def inverse_transform(self, Xt) -> np.ndarray:
        check_is_fitted(self, "state_")
        _, full = invert_preprocess(np.asarray(Xt, dtype=np.float64), self.state_, self.nc_)
        return full


class CsiAutoencoder(BaseEstimator, TransformerMixin):
    """Trainable channel compressor with a packed-bit latent code.

    ``fit`` trains on normalized planes; ``transform`` emits one row of
    payload bytes per sample; ``inverse_transform`` decodes payload rows
    back to planes; ``predict`` is the full round trip and ``score`` the
    negative reconstruction MSE.
    """

    def __init__(self, M: int = 48, B: int = 4, block_style: str = "jc",
                 quant_aware: bool = True, encoder_resnets: int = 1,
                 decoder_resnets: int = 2, lr: float = 0.001, batch_size: int = 32,
                 steps: int = 1000, clip_value: float = 0.05, seed: int = 0):
        self.M = M
        self.B = B
        self.block_style = block_style
        self.quant_aware = quant_aware
        self.encoder_resnets = encoder_resnets
        self.decoder_resnets = decoder_resnets
        self.lr = lr
        self.batch_size = batch_size
        self.steps = steps
        self.clip_value = clip_value
        self.seed = seed

    def _check_planes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 4 or X.shape[-1] != 2:
            raise ValueError("expected a (n_samples, nc_crop, nt, 2) array")
        return X

    def fit(self, X, y=None):
        X = self._check_planes(X)
        cfg = ModelConfig(nc_crop=X.shape[1], nt=X.shape[2], M=self.M, B=self.B,
                          block_style=self.block_style, quant_aware=self.quant_aware,
                          encoder_resnets=self.encoder_resnets,
                          decoder_resnets=self.decoder_resnets)
        self.model_ = Autoencoder(cfg, rng=self.seed)
        tc = TrainConfig(lr=self.lr, batch_size=self.batch_size, steps=self.steps,
                         clip_value=self.clip_value, seed=self.seed, B=self.B,
                         M=self.M, block_style=self.block_style,
                         quant_aware=self.quant_aware)
        self.loss_trace_ = train_model(self.model_, X, tc)
        return self

    def transform(self, X) -> np.ndarray:
        """Packed payloads, one uint8 row of ceil(M*B/8) bytes per sample."""
        check_is_fitted(self, "model_")
        X = self._check_planes(X)
        bits = self.model_.cfg.B
        rows = []
        for lo in range(0, X.shape[0], 128):
            codes = self.model_.encode(X[lo:lo + 128])
            for code in codes:
                flow = pack(quantize(saturate_open_unit(code), bits), bits)
                rows.append(np.frombuffer(flow.payload, dtype=np.uint8))
        return np.stack(rows) if rows else np.empty((0, (self.M * bits + 7) // 8), np.uint8)

    def inverse_transform(self, P) -> np.ndarray:
        check_is_fitted(self, "model_")
        P = np.asarray(P, dtype=np.uint8)
        if P.ndim != 2:
            raise ValueError("expected a (n_samples, payload_bytes) uint8 array")
        cfg = self.model_.cfg
        values = np.empty((P.shape[0], cfg.M))
        for i, row in enumerate(P):
            flow = BitFlow(payload=row.tobytes(), count=cfg.M, bits=cfg.B)
            values[i] = dequantize(unpack(flow), cfg.B)
        out = np.empty((P.shape[0], cfg.nc_crop, cfg.nt, 2))
        with ag.no_grad():
            for lo in range(0, P.shape[0], 128):
                chunk = ag.Tensor(values[lo:lo + 128])
                out[lo:lo + 128] = self.model_.decoder(chunk, False).data
        return out

    def predict(self, X) -> np.ndarray:
        return self.inverse_transform(self.transform(X))

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "model_")
        return -evaluate_mse(self.model_, self._check_planes(X))

"""Synthetic clustered-multipath MIMO-OFDM channels and their preprocessing.

A channel sample is a complex (nc, nt) matrix over subcarriers and transmit
antennas whose rows are the conjugated per-subcarrier channel vectors.  The
preprocessing chain maps it into the compact real representation consumed
by the autoencoder: 2-D DFT to the angular-delay domain, crop to the first
nc_crop delay rows, split real/imaginary into a trailing axis of size 2,
and affinely normalize into (0, 1).  Every stage is exactly invertible for
channels whose delay support fits the crop, which the generator guarantees
by drawing path delays on the sample grid below the crop boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_dft_cache: dict = {}


@dataclass
class GenConfig:
    """Channel generator parameters.

    max_delay_fraction bounds path delays to that fraction of the symbol,
    and must keep them inside the first nc_crop delay rows so that
    cropping loses no energy.
    """

    nc: int = 1024
    nt: int = 32
    nc_crop: int = 32
    clusters: int = 3
    paths_per_cluster: int = 5
    max_delay_fraction: float = 0.03
    angle_spread: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for field in ("nc", "nt", "nc_crop", "clusters", "paths_per_cluster"):
            if int(getattr(self, field)) < 1:
                raise ValueError(f"GenConfig.{field} must be positive")
            setattr(self, field, int(getattr(self, field)))
        if self.nc_crop > self.nc:
            raise ValueError("GenConfig.nc_crop cannot exceed nc")
        if not 0.0 < self.max_delay_fraction <= 1.0:
            raise ValueError("GenConfig.max_delay_fraction must lie in (0, 1]")
        if self.max_delay_fraction * self.nc > self.nc_crop:
            raise ValueError("GenConfig: max_delay_fraction * nc must not exceed nc_crop")
        self.angle_spread = float(self.angle_spread)
        if self.angle_spread < 0:
            raise ValueError("GenConfig.angle_spread must be nonnegative")
        self.seed = int(self.seed)


@dataclass
class PreprocState:
    """Affine normalization constants and the optional row shift."""

    a: float
    b: float
    shift: int = 0

    def __post_init__(self):
        self.a = float(self.a)
        self.b = float(self.b)
        self.shift = int(self.shift)
        if not self.b > self.a:
            raise ValueError("PreprocState requires b > a")


def fourier_matrix(n: int) -> np.ndarray:
    """Unitary Fourier matrix F[p, q] = exp(2j pi p q / n) / sqrt(n).

    The exponent sign pairs with the generator's delay phase
    e^{-2j pi f tau / nc} so that a path of delay tau concentrates in
    angular-delay row tau; with the opposite sign, delays would wrap to
    the last rows and cropping the first rows would discard them.
    """
    if n < 1:
        raise ValueError("fourier_matrix: n must be >= 1")
    cached = _dft_cache.get(n)
    if cached is None:
        p = np.arange(n)
        cached = np.exp(2j * np.pi / n * np.outer(p, p)) / np.sqrt(n)
        _dft_cache[n] = cached
    return cached


def synthesize_channel(nc: int, nt: int, delays, angles, gains) -> np.ndarray:
    """Sum of plane-wave paths: H[f, t] = sum_p a_p e^{-2j pi f tau_p / nc} e^{j pi t sin(theta_p)}."""
    delays = np.asarray(delays, dtype=np.float64).ravel()
    angles = np.asarray(angles, dtype=np.float64).ravel()
    gains = np.asarray(gains, dtype=np.complex128).ravel()
    if not delays.size or delays.size != angles.size or delays.size != gains.size:
        raise ValueError("synthesize_channel: delays, angles, gains must be equal-length and nonempty")
    f = np.arange(nc)[:, None]
    tones = np.exp(-2j * np.pi / nc * f * delays[None, :])
    steer = np.exp(1j * np.pi * np.sin(angles)[:, None] * np.arange(nt)[None, :])
    return (tones * gains[None, :]) @ steer


def generate_sample(cfg: GenConfig, index: int) -> np.ndarray:
    """One seeded channel draw; deterministic in (cfg.seed, index).

    Path delays are integers on the sample grid (cluster center plus
    rounded unit-variance jitter), clipped below the crop boundary, so the
    angular-delay energy of every sample is contained in the first
    nc_crop rows exactly.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(int(index),)))
    n_paths = cfg.clusters * cfg.paths_per_cluster
    max_delay = max(math.ceil(cfg.max_delay_fraction * cfg.nc) - 1, 0)

    centers = rng.uniform(0.0, cfg.max_delay_fraction * cfg.nc, size=cfg.clusters)
    jitter = rng.normal(0.0, 1.0, size=(cfg.clusters, cfg.paths_per_cluster))
    delays = np.rint(centers[:, None] + jitter).clip(0, max_delay)

    angle_centers = rng.uniform(-np.pi / 2, np.pi / 2, size=cfg.clusters)
    angle_offsets = rng.uniform(-cfg.angle_spread, cfg.angle_spread,
                                size=(cfg.clusters, cfg.paths_per_cluster))
    angles = angle_centers[:, None] + angle_offsets

    scale = 1.0 / np.sqrt(2.0 * n_paths)
    gains = scale * (rng.normal(size=(cfg.clusters, cfg.paths_per_cluster))
                     + 1j * rng.normal(size=(cfg.clusters, cfg.paths_per_cluster)))
    return synthesize_channel(cfg.nc, cfg.nt, delays, angles, gains)


def generate_dataset(cfg: GenConfig, count: int) -> np.ndarray:
    """Stack of ``count`` seeded samples, shape (count, nc, nt) complex."""
    if count < 0:
        raise ValueError("generate_dataset: count must be >= 0")
    out = np.empty((count, cfg.nc, cfg.nt), dtype=np.complex128)
    for i in range(count):
        out[i] = generate_sample(cfg, i)
    return out


def to_angular_delay(h: np.ndarray) -> np.ndarray:
    """F_a @ H @ F_b^H over the trailing two axes."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim < 2:
        raise ValueError("to_angular_delay: input must be at least 2-D")
    fa = fourier_matrix(h.shape[-2])
    fb = fourier_matrix(h.shape[-1])
    return fa @ h @ fb.conj().T


def from_angular_delay(ha: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_angular_delay` (unitarity)."""
    ha = np.asarray(ha, dtype=np.complex128)
    if ha.ndim < 2:
        raise ValueError("from_angular_delay: input must be at least 2-D")
    fa = fourier_matrix(ha.shape[-2])
    fb = fourier_matrix(ha.shape[-1])
    return fa.conj().T @ ha @ fb


def crop_shift(ha: np.ndarray, state: PreprocState, nc_crop: int) -> np.ndarray:
    """Circularly shift delay rows by state.shift, then keep the first nc_crop."""
    ha = np.asarray(ha)
    nc = ha.shape[-2]
    if nc_crop > nc:
        raise ValueError("crop_shift: nc_crop exceeds row count")
    if not 0 <= state.shift < nc:
        raise ValueError("crop_shift: shift must lie in [0, nc)")
    if state.shift:
        ha = np.roll(ha, -state.shift, axis=-2)
    return ha[..., :nc_crop, :]


def split_normalize(hcc: np.ndarray, state: PreprocState) -> np.ndarray:
    """Stack (real, imag) on a trailing axis and map affinely into (0, 1).

    Values are clamped to [1e-6, 1 - 1e-6] so test-time outliers stay in
    the decoder's sigmoid range instead of being rejected.
    """
    hcc = np.asarray(hcc, dtype=np.complex128)
    parts = np.stack([hcc.real, hcc.imag], axis=-1)
    span = state.b - state.a
    out = (parts - state.a) / span
    np.clip(out, 1e-6, 1.0 - 1e-6, out=out)
    return out


def invert_preprocess(hcp: np.ndarray, state: PreprocState, nc: int):
    """Undo split_normalize/crop_shift/to_angular_delay.

    Returns (cropped complex matrices, full spatial-frequency channels).
    """
    hcp = np.asarray(hcp, dtype=np.float64)
    if hcp.ndim < 3 or hcp.shape[-1] != 2:
        raise ValueError("invert_preprocess: input must end in a (re, im) axis of size 2")
    nc_crop = hcp.shape[-3]
    if nc_crop > nc:
        raise ValueError("invert_preprocess: cropped rows exceed nc")
    span = state.b - state.a
    parts = state.a + span * hcp
    hcc = parts[..., 0] + 1j * parts[..., 1]
    full_shape = hcp.shape[:-3] + (nc, hcp.shape[-2])
    ha = np.zeros(full_shape, dtype=np.complex128)
    ha[..., :nc_crop, :] = hcc
    if state.shift:
        ha = np.roll(ha, state.shift, axis=-2)
    return hcc, from_angular_delay(ha)


def fit_normalization(hcc_set: np.ndarray, margin: float = 0.01) -> tuple:
    """Global (a, b) over all real/imag entries, widened by ``margin``.

    The widening keeps every fitted value strictly inside (0, 1) after
    normalization, which makes the affine map exactly invertible on the
    fitted set.
    """
    hcc_set = np.asarray(hcc_set, dtype=np.complex128)
    lo = min(hcc_set.real.min(), hcc_set.imag.min())
    hi = max(hcc_set.real.max(), hcc_set.imag.max())
    span = hi - lo
    if span <= 0:
        span = max(abs(hi), 1.0) * 1e-6
    return float(lo - margin * span), float(hi + margin * span)


def preprocess_dataset(h_set: np.ndarray, state: PreprocState, nc_crop: int) -> np.ndarray:
    """Full chain: angular-delay, crop/shift, split and normalize."""
    return split_normalize(crop_shift(to_angular_delay(h_set), state, nc_crop), state)


def energy_containment(ha: np.ndarray, nc_crop: int) -> np.ndarray:
    """Per-sample fraction of angular-delay energy in the first nc_crop rows."""
    ha = np.asarray(ha)
    power = np.abs(ha) ** 2
    total = power.sum(axis=(-2, -1))
    kept = power[..., :nc_crop, :].sum(axis=(-2, -1))
    return kept / np.where(total > 0, total, 1.0)

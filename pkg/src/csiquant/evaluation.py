"""Recovery metrics and the link-level bit-error-rate simulation.

NMSE is computed on cropped complex angular-delay matrices (the training
target domain).  The BER simulation transmits QPSK per subcarrier through
the scalar effective channel h_n^H v_n, where the beamformer v_n points
along the recovered channel and the receiver knows the true effective
scalar.  Noise is drawn from counter-based streams keyed by (noise_seed,
snr index, sample, subcarrier), so results do not depend on loop order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass
class LinkConfig:
    """BER sweep: per-subcarrier average receive SNRs in dB."""

    snr_db_list: list = field(default_factory=lambda: [0.0, 5.0, 10.0])
    symbols_per_subcarrier: int = 1
    noise_seed: int = 0

    def __post_init__(self):
        self.snr_db_list = [float(s) for s in self.snr_db_list]
        if not self.snr_db_list:
            raise ValueError("LinkConfig.snr_db_list must be nonempty")
        if int(self.symbols_per_subcarrier) < 1:
            raise ValueError("LinkConfig.symbols_per_subcarrier must be >= 1")
        self.symbols_per_subcarrier = int(self.symbols_per_subcarrier)
        self.noise_seed = int(self.noise_seed)


@dataclass
class MetricsReport:
    """Bundle of recovery metrics plus the configuration they came from."""

    nmse_linear: float
    nmse_db: float
    ber_rows: list
    config: dict


def nmse(true_set, recovered_set) -> float:
    """Mean over samples of ||H - Hhat||_F^2 / ||H||_F^2."""
    true_set = np.asarray(true_set)
    recovered_set = np.asarray(recovered_set)
    if true_set.shape != recovered_set.shape:
        raise ValueError(f"nmse: shape mismatch {true_set.shape} vs {recovered_set.shape}")
    if true_set.ndim < 3:
        true_set = true_set[None]
        recovered_set = recovered_set[None]
    axes = tuple(range(1, true_set.ndim))
    power = np.sum(np.abs(true_set) ** 2, axis=axes)
    if np.any(power == 0):
        raise ValueError("nmse: zero-norm sample")
    err = np.sum(np.abs(true_set - recovered_set) ** 2, axis=axes)
    return float(np.mean(err / power))


def nmse_db(linear: float) -> float:
    if linear < 0:
        raise ValueError("nmse_db: negative value")
    if linear == 0:
        return float("-inf")
    return float(10.0 * np.log10(linear))


def mrt_beamformer(h_hat: np.ndarray) -> np.ndarray:
    """Unit-norm beamformer along the recovered channel direction."""
    h_hat = np.asarray(h_hat, dtype=np.complex128)
    if h_hat.ndim != 1:
        raise ValueError("mrt_beamformer: expected a 1-D channel vector")
    norm = np.linalg.norm(h_hat)
    if norm == 0:
        logger.warning("mrt_beamformer: zero recovered channel, falling back to first basis vector")
        v = np.zeros_like(h_hat)
        v[0] = 1.0
        return v
    return h_hat / norm


def qpsk_mod(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped unit-energy QPSK: (b0, b1) -> ((1-2 b0) + j (1-2 b1)) / sqrt(2)."""
    bits = np.asarray(bits)
    if bits.shape[-1] != 2:
        raise ValueError("qpsk_mod: trailing axis must hold bit pairs")
    return _INV_SQRT2 * ((1.0 - 2.0 * bits[..., 0]) + 1j * (1.0 - 2.0 * bits[..., 1]))


def qpsk_demod(symbols: np.ndarray) -> np.ndarray:
    """Sign decisions back to bit pairs."""
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape + (2,), dtype=np.int64)
    out[..., 0] = symbols.real < 0
    out[..., 1] = symbols.imag < 0
    return out


def _beamformers(recovered: np.ndarray) -> np.ndarray:
    """Per-subcarrier MRT vectors from recovered channel rows h_n^H."""
    conj_rows = np.conj(recovered)
    norms = np.linalg.norm(conj_rows, axis=-1)
    zero = norms == 0
    if np.any(zero):
        logger.warning("ber_simulation: %d zero recovered rows, using first basis vector",
                       int(zero.sum()))
        conj_rows[zero, 0] = 1.0
        norms[zero] = 1.0
    return conj_rows / norms[..., None]


def ber_simulation(true_set, recovered_set, link: LinkConfig, return_per_sample: bool = False):
    """Monte-Carlo BER of MRT beamforming with QPSK per subcarrier.

    The true set is rescaled so the sample-mean row energy equals N_t;
    noise variance is N_t / snr_linear, making each configured value the
    average per-subcarrier receive SNR.  Returns rows (snr_db, ber,
    num_bits); with ``return_per_sample`` additionally a (snr, sample)
    error-count matrix for standard-error estimates.
    """
    true_set = np.asarray(true_set, dtype=np.complex128)
    recovered_set = np.asarray(recovered_set, dtype=np.complex128)
    if true_set.shape != recovered_set.shape or true_set.ndim != 3:
        raise ValueError("ber_simulation: sets must be aligned (samples, nc, nt) arrays")
    n_samples, nc, nt = true_set.shape
    if n_samples == 0:
        raise ValueError("ber_simulation: empty sets")

    mean_sq = float(np.mean(np.abs(true_set) ** 2))
    if mean_sq == 0:
        raise ValueError("ber_simulation: all-zero true channels")
    scaled_true = true_set / np.sqrt(mean_sq)

    beams = _beamformers(recovered_set)
    # rows are h_n^H, so the effective scalar is a plain row-vector dot
    eff = np.einsum("snt,snt->sn", scaled_true, beams)

    n_sym = link.symbols_per_subcarrier
    bits_per_cell = 2 * n_sym
    total_bits = n_samples * nc * bits_per_cell
    rows = []
    per_sample = np.zeros((len(link.snr_db_list), n_samples), dtype=np.int64)
    for snr_idx, snr_db in enumerate(link.snr_db_list):
        sigma = np.sqrt(nt / (10.0 ** (snr_db / 10.0)))
        comp_scale = sigma * _INV_SQRT2
        errors = 0
        for s in range(n_samples):
            sample_errors = 0
            eff_row = eff[s]
            for n in range(nc):
                rng = np.random.Generator(np.random.Philox(
                    key=link.noise_seed, counter=[0, snr_idx, s, n]))
                bits = rng.integers(0, 2, size=(n_sym, 2))
                noise = rng.normal(0.0, comp_scale, size=(n_sym, 2))
                e = eff_row[n]
                y = e * qpsk_mod(bits) + noise[:, 0] + 1j * noise[:, 1]
                z = y / (e if e != 0 else 1.0)
                sample_errors += int(np.count_nonzero(qpsk_demod(z) != bits))
            per_sample[snr_idx, s] = sample_errors
            errors += sample_errors
        rows.append((float(snr_db), errors / total_bits, total_bits))
    if return_per_sample:
        return rows, per_sample
    return rows

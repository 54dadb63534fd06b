"""Speech front-end: framing, Hamming window, power spectrum, Bark filterbank,
log critical-band energies (LHCB), per-utterance normalisation and context
stacking.

Everything here is a pure function of its inputs; a ``FilterBank`` is
immutable and can be shared across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, EmptyInputError, ShapeError

LOG_FLOOR = 1e-10
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).ravel())

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _ms_to_samples(ms: float, sample_rate: int) -> int:
    # Decimal keeps e.g. 517.5 -> 518 exact instead of relying on binary floats
    exact = Decimal(str(ms)) * Decimal(int(sample_rate)) / Decimal(1000)
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class FrameSpec:
    """Frame length and overlap in milliseconds; ``fft_size=None`` picks the next power of two."""

    frame_ms: float = 23.0
    overlap_ms: float = 12.5
    fft_size: int | None = None

    def __post_init__(self):
        if not self.frame_ms > 0 or not self.overlap_ms > 0:
            raise ConfigError("frame_ms and overlap_ms must be positive")
        if not self.overlap_ms < self.frame_ms:
            raise ConfigError(f"overlap_ms ({self.overlap_ms}) must be below frame_ms ({self.frame_ms})")
        if self.fft_size is not None and (self.fft_size < 1 or self.fft_size & (self.fft_size - 1)):
            raise ConfigError(f"fft_size must be a power of two, got {self.fft_size}")

    def frame_length(self, sample_rate: int) -> int:
        return _ms_to_samples(self.frame_ms, sample_rate)

    def hop_length(self, sample_rate: int) -> int:
        hop = _ms_to_samples(Decimal(str(self.frame_ms)) - Decimal(str(self.overlap_ms)), sample_rate)
        if hop < 1:
            raise ConfigError(f"hop rounds to {hop} samples at {sample_rate} Hz")
        return hop

    def fft_length(self, sample_rate: int) -> int:
        flen = self.frame_length(sample_rate)
        if self.fft_size is None:
            return next_pow2(flen)
        if self.fft_size < flen:
            raise ConfigError(f"fft_size {self.fft_size} is shorter than the {flen}-sample frame")
        return self.fft_size


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def frame_signal(signal: AudioSignal, spec: FrameSpec = FrameSpec()) -> np.ndarray:
    """Split into overlapping frames (``n_frames x frame_len``); a partial trailing frame is dropped."""
    flen = spec.frame_length(signal.sample_rate)
    hop = spec.hop_length(signal.sample_rate)
    if signal.samples.size < flen:
        raise EmptyInputError(
            f"signal has {signal.samples.size} samples, shorter than one {flen}-sample frame"
        )
    n = frame_count(signal.samples.size, flen, hop)
    view = np.lib.stride_tricks.sliding_window_view(signal.samples, flen)
    return np.array(view[: (n - 1) * hop + 1 : hop])


def hamming_window(frame) -> np.ndarray:
    """``frame * (0.54 - 0.46 cos(2 pi n / (L - 1)))``; works row-wise on a frame matrix."""
    frame = np.asarray(frame, dtype=float)
    if frame.size == 0:
        raise EmptyInputError("cannot window an empty frame")
    return frame * np.hamming(frame.shape[-1])


def power_spectrum(windowed, fft_size: int) -> np.ndarray:
    """Squared magnitude of the one-sided DFT of the zero-padded frame(s).

    Returns ``fft_size // 2 + 1`` bins per frame.  Under the usual
    doubling convention (every bin except DC and Nyquist counted twice)
    the bins sum to ``fft_size * sum(windowed ** 2)``.
    """
    windowed = np.asarray(windowed, dtype=float)
    if fft_size < 1 or fft_size & (fft_size - 1):
        raise ConfigError(f"fft_size must be a power of two, got {fft_size}")
    if fft_size < windowed.shape[-1]:
        raise ConfigError(f"fft_size {fft_size} is shorter than the {windowed.shape[-1]}-sample frame")
    spec = np.fft.rfft(windowed, n=fft_size, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


class BarkScale(NamedTuple):
    """A Hz <-> Bark mapping; both callables must be vectorised and monotone."""

    to_bark: Callable[[np.ndarray], np.ndarray]
    to_hz: Callable[[np.ndarray], np.ndarray]


def traunmuller_bark(f):
    f = np.asarray(f, dtype=float)
    return 26.81 * f / (1960.0 + f) - 0.53


def traunmuller_hz(z):
    z = np.asarray(z, dtype=float)
    return 1960.0 * (z + 0.53) / (26.28 - z)


def zwicker_bark(f):
    f = np.asarray(f, dtype=float)
    return 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)


def zwicker_hz(z):
    # no closed-form inverse; interpolate on a fine monotone grid
    grid = np.linspace(0.0, 48000.0, 96001)
    return np.interp(z, zwicker_bark(grid), grid)


TRAUNMULLER = BarkScale(traunmuller_bark, traunmuller_hz)
ZWICKER = BarkScale(zwicker_bark, zwicker_hz)


@dataclass(frozen=True)
class FilterBank:
    weights: np.ndarray
    centers_hz: np.ndarray
    sample_rate: int
    fft_size: int

    def __post_init__(self):
        for name in ("weights", "centers_hz"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


def build_bark_filterbank(
    sample_rate: int,
    n_filters: int = 18,
    fft_size: int = 1024,
    scale: BarkScale = TRAUNMULLER,
) -> FilterBank:
    """Triangular filters with centres equally spaced in Bark from 0 Hz to Nyquist.

    Filter i rises linearly (in Hz) from centre i-1 to its own centre and
    falls to centre i+1, so neighbours overlap by half.  The outer edges
    sit at 0 Hz and the Nyquist frequency.
    """
    if n_filters < 1:
        raise ConfigError(f"n_filters must be at least 1, got {n_filters}")
    if sample_rate <= 0 or fft_size < 2:
        raise ConfigError(f"invalid sample_rate={sample_rate} / fft_size={fft_size}")
    nyq = sample_rate / 2.0
    edges_bark = np.linspace(scale.to_bark(0.0), scale.to_bark(nyq), n_filters + 2)
    edges = np.asarray(scale.to_hz(edges_bark), dtype=float)
    edges[0], edges[-1] = 0.0, nyq
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size

    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    weights = np.clip(np.minimum(rising, falling), 0.0, None)
    empty = np.flatnonzero(weights.sum(axis=1) <= 0.0)
    if empty.size:
        raise ConfigError(
            f"{n_filters} Bark filters are too narrow for fft_size={fft_size} at "
            f"{sample_rate} Hz: filters {empty.tolist()} cover no FFT bin"
        )
    return FilterBank(weights, edges[1:-1], int(sample_rate), int(fft_size))


def lhcb_features(spectrum, bank: FilterBank, floor: float = LOG_FLOOR) -> np.ndarray:
    """Natural log of the energy under each filter, floored at ``floor``."""
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape[-1] != bank.weights.shape[1]:
        raise ShapeError(
            f"spectrum has {spectrum.shape[-1]} bins, filterbank expects {bank.weights.shape[1]}"
        )
    energy = spectrum @ bank.weights.T
    return np.log(np.maximum(energy, floor))


def normalize_features(features) -> np.ndarray:
    """Per-utterance z-score of each channel (unbiased variance).

    Channels whose variance is below ``VAR_FLOOR`` are only centred.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"features must be T x n_features, got shape {X.shape}")
    if X.shape[0] < 2:
        raise EmptyInputError(f"normalisation needs at least 2 frames, got {X.shape[0]}")
    centered = X - X.mean(axis=0)
    var = centered.var(axis=0, ddof=1)
    std = np.where(var < VAR_FLOOR, 1.0, np.sqrt(var))
    return centered / std


def context_center(width: int) -> int:
    return width // 2


def stack_context(features, width: int = 14, labels=None, center: int | None = None):
    """Concatenate ``width`` neighbouring frames around each frame.

    Row t holds frames ``t - center ... t - center + width - 1`` (edge
    frames replicated), so the row count equals the frame count and row
    t keeps label t.  Returns ``(rows, labels)``.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError(f"features must be a non-empty T x n_features matrix, got {X.shape}")
    if width < 1:
        raise ConfigError(f"context width must be at least 1, got {width}")
    c = context_center(width) if center is None else center
    if not 0 <= c < width:
        raise ConfigError(f"context center {c} must lie in [0, {width})")
    T = X.shape[0]
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (T,):
            raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {T} frames")
    idx = np.clip(np.arange(T)[:, None] + np.arange(-c, width - c)[None, :], 0, T - 1)
    return X[idx].reshape(T, -1), labels


@dataclass(frozen=True)
class FeatureConfig:
    frame: FrameSpec = FrameSpec()
    n_filters: int = 18
    log_floor: float = LOG_FLOOR
    normalize: bool = True


def extract_features(signal: AudioSignal, cfg: FeatureConfig = FeatureConfig(), scale: BarkScale = TRAUNMULLER) -> np.ndarray:
    """Full front-end for one utterance: ``T x n_filters`` (normalised) LHCB matrix."""
    frames = frame_signal(signal, cfg.frame)
    nfft = cfg.frame.fft_length(signal.sample_rate)
    bank = build_bark_filterbank(signal.sample_rate, cfg.n_filters, nfft, scale)
    feats = lhcb_features(power_spectrum(hamming_window(frames), nfft), bank, cfg.log_floor)
    return normalize_features(feats) if cfg.normalize else feats

"""Waveform ingestion and log-mel filterbank feature extraction.

The front end is fixed at 16 kHz input, 25 ms frames, 10 ms shift and
produces 40-dimensional log-mel features plus an energy-based
speech-activity mask.  All functions are pure and deterministic.
"""

import wave
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000
FRAME_LENGTH_MS = 25
FRAME_SHIFT_MS = 10
FRAME_LENGTH = SAMPLE_RATE * FRAME_LENGTH_MS // 1000  # 400 samples
FRAME_SHIFT = SAMPLE_RATE * FRAME_SHIFT_MS // 1000    # 160 samples


class AudioFormatError(ValueError):
    """Input file is not mono 16-bit PCM at 16 kHz."""


class AudioTooShortError(ValueError):
    """Fewer samples than a single analysis frame."""


class InsufficientFramesError(ValueError):
    """Operation needs more feature frames than provided."""


@dataclass
class AudioBuffer:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                f"expected sample rate {SAMPLE_RATE} Hz, got {self.sample_rate} Hz"
            )
        if not np.isfinite(self.samples).all():
            raise ValueError("non-finite sample values")


@dataclass
class FrontendConfig:
    num_mel_bins: int = 40
    pre_emphasis: float = 0.97
    window: str = "povey"  # or "hamming"
    fft_size: int = 512
    mel_low_hz: float = 20.0
    mel_high_hz: float = 7600.0
    energy_floor: float = 1e-10
    sad_energy_offset: float = -0.5
    sad_context_frames: int = 5

    def __post_init__(self):
        if not (0.0 < self.mel_low_hz < self.mel_high_hz <= SAMPLE_RATE / 2):
            raise ValueError(
                f"mel band [{self.mel_low_hz}, {self.mel_high_hz}] must sit inside "
                f"(0, {SAMPLE_RATE / 2}]"
            )
        if self.fft_size < FRAME_LENGTH:
            raise ValueError(f"fft_size {self.fft_size} < frame length {FRAME_LENGTH}")
        if self.window not in ("hamming", "povey"):
            raise ValueError(f"unknown window {self.window!r}")


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM RIFF/WAVE file sampled at 16 kHz."""
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            n = f.getnframes()
            if rate != SAMPLE_RATE:
                raise AudioFormatError(f"expected {SAMPLE_RATE} Hz, got {rate} Hz")
            if channels != 1:
                raise AudioFormatError(f"expected mono, got {channels} channels")
            if width != 2:
                raise AudioFormatError(f"expected 16-bit PCM, got {8 * width}-bit")
            raw = f.readframes(n)
    except wave.Error as e:
        raise AudioFormatError(f"not a readable RIFF/WAVE file: {e}") from e
    if len(raw) < 2 * n:
        raise IOError(f"truncated file: expected {2 * n} payload bytes, got {len(raw)}")
    if n == 0:
        raise IOError("empty file: zero samples")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples)


def write_wav(path, audio: AudioBuffer) -> None:
    """Write a buffer back out as mono 16-bit PCM at 16 kHz."""
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(SAMPLE_RATE)
        f.writeframes(pcm.tobytes())


def num_frames(num_samples: int) -> int:
    """Frame count under 25 ms / 10 ms snip-edges framing (0 if too short)."""
    if num_samples < FRAME_LENGTH:
        return 0
    return (num_samples - FRAME_LENGTH) // FRAME_SHIFT + 1


def _frame_signal(x: np.ndarray) -> np.ndarray:
    t = num_frames(len(x))
    starts = np.arange(t) * FRAME_SHIFT
    idx = starts[:, None] + np.arange(FRAME_LENGTH)[None, :]
    return x[idx]


def _window(kind: str) -> np.ndarray:
    n = np.arange(FRAME_LENGTH)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (FRAME_LENGTH - 1))
    if kind == "povey":
        return hann ** 0.85
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (FRAME_LENGTH - 1))


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_bin_edges(config: FrontendConfig) -> np.ndarray:
    """num_mel_bins + 2 mel-equidistant edge frequencies in Hz."""
    mlo, mhi = hz_to_mel(config.mel_low_hz), hz_to_mel(config.mel_high_hz)
    return mel_to_hz(np.linspace(mlo, mhi, config.num_mel_bins + 2))


def mel_filterbank(config: FrontendConfig) -> np.ndarray:
    """Triangular weights, shape (num_mel_bins, fft_size // 2 + 1)."""
    edges = mel_bin_edges(config)
    freqs = np.arange(config.fft_size // 2 + 1) * (SAMPLE_RATE / config.fft_size)
    weights = np.zeros((config.num_mel_bins, len(freqs)))
    for m in range(config.num_mel_bins):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / (center - lo)
        down = (hi - freqs) / (hi - center)
        weights[m] = np.clip(np.minimum(up, down), 0.0, None)
    return weights


def compute_fbank(audio: AudioBuffer, config: FrontendConfig) -> np.ndarray:
    """Log mel-filterbank energies, shape (T, num_mel_bins).

    Pipeline: pre-emphasis, window, magnitude-squared FFT, triangular
    mel bank, log with an energy floor.
    """
    x = audio.samples
    if len(x) < FRAME_LENGTH:
        raise AudioTooShortError(
            f"need at least {FRAME_LENGTH} samples for one frame, got {len(x)}"
        )
    pre = np.empty_like(x)
    pre[0] = x[0] - config.pre_emphasis * x[0]
    pre[1:] = x[1:] - config.pre_emphasis * x[:-1]
    frames = _frame_signal(pre) * _window(config.window)
    spectrum = np.fft.rfft(frames, n=config.fft_size)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    mel_energy = power @ mel_filterbank(config).T
    return np.log(np.maximum(mel_energy, config.energy_floor))


def apply_cmvn(features: np.ndarray, variance_floor: float = 1e-10) -> np.ndarray:
    """Per-utterance, per-dimension mean and variance normalization.

    Uses population (1/T) variance.  Dimensions whose variance falls
    below the floor are only mean-shifted.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise InsufficientFramesError(
            f"cmvn needs at least 2 frames, got {features.shape[0]}"
        )
    mean = features.mean(axis=0)
    var = features.var(axis=0)
    centered = features - mean
    scale = np.where(var < variance_floor, 1.0, 1.0 / np.sqrt(np.maximum(var, variance_floor)))
    return centered * scale


def energy_sad(audio: AudioBuffer, config: FrontendConfig) -> np.ndarray:
    """Boolean speech mask, one flag per analysis frame.

    A frame is speech when its log energy strictly exceeds the
    utterance-mean log energy plus ``sad_energy_offset`` (never below
    the energy floor itself), then the raw decisions are majority
    smoothed over +-``sad_context_frames``.
    """
    x = audio.samples
    if len(x) < FRAME_LENGTH:
        raise AudioTooShortError(
            f"need at least {FRAME_LENGTH} samples for one frame, got {len(x)}"
        )
    frames = _frame_signal(x)
    log_floor = np.log(config.energy_floor)
    log_e = np.log(np.maximum((frames * frames).sum(axis=1), config.energy_floor))
    threshold = max(log_e.mean() + config.sad_energy_offset, log_floor)
    raw = log_e > threshold
    c = config.sad_context_frames
    if c <= 0:
        return raw
    t = len(raw)
    counts = np.cumsum(np.concatenate([[0], raw.astype(np.int64)]))
    smoothed = np.zeros(t, dtype=bool)
    for i in range(t):
        lo, hi = max(0, i - c), min(t, i + c + 1)
        smoothed[i] = 2 * (counts[hi] - counts[lo]) > (hi - lo)
    return smoothed

"""Speech front-end: WAV -> log-Mel spectrogram -> delta/delta-delta ->
64x64x3 segments, plus the on-disk feature cache format.

Framing: 25 ms Hamming windows every 10 ms (400/160 samples at 16 kHz), no
padding, so ``frames = (len - 400) // 160 + 1``. Segments are 64-frame
context windows advanced by 34 frames (30-frame overlap); utterances shorter
than one segment are padded by replicating the final frame.
"""

from __future__ import annotations

import json
import struct
import wave
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import MelConfig

CHANNEL_ORDER = ("static", "delta", "delta_delta")
CACHE_FORMAT_VERSION = 1


def load_wav(path: str | Path, expected_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Decode 16-bit PCM mono WAV to floats in [-1, 1] (divide by 32768).

    No silent resampling: when ``expected_rate`` is given, a mismatching file
    is rejected.
    """
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise ValueError(f"unsupported encoding in {path}: compressed WAV")
            if w.getnchannels() != 1:
                raise ValueError(f"mono required: {path} has {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise ValueError(
                    f"unsupported encoding in {path}: {8 * w.getsampwidth()}-bit, need 16-bit PCM"
                )
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise ValueError(f"unsupported encoding in {path}: {exc}") from exc
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(
            f"{path} is {rate} Hz, config expects {expected_rate} Hz; resample externally"
        )
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Triangular filters on the HTK mel scale, unnormalized (peak 1).

    Returns (filters, centers_hz) with filters shaped (n_mels, fft_size//2+1).
    """
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    filters = np.zeros((cfg.n_mels, freqs.size))
    for m in range(cfg.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        filters[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return filters, hz_pts[1:-1]


def frame_count(num_samples: int, cfg: MelConfig) -> int:
    if num_samples < cfg.win_len:
        return 0
    return (num_samples - cfg.win_len) // cfg.hop + 1


def log_mel(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """(frames, n_mels) natural-log mel power spectrogram, floor log_epsilon."""
    samples = np.asarray(samples, dtype=np.float64)
    n = frame_count(samples.size, cfg)
    if n < 1:
        raise ValueError(
            f"utterance shorter than one window ({samples.size} < {cfg.win_len} samples)"
        )
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(n)[:, None]
    frames = samples[idx] * np.hamming(cfg.win_len)
    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = np.abs(spectrum) ** 2
    filters, _ = mel_filterbank(cfg)
    return np.log(power @ filters.T + cfg.log_epsilon)


def delta(matrix: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression delta along the frame axis (axis 0), edges replicated:
    d_t = sum_n n*(c_{t+n} - c_{t-n}) / (2 * sum_n n^2)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] < 1:
        raise ValueError("need at least one frame")
    n = matrix.shape[0]
    padded = np.pad(matrix, ((window, window), (0, 0)), mode="edge")
    num = np.zeros_like(matrix)
    for k in range(1, window + 1):
        num += k * (padded[window + k : window + k + n] - padded[window - k : window - k + n])
    return num / (2.0 * sum(k * k for k in range(1, window + 1)))


@dataclass
class SegmentTensor:
    """One (n_mels, segment_frames, 3) feature window; channels are
    (static, delta, delta-delta)."""

    values: np.ndarray
    utterance_id: str = ""
    index: int = 0


def segment_count(num_frames: int, cfg: MelConfig) -> int:
    if num_frames < cfg.segment_frames:
        return 1
    return (num_frames - cfg.segment_frames) // cfg.segment_hop + 1


def segment(
    static: np.ndarray,
    delta1: np.ndarray,
    delta2: np.ndarray,
    cfg: MelConfig,
    utterance_id: str = "",
) -> list[SegmentTensor]:
    """Cut three aligned (frames, n_mels) matrices into context windows."""
    if not (static.shape == delta1.shape == delta2.shape):
        raise ValueError("channel matrices must share a shape")
    frames = static.shape[0]
    channels = np.stack([static, delta1, delta2], axis=-1)  # (frames, mels, 3)
    if frames < cfg.segment_frames:
        pad = np.repeat(channels[-1:], cfg.segment_frames - frames, axis=0)
        channels = np.concatenate([channels, pad], axis=0)
        frames = cfg.segment_frames
        starts = [0]
    else:
        starts = list(range(0, frames - cfg.segment_frames + 1, cfg.segment_hop))
    out = []
    for i, s in enumerate(starts):
        window = channels[s : s + cfg.segment_frames]  # (T, F, C)
        out.append(
            SegmentTensor(
                values=np.ascontiguousarray(window.transpose(1, 0, 2)),
                utterance_id=utterance_id,
                index=i,
            )
        )
    return out


def extract_utterance(samples: np.ndarray, cfg: MelConfig, utterance_id: str = "") -> np.ndarray:
    """Full front-end for one utterance: (n_segments, n_mels, frames, 3)."""
    static = log_mel(samples, cfg)
    d1 = delta(static, cfg.delta_window)
    d2 = delta(d1, cfg.delta_window)
    segs = segment(static, d1, d2, cfg, utterance_id)
    return np.stack([s.values for s in segs])


def normalize(
    segments: np.ndarray, stats: tuple[np.ndarray, np.ndarray] | None = None
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Per-channel z-score (channel axis last). ``stats`` must come from the
    training split; pass them back in for validation/test data."""
    segments = np.asarray(segments, dtype=np.float64)
    if stats is None:
        axes = tuple(range(segments.ndim - 1))
        mean = segments.mean(axis=axes)
        std = np.maximum(segments.std(axis=axes), 1e-8)
        stats = (mean, std)
    mean, std = stats
    return (segments - mean) / std, stats


def flatten_segments(segments: np.ndarray) -> np.ndarray:
    """(n, F, T, C) -> (n, C*F*T) in (channel, mel, frame) order."""
    n = segments.shape[0]
    return segments.transpose(0, 3, 1, 2).reshape(n, -1)


def save_cache(
    path: str | Path, utterance_id: str, segments: np.ndarray, cfg: MelConfig | None = None
) -> None:
    """Write one utterance's segments: JSON header + little-endian float32
    payload in (segment, channel, mel-bin, frame) order."""
    segments = np.asarray(segments)
    if segments.ndim != 4:
        raise ValueError("segments must be (n, mels, frames, channels)")
    payload = segments.transpose(0, 3, 1, 2)  # (S, C, F, T)
    header = {
        "format_version": CACHE_FORMAT_VERSION,
        "utterance": utterance_id,
        "shape": list(payload.shape),
        "channel_order": list(CHANNEL_ORDER[: payload.shape[1]]),
        "mel_config": asdict(cfg) if cfg is not None else None,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload.astype("<f4", copy=False).tobytes())


def load_cache(path: str | Path) -> tuple[str, np.ndarray, dict]:
    """Read a cache file back to (utterance_id, (n, F, T, C) float32, header)."""
    with open(path, "rb") as f:
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        if header["format_version"] != CACHE_FORMAT_VERSION:
            raise ValueError(f"unsupported cache version {header['format_version']}")
        shape = tuple(header["shape"])
        n = int(np.prod(shape))
        payload = np.frombuffer(f.read(n * 4), dtype="<f4").reshape(shape)
    return header["utterance"], payload.transpose(0, 2, 3, 1).astype(np.float32), header

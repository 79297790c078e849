"""WORLD-style vocoder: analysis to F0/envelope/aperiodicity and resynthesis.

Analysis runs every 5 ms on 16 kHz mono audio:

* F0 by normalized autocorrelation on 40 ms Hann windows (window-ACF bias
  corrected, parabolic peak interpolation, spectral refinement, 5-frame
  median de-glitcher). Voicing threshold 0.45 on the periodicity peak.
* Spectral envelope by pitch-adaptive cepstral liftering: the log power
  spectrum of a 2.5-period Hann frame is liftered at quefrency
  0.8 * (rate / f0) samples (fixed 6 ms for unvoiced frames) giving a
  513-bin envelope over 0..8 kHz, calibrated as a one-sided PSD.
* Aperiodicity per band (0-2, 2-4, 4-6, 6-8 kHz) as one minus the
  band-limited normalized autocorrelation at the pitch lag.

Synthesis excites minimum-phase filters derived from the envelope with a
pulse train (periodic part, pitch-synchronous overlap-add) plus white
noise (aperiodic part, hop-synchronous overlap-add). Pulse gains invert
the analysis-window calibration, so analyze(synthesize(frames)) lands
close to `frames`.
"""

from __future__ import annotations

from dataclasses import dataclass
import struct

import numpy as np

from .audio_io import AudioClip

SAMPLE_RATE = 16000
HOP_SECONDS = 0.005
HOP = int(SAMPLE_RATE * HOP_SECONDS)  # 80 samples
SP_BINS = 513
FFT_SIZE = 1024
AP_BANDS = 4
BAND_EDGES_HZ = (0.0, 2000.0, 4000.0, 6000.0, 8000.0)

F0_FLOOR = 55.0
F0_CEIL = 4000.0
F0_WINDOW = 640  # 40 ms
VOICING_THRESHOLD = 0.45
SP_FLOOR = 1e-12

_EPS = 1e-30
_SILENCE_PEAK = 1e-5


@dataclass
class VocoderFrames:
    """Per-5-ms F0 (Hz, 0 = unvoiced), 513-bin power envelope, 4-band ap."""

    f0: np.ndarray
    sp: np.ndarray
    ap: np.ndarray
    hop: float = HOP_SECONDS
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64).reshape(-1)
        self.sp = np.asarray(self.sp, dtype=np.float64)
        self.ap = np.asarray(self.ap, dtype=np.float64)

    @property
    def num_frames(self) -> int:
        return len(self.f0)

    def validate(self) -> "VocoderFrames":
        n = len(self.f0)
        if self.sp.shape != (n, SP_BINS) or self.ap.shape != (n, AP_BANDS):
            raise ValueError("f0, sp and ap must share the frame count")
        voiced = self.f0 > 0
        if np.any((self.f0[voiced] < F0_FLOOR) | (self.f0[voiced] > F0_CEIL)):
            raise ValueError(f"voiced f0 must lie in [{F0_FLOOR}, {F0_CEIL}] Hz")
        if np.any(self.sp < SP_FLOOR * 0.999) or not np.all(np.isfinite(self.sp)):
            raise ValueError("sp must be finite and floored at 1e-12")
        if np.any(self.ap < 0) or np.any(self.ap > 1):
            raise ValueError("ap must lie in [0, 1]")
        return self


def num_frames_for(num_samples: int, rate: int = SAMPLE_RATE) -> int:
    """floor(samples / hop) + 1, the shared frame-grid convention."""
    return int(num_samples // int(rate * HOP_SECONDS)) + 1


def _frame_centers(n_frames: int) -> np.ndarray:
    return np.arange(n_frames) * HOP


def _extract(x_padded: np.ndarray, center: int, half: int, pad: int) -> np.ndarray:
    start = center + pad - half
    return x_padded[start:start + 2 * half]


def _pad_signal(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect-pad; clips shorter than the pad fall back to zero padding."""
    if len(x) > pad:
        return np.pad(x, pad, mode="reflect")
    return np.pad(x, pad, mode="constant")


def _require_16k(clip: AudioClip):
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"vocoder expects {SAMPLE_RATE} Hz input, got {clip.sample_rate}")


# ---------------------------------------------------------------------------
# F0
# ---------------------------------------------------------------------------

_F0_NFFT = 2048
_LAG_MIN = int(SAMPLE_RATE / F0_CEIL)             # 4
_LAG_MAX = int(np.ceil(SAMPLE_RATE / F0_FLOOR))   # 291


def _window_acf_ratio(window: np.ndarray, lag_max: int) -> np.ndarray:
    """a_w(tau) / a_w(0): the taper a finite window imprints on the ACF."""
    spec = np.fft.rfft(window, _F0_NFFT)
    acf = np.fft.irfft(spec.real ** 2 + spec.imag ** 2)[:lag_max + 2]
    return acf / acf[0]


_F0_WINDOW_ARR = np.hanning(F0_WINDOW)
_F0_WACF = _window_acf_ratio(_F0_WINDOW_ARR, _LAG_MAX)


def _frame_nccf(frame: np.ndarray) -> np.ndarray:
    """Window-corrected normalized ACF up to the maximum search lag."""
    spec = np.fft.rfft(frame, _F0_NFFT)
    acf = np.fft.irfft(spec.real ** 2 + spec.imag ** 2)[:_LAG_MAX + 2]
    if acf[0] <= 0:
        return np.zeros(_LAG_MAX + 2)
    return np.minimum(acf / acf[0] / np.maximum(_F0_WACF, 0.05), 1.0)


def _parabolic(y: np.ndarray, k: int):
    """Refine index k by fitting a parabola; returns (position, value)."""
    if k <= 0 or k >= len(y) - 1:
        return float(k), float(y[k])
    denom = y[k - 1] - 2 * y[k] + y[k + 1]
    if denom >= 0:
        return float(k), float(y[k])
    delta = float(np.clip(0.5 * (y[k - 1] - y[k + 1]) / denom, -0.5, 0.5))
    val = float(y[k] - 0.25 * (y[k - 1] - y[k + 1]) * delta)
    return k + delta, val


def _pick_lag(nccf: np.ndarray):
    """Smallest local-max lag within 10% of the global peak (octave guard)."""
    seg = nccf[_LAG_MIN:_LAG_MAX + 1]
    interior = seg[1:-1]
    is_peak = (interior >= seg[:-2]) & (interior >= seg[2:])
    peaks = np.nonzero(is_peak)[0] + 1 + _LAG_MIN
    if len(peaks) == 0:
        k = int(np.argmax(seg)) + _LAG_MIN
        return _parabolic(nccf, k)
    best = float(nccf[peaks].max())
    for k in peaks:
        if nccf[k] >= 0.90 * best:
            return _parabolic(nccf, int(k))
    return _parabolic(nccf, int(peaks[np.argmax(nccf[peaks])]))


def _median_deglitch(f0: np.ndarray, width: int = 5) -> np.ndarray:
    """Median over voiced values in a 5-frame neighborhood (octave glitches)."""
    out = f0.copy()
    half = width // 2
    for t in np.nonzero(f0 > 0)[0]:
        vals = f0[max(0, t - half):t + half + 1]
        vals = vals[vals > 0]
        if len(vals) >= 3:
            out[t] = np.median(vals)
    return out


def estimate_f0(clip: AudioClip):
    """Estimate (f0 track, periodicity) with one value per 5 ms hop.

    Voiced frames carry f0 in [55, 4000] Hz; frames whose periodicity peak
    falls below the 0.45 voicing threshold carry 0.
    """
    _require_16k(clip)
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < F0_WINDOW:
        raise ValueError(f"clip shorter than one {F0_WINDOW}-sample analysis window")

    n_frames = num_frames_for(len(x))
    half = F0_WINDOW // 2
    pad = half
    xp = np.pad(x, pad, mode="reflect")

    f0 = np.zeros(n_frames)
    periodicity = np.zeros(n_frames)
    for t, c in enumerate(_frame_centers(n_frames)):
        seg = _extract(xp, c, half, pad)
        if np.max(np.abs(seg)) < _SILENCE_PEAK:
            continue
        frame = (seg - seg.mean()) * _F0_WINDOW_ARR
        lag, peak = _pick_lag(_frame_nccf(frame))
        periodicity[t] = float(np.clip(peak, 0.0, 1.0))
        if peak >= VOICING_THRESHOLD and lag >= _LAG_MIN:
            f0[t] = SAMPLE_RATE / lag

    # spectral refinement: quadratic interpolation of log magnitude around
    # the fundamental keeps the error within a few cents even at 2.5 kHz
    refine_fft = 4096
    for t, c in enumerate(_frame_centers(n_frames)):
        if f0[t] == 0:
            continue
        seg = _extract(xp, c, half, pad)
        frame = (seg - seg.mean()) * _F0_WINDOW_ARR
        mag = np.abs(np.fft.rfft(frame, refine_fft))
        lo = int(f0[t] * 0.75 * refine_fft / SAMPLE_RATE)
        hi = int(f0[t] * 1.33 * refine_fft / SAMPLE_RATE) + 1
        if hi - lo < 3 or hi > len(mag):
            continue
        k = lo + int(np.argmax(mag[lo:hi]))
        if 0 < k < len(mag) - 1:
            logs = np.log(mag[k - 1:k + 2] + _EPS)
            pos, _ = _parabolic(logs, 1)
            cand = (k + (pos - 1)) * SAMPLE_RATE / refine_fft
            if F0_FLOOR <= cand <= F0_CEIL:
                f0[t] = cand

    f0 = _median_deglitch(f0)
    f0[periodicity < VOICING_THRESHOLD] = 0.0
    np.clip(f0, 0.0, F0_CEIL, out=f0)
    f0[(f0 > 0) & (f0 < F0_FLOOR)] = F0_FLOOR
    return f0, periodicity


# ---------------------------------------------------------------------------
# spectral envelope
# ---------------------------------------------------------------------------

_UNVOICED_WINDOW = 400                         # 25 ms
_UNVOICED_LIFTER = int(0.006 * SAMPLE_RATE)    # 6 ms
_MIN_PITCH_WINDOW = 128
_MAX_PITCH_WINDOW = FFT_SIZE


def _analysis_window_len(f0_hz: float) -> int:
    return int(np.clip(int(2.5 * SAMPLE_RATE / f0_hz), _MIN_PITCH_WINDOW,
                       _MAX_PITCH_WINDOW))


def _frame_envelope(seg: np.ndarray, lifter_cut: int) -> np.ndarray:
    """Cepstrally liftered one-sided PSD of a Hann-windowed segment."""
    n = len(seg)
    w = np.hanning(n)
    frame = (seg - seg.mean()) * w
    psd = np.abs(np.fft.rfft(frame, FFT_SIZE)) ** 2 * (2.0 / (SAMPLE_RATE * np.sum(w * w)))
    logp = np.log(np.maximum(psd, SP_FLOOR))
    cep = np.fft.irfft(logp, FFT_SIZE)
    cut = min(max(lifter_cut, 2), FFT_SIZE // 2)
    cep[cut:FFT_SIZE - cut + 1] = 0.0
    smooth = np.fft.rfft(cep, FFT_SIZE).real
    return np.maximum(np.exp(smooth), SP_FLOOR)


def estimate_envelope(clip: AudioClip, f0: np.ndarray) -> np.ndarray:
    """513-bin positive power envelope per frame (pitch ripple removed)."""
    _require_16k(clip)
    x = np.asarray(clip.samples, dtype=np.float64)
    n_frames = num_frames_for(len(x))
    f0 = np.asarray(f0, dtype=np.float64)
    if len(f0) != n_frames:
        raise ValueError(f"f0 track has {len(f0)} frames, clip implies {n_frames}")

    pad = _MAX_PITCH_WINDOW
    xp = np.pad(x, pad, mode="reflect")
    sp = np.empty((n_frames, SP_BINS))
    for t, c in enumerate(_frame_centers(n_frames)):
        if f0[t] > 0:
            win = _analysis_window_len(f0[t])
            lifter = int(0.8 * SAMPLE_RATE / f0[t])
        else:
            win = _UNVOICED_WINDOW
            lifter = _UNVOICED_LIFTER
        seg = _extract(xp, c, win // 2, pad)
        sp[t] = _frame_envelope(seg, lifter)
    return sp


# ---------------------------------------------------------------------------
# aperiodicity
# ---------------------------------------------------------------------------

def _band_edges_bins():
    edges = np.round(np.asarray(BAND_EDGES_HZ) / SAMPLE_RATE * FFT_SIZE).astype(int)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(AP_BANDS)]


_AP_NFFT = 2048
_AP_WACF = _window_acf_ratio(_F0_WINDOW_ARR, _LAG_MAX)


def estimate_aperiodicity(clip: AudioClip, f0: np.ndarray) -> np.ndarray:
    """Per-band noise fraction in [0, 1]; unvoiced frames get all ones."""
    _require_16k(clip)
    x = np.asarray(clip.samples, dtype=np.float64)
    n_frames = num_frames_for(len(x))
    f0 = np.asarray(f0, dtype=np.float64)
    if len(f0) != n_frames:
        raise ValueError(f"f0 track has {len(f0)} frames, clip implies {n_frames}")

    half = F0_WINDOW // 2
    pad = half
    xp = np.pad(x, pad, mode="reflect")
    # band masks on the 2048-point grid used for the band-limited ACF
    band_bins = np.round(np.asarray(BAND_EDGES_HZ) / SAMPLE_RATE * _AP_NFFT).astype(int)

    ap = np.ones((n_frames, AP_BANDS))
    for t, c in enumerate(_frame_centers(n_frames)):
        if f0[t] <= 0:
            continue
        seg = _extract(xp, c, half, pad)
        frame = (seg - seg.mean()) * _F0_WINDOW_ARR
        spec = np.fft.rfft(frame, _AP_NFFT)
        power = spec.real ** 2 + spec.imag ** 2
        total = float(power.sum()) + _EPS
        lag = SAMPLE_RATE / f0[t]
        k = int(round(lag))
        if k > _LAG_MAX:
            continue
        for b in range(AP_BANDS):
            lo, hi = band_bins[b], band_bins[b + 1]
            bpow = np.zeros_like(power)
            bpow[lo:hi] = power[lo:hi]
            if bpow.sum() < 1e-8 * total:
                continue  # energy-starved band keeps the all-noise default
            bacf = np.fft.irfft(bpow)[:_LAG_MAX + 2]
            bacf = bacf / max(bacf[0], _EPS) / np.maximum(_AP_WACF, 0.05)
            kk = k
            if 0 < k < _LAG_MAX:
                kk = k - 1 + int(np.argmax(bacf[k - 1:k + 2]))
            _, peak = _parabolic(bacf, kk)
            ap[t, b] = float(np.clip(1.0 - peak, 0.0, 1.0))
    return ap


# ---------------------------------------------------------------------------
# analysis / synthesis
# ---------------------------------------------------------------------------

def analyze(clip: AudioClip) -> VocoderFrames:
    """Full analysis; frame count = floor(duration / 5 ms) + 1."""
    f0, _ = estimate_f0(clip)
    sp = estimate_envelope(clip, f0)
    ap = estimate_aperiodicity(clip, f0)
    return VocoderFrames(f0, sp, ap).validate()


def _min_phase_ir(log_mag: np.ndarray) -> np.ndarray:
    """Minimum-phase impulse response via the cepstrum sign-flip fold."""
    cep = np.fft.irfft(log_mag, FFT_SIZE)
    folded = np.zeros(FFT_SIZE)
    folded[0] = cep[0]
    folded[1:FFT_SIZE // 2] = 2.0 * cep[1:FFT_SIZE // 2]
    folded[FFT_SIZE // 2] = cep[FFT_SIZE // 2]
    return np.fft.irfft(np.exp(np.fft.rfft(folded)), FFT_SIZE)


def _band_values_to_bins(band_vals: np.ndarray) -> np.ndarray:
    """Expand 4 per-band values to 513 bins (piecewise constant)."""
    out = np.empty(SP_BINS)
    for b, (lo, hi) in enumerate(_band_edges_bins()):
        out[lo:hi] = band_vals[b]
    out[-1] = band_vals[-1]
    return out


def _pulse_gain_sq(f0_hz: float) -> float:
    """|H|^2 / sp for the per-pulse filter.

    Analysis measures a harmonic line of cosine amplitude |c_k| as
    sp = |c_k|^2 * 4N/(3 fs) for an N-sample Hann window; an impulse train
    of period T = fs/f0 samples through H yields lines |c_k| = |H|/T.
    """
    period = SAMPLE_RATE / f0_hz
    return 3.0 * SAMPLE_RATE / (4.0 * _analysis_window_len(f0_hz)) * period * period


def synthesize(frames: VocoderFrames, seed: int = 0) -> AudioClip:
    """Resynthesize audio; output length is (frames - 1) * hop samples."""
    frames.validate()
    n_frames = frames.num_frames
    n_out = (n_frames - 1) * HOP
    if n_out <= 0:
        return AudioClip(np.zeros(0, dtype=np.float32), SAMPLE_RATE)
    y = np.zeros(n_out + 2 * FFT_SIZE)

    f0_frame = frames.f0
    voiced = f0_frame > 0

    # periodic part: one minimum-phase impulse response per pulse
    t = 0.0
    while t < n_out:
        fi = t / HOP
        i0 = int(fi)
        i1 = min(i0 + 1, n_frames - 1)
        frac = fi - i0
        if voiced[i0] and voiced[i1]:
            f0_here = (1 - frac) * f0_frame[i0] + frac * f0_frame[i1]
        elif voiced[i0] or voiced[i1]:
            f0_here = f0_frame[i0] if voiced[i0] else f0_frame[i1]
        else:
            t += HOP / 2.0  # skip through unvoiced regions
            continue
        sp_here = (1 - frac) * frames.sp[i0] + frac * frames.sp[i1]
        ap_here = (1 - frac) * frames.ap[i0] + frac * frames.ap[i1]
        periodic_frac = np.clip(1.0 - _band_values_to_bins(ap_here), 0.0, 1.0)
        mag_sq = sp_here * periodic_frac * _pulse_gain_sq(f0_here)
        ir = _min_phase_ir(0.5 * np.log(np.maximum(mag_sq, 1e-28)))
        pos = int(np.floor(t))
        w1 = t - pos  # fractional-delay split keeps pulse spacing exact
        seg = min(FFT_SIZE, len(y) - pos - 1)
        if seg > 0:
            y[pos:pos + seg] += (1.0 - w1) * ir[:seg]
            y[pos + 1:pos + 1 + seg] += w1 * ir[:seg]
        t += SAMPLE_RATE / f0_here

    # aperiodic part: hop-synchronous OLA of shaped noise (Hann, 50% overlap)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n_out + 2 * HOP)
    nwin = np.hanning(2 * HOP)
    for i in range(n_frames):
        ap_bins = _band_values_to_bins(frames.ap[i])
        gain = np.sqrt(frames.sp[i] * ap_bins * (SAMPLE_RATE / 2.0))
        start = i * HOP - HOP
        seg = np.zeros(2 * HOP)
        s0 = max(0, -start)
        s1 = min(2 * HOP, len(noise) - start)
        if s1 <= s0:
            continue
        seg[s0:s1] = noise[start + s0:start + s1]
        spec = np.fft.rfft(seg * nwin, FFT_SIZE)
        shaped = np.fft.irfft(spec * gain, FFT_SIZE)
        pos = start
        a0 = max(0, -pos)
        a1 = min(FFT_SIZE, len(y) - pos)
        if a1 > a0:
            y[pos + a0:pos + a1] += shaped[a0:a1]

    return AudioClip(y[:n_out].astype(np.float32), SAMPLE_RATE)


# ---------------------------------------------------------------------------
# STCF v1 feature files
# ---------------------------------------------------------------------------

_STCF_MAGIC = b"STCF"
_STCF_VERSION = 1


def write_stcf(path, frames: VocoderFrames, domain_id: int | None = None,
               features: np.ndarray | None = None) -> None:
    """Write an STCF v1 file, optionally appending a feature chunk."""
    n = frames.num_frames
    with open(path, "wb") as fh:
        fh.write(_STCF_MAGIC)
        fh.write(struct.pack("<IIfII", _STCF_VERSION, n, frames.hop, SP_BINS, AP_BANDS))
        fh.write(np.ascontiguousarray(frames.f0, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(frames.sp, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(frames.ap, dtype="<f4").tobytes())
        if features is not None:
            if domain_id is None:
                raise ValueError("feature chunk requires a domain id")
            feats = np.ascontiguousarray(features, dtype="<f4")
            if feats.ndim != 2 or feats.shape[0] != n:
                raise ValueError("feature chunk must be frames x dims")
            fh.write(struct.pack("<I", int(domain_id)))
            fh.write(feats.tobytes())


def read_stcf(path):
    """Read STCF v1 -> (VocoderFrames, domain_id | None, features | None)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _STCF_MAGIC:
        raise ValueError(f"{path}: not an STCF file")
    version, n, hop, bins, bands = struct.unpack("<IIfII", data[4:24])
    if version != _STCF_VERSION:
        raise ValueError(f"{path}: unsupported STCF version {version}")
    if bins != SP_BINS or bands != AP_BANDS:
        raise ValueError(f"{path}: unexpected geometry ({bins} bins, {bands} bands)")
    pos = 24
    f0 = np.frombuffer(data[pos:pos + 4 * n], dtype="<f4").astype(np.float64)
    pos += 4 * n
    sp = np.frombuffer(data[pos:pos + 4 * n * bins], dtype="<f4").reshape(n, bins).astype(np.float64)
    pos += 4 * n * bins
    ap = np.frombuffer(data[pos:pos + 4 * n * bands], dtype="<f4").reshape(n, bands).astype(np.float64)
    pos += 4 * n * bands
    frames = VocoderFrames(f0, np.maximum(sp, SP_FLOOR), np.clip(ap, 0.0, 1.0), hop=float(hop))
    domain_id = None
    features = None
    if pos < len(data):
        (domain_id,) = struct.unpack("<I", data[pos:pos + 4])
        pos += 4
        rest = np.frombuffer(data[pos:], dtype="<f4")
        if rest.size % n:
            raise ValueError(f"{path}: feature chunk size not divisible by frame count")
        features = rest.reshape(n, -1).astype(np.float64)
    return frames, int(domain_id) if domain_id is not None else None, features

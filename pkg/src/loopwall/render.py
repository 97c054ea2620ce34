"""Synthesis, session mixing and WAV emission.

All audio is synthesized (decaying partials and filtered noise stand in for
the original recorded percussion) and fully deterministic: the same timbre,
note and config always produce bit-identical buffers.  Loops render to
exactly their grid length, with note tails wrapped around to the start so
the files repeat seamlessly.
"""

from __future__ import annotations

import hashlib
import struct
import wave
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .loopgen import Loop, LoopLibrary, Timbre
from .music import Pattern, Pitch, TimebaseConfig

TRACK_GAIN = 1.0 / 16.0
CHANNELS = 2

# Inharmonic partial ratios typical of struck bells.
BELL_RATIOS = np.array([0.56, 0.92, 1.19, 1.71, 2.00, 2.74, 3.00, 3.76, 4.07])


class RenderError(Exception):
    pass


class PitchRequired(RenderError):
    pass


class PitchForbidden(RenderError):
    pass


class UnknownLoopId(RenderError):
    pass


class MalformedFile(RenderError):
    pass


@dataclass
class PcmBuffer:
    """Float samples in [-1, 1], shape (frames, channels)."""

    data: np.ndarray
    sample_rate_hz: int
    clipped_samples: int = 0

    def __post_init__(self):
        if self.data.ndim == 1:
            self.data = self.data[:, np.newaxis]
        if not np.all(np.isfinite(self.data)):
            raise ValueError("buffer contains NaN or Inf")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]


def _note_seed(timbre: Timbre, note_number: int) -> int:
    digest = hashlib.sha256(f"{timbre.id}|{note_number}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _decay_env(n: int, decay_s: float, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    return np.exp(-t * (6.0 / decay_s))     # ~-52 dB at the nominal decay time


def _attack(n: int, sr: int, ms: float = 2.0) -> np.ndarray:
    a = max(1, int(sr * ms / 1000.0))
    env = np.ones(n)
    env[:a] = np.linspace(0.0, 1.0, a, endpoint=False)
    return env


def _partial_bank(freqs, amps, n: int, decay_s: float, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    out = np.zeros(n)
    for k, (f, a) in enumerate(zip(freqs, amps)):
        if f >= sr / 2:
            continue
        # Higher partials die faster, as on real struck bars and bells.
        env = np.exp(-t * (6.0 / decay_s) * (1.0 + 0.7 * k))
        out += a * env * np.sin(2 * np.pi * f * t)
    return out


def _noise_component(n: int, timbre: Timbre, sr: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    # One-pole lowpass y[i] = a*x[i] + (1-a)*y[i-1], done as a truncated
    # convolution with the exponential impulse response; brightness sets
    # the cutoff.
    alpha = 0.05 + 0.93 * timbre.brightness
    b = 1.0 - alpha
    kernel = alpha * b ** np.arange(min(n, 2048))
    return np.convolve(noise, kernel)[:n]


def synth_note(timbre: Timbre, pitch: Optional[Pitch], duration_pulses: int,
               velocity: float, config: TimebaseConfig) -> PcmBuffer:
    """Render one note (mono) with its natural decay tail included."""
    if timbre.family in ("pitched-mallet", "bell") and pitch is None:
        raise PitchRequired(f"timbre {timbre.id} needs a pitch")
    if timbre.family == "unpitched-percussion" and pitch is not None:
        raise PitchForbidden(f"timbre {timbre.id} is unpitched")
    sr = config.sample_rate_hz
    held = duration_pulses * config.samples_per_pulse
    tail = int(sr * timbre.decay_s * 1.2)
    n = held + tail
    if velocity == 0.0:
        return PcmBuffer(np.zeros(n), sr)
    if timbre.family == "unpitched-percussion":
        seed = _note_seed(timbre, -1)
        noise = _noise_component(n, timbre, sr, seed)
        peak = np.max(np.abs(noise))
        if peak > 0:
            noise /= peak
        res_freq = 120.0 + 2400.0 * timbre.brightness
        resonant = _partial_bank(
            [res_freq, res_freq * (2.0 + timbre.inharmonicity)],
            [1.0, 0.4], n, timbre.decay_s, sr)
        sig = timbre.noise_fraction * noise * _decay_env(n, timbre.decay_s, sr) \
            + (1.0 - timbre.noise_fraction) * resonant
    else:
        f0 = pitch.frequency_hz()
        if timbre.family == "bell":
            harmonic = np.arange(1, len(BELL_RATIOS) + 1, dtype=float)
            ratios = (1.0 - timbre.inharmonicity) * harmonic \
                + timbre.inharmonicity * BELL_RATIOS * (harmonic[0] / BELL_RATIOS[0])
            freqs = f0 * ratios / ratios[0]
        else:
            freqs = f0 * np.arange(1, 9, dtype=float) \
                * (1.0 + timbre.inharmonicity * 0.002
                   * np.arange(0, 8, dtype=float) ** 2)
        amps = timbre.brightness ** np.arange(len(freqs)) / (1 + np.arange(len(freqs)) * 0.3)
        sig = _partial_bank(freqs, amps, n, timbre.decay_s, sr)
        if timbre.noise_fraction > 0:
            strike = _noise_component(n, timbre, sr, _note_seed(timbre, pitch.note_number))
            strike_env = _decay_env(n, min(0.03, timbre.decay_s), sr)
            peak = np.max(np.abs(strike))
            if peak > 0:
                sig = (1 - timbre.noise_fraction) * sig \
                    + timbre.noise_fraction * (strike / peak) * strike_env
    sig *= _attack(n, sr)
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig = sig * (velocity / peak)
    return PcmBuffer(sig, sr)


def render_pattern_mono(pattern: Pattern, timbre: Timbre,
                        config: TimebaseConfig) -> np.ndarray:
    """Mono pattern render; tails wrap so the buffer loops seamlessly."""
    spm = config.samples_per_measure
    spp = config.samples_per_pulse
    total = pattern.length_measures * spm
    out = np.zeros(total)
    for ev in pattern.events:
        note = synth_note(timbre, ev.pitch, ev.duration_pulses, ev.velocity,
                          config).data[:, 0]
        start = ev.onset_pulse * spp
        idx = (start + np.arange(note.shape[0])) % total
        np.add.at(out, idx, note)
    return out


def render_loop(loop: Loop, config: TimebaseConfig) -> PcmBuffer:
    """Stereo (centered) render of one loop at its exact grid length."""
    mono = render_pattern_mono(loop.pattern, loop.timbre, config)
    g = 1.0 / np.sqrt(2.0)
    return PcmBuffer(np.stack([mono * g, mono * g], axis=1),
                     config.sample_rate_hz)


def render_announcement(ann, library: LoopLibrary,
                        config: TimebaseConfig) -> PcmBuffer:
    """One-measure announcement: bell strike over the toll figure, centered."""
    from .loopgen import BELL_TIMBRE
    timbre = library.loop_by_id(ann.collage_loop_id).timbre
    mono = render_pattern_mono(ann.toll_pattern, timbre, config)
    bell = synth_note(BELL_TIMBRE, ann.bell_pitch, 4, 1.0,
                      config).data[:, 0]
    seg = bell[:mono.shape[0]]
    out = mono.copy()
    out[:seg.shape[0]] += seg
    peak = max(1.0, float(np.max(np.abs(out))))
    out /= peak
    g = 1.0 / np.sqrt(2.0)
    return PcmBuffer(np.stack([out * g, out * g], axis=1),
                     config.sample_rate_hz)


def pan_gains(pan: float) -> tuple[float, float]:
    """Constant-power stereo gains for pan in [-1, 1]."""
    theta = (pan + 1.0) * np.pi / 4.0
    return float(np.cos(theta)), float(np.sin(theta))


def station_pan(station: int, slot: int) -> float:
    """Spread the six stations across the field; slots sit slightly apart."""
    base = -0.8 + (station - 1) * 0.32
    return base + (0.06 if slot == 2 else -0.06)


def equal_power_out(n: int) -> np.ndarray:
    return np.cos(np.linspace(0.0, np.pi / 2.0, n, endpoint=False))


def equal_power_in(n: int) -> np.ndarray:
    return np.sin(np.linspace(0.0, np.pi / 2.0, n, endpoint=False))


class _RenderCache:
    def __init__(self, library: LoopLibrary, config: TimebaseConfig):
        self.library = library
        self.config = config
        self._loops: dict[str, np.ndarray] = {}
        self._patterns: dict[str, np.ndarray] = {}

    def loop_mono(self, loop_id: str) -> np.ndarray:
        if loop_id not in self._loops:
            loop = self.library.loop_by_id(loop_id)
            self._loops[loop_id] = render_pattern_mono(
                loop.pattern, loop.timbre, self.config)
        return self._loops[loop_id]

    def toll_mono(self, ann) -> np.ndarray:
        key = f"toll:{ann.id}"
        if key not in self._patterns:
            timbre = self.library.loop_by_id(ann.collage_loop_id).timbre
            self._patterns[key] = render_pattern_mono(
                ann.toll_pattern, timbre, self.config)
        return self._patterns[key]

    def bell_mono(self, ann) -> np.ndarray:
        from .loopgen import BELL_TIMBRE
        key = f"bell:{ann.id}"
        if key not in self._patterns:
            self._patterns[key] = synth_note(
                BELL_TIMBRE, ann.bell_pitch, 4, 1.0, self.config).data[:, 0]
        return self._patterns[key]


def _bed_gain_curve(events, bed: int, total_samples: int, spm: int) -> np.ndarray:
    """Per-sample gain for one bed track from its fade events."""
    gain = np.ones(total_samples)
    level = 1.0
    cursor = 0
    for ev in events:
        if ev.bed != bed or ev.kind not in ("BedFadeOut", "BedFadeIn"):
            continue
        at = min(ev.at_sample, total_samples)
        gain[cursor:at] = level
        fade_len = min(ev.fade_measures * spm, total_samples - at)
        if ev.kind == "BedFadeOut":
            curve = equal_power_out(ev.fade_measures * spm)[:fade_len]
            level = 0.0
        else:
            curve = equal_power_in(ev.fade_measures * spm)[:fade_len]
            level = 1.0
        gain[at:at + fade_len] = curve
        cursor = at + fade_len
    gain[cursor:] = level
    return gain


def _place_tiled(dest_l, dest_r, mono, start, end, gl, gr, fade_tail_spm=0):
    """Tile a mono loop into [start, end) with optional equal-power tail fade."""
    total = dest_l.shape[0]
    start = max(0, start)
    end = min(end, total)
    if end <= start:
        return
    length = end - start
    reps = int(np.ceil(length / mono.shape[0]))
    tiled = np.tile(mono, reps)[:length]
    if fade_tail_spm and length >= fade_tail_spm:
        tiled = tiled.copy()
        tiled[-fade_tail_spm:] *= equal_power_out(fade_tail_spm)
    dest_l[start:end] += tiled * gl
    dest_r[start:end] += tiled * gr


def mix_session(events, library: LoopLibrary, total_measures: int,
                config: TimebaseConfig,
                lifetime_fallback_measures: int = 48) -> PcmBuffer:
    """Sample-accurate sum of beds, collages and announcements.

    Per-track gain is 1/16; beds sit centered, collages pan by station slot.
    The output is clamped to [-1, 1] with a clip counter.
    """
    spm = config.samples_per_measure
    total = total_measures * spm
    cache = _RenderCache(library, config)
    left = np.zeros(total)
    right = np.zeros(total)
    center_l, center_r = pan_gains(0.0)

    events = sorted(events, key=lambda e: e.at_sample)
    for ev in events:
        if ev.loop_id is not None:
            try:
                library.loop_by_id(ev.loop_id)
            except KeyError:
                raise UnknownLoopId(ev.loop_id)

    # Beds: always present from measure 0, gain driven by fade events.
    for bed in range(1, 7):
        mono = cache.loop_mono(f"BED{bed:02d}")
        reps = int(np.ceil(total / mono.shape[0]))
        tiled = np.tile(mono, reps)[:total]
        tiled = tiled * _bed_gain_curve(events, bed, total, spm) * TRACK_GAIN
        left += tiled * center_l
        right += tiled * center_r

    # Collages: from CollageStart to the matching CollageEnd (or session end),
    # with a one-measure equal-power fade into the end boundary.
    starts = [ev for ev in events if ev.kind == "CollageStart"]
    for ev in starts:
        end_sample = total
        for other in events:
            if (other.kind == "CollageEnd" and other.loop_id == ev.loop_id
                    and other.station == ev.station and other.slot == ev.slot
                    and other.at_sample > ev.at_sample):
                end_sample = other.at_sample
                break
        gl, gr = pan_gains(station_pan(ev.station, ev.slot))
        mono = cache.loop_mono(ev.loop_id) * TRACK_GAIN
        fade = spm if end_sample < total else 0
        _place_tiled(left, right, mono, ev.at_sample, end_sample, gl, gr, fade)

    # Announcements: bell strike and one-measure toll figure.
    for ev in events:
        if ev.kind not in ("BellStrike", "TollStart"):
            continue
        ann = library.announcement(ev.station, ev.slot)
        gl, gr = pan_gains(station_pan(ev.station, ev.slot))
        mono = (cache.bell_mono(ann) if ev.kind == "BellStrike"
                else cache.toll_mono(ann)) * TRACK_GAIN
        end = min(total, ev.at_sample + mono.shape[0])
        seg = mono[:end - ev.at_sample]
        left[ev.at_sample:end] += seg * gl
        right[ev.at_sample:end] += seg * gr

    stereo = np.stack([left, right], axis=1)
    clipped = int(np.count_nonzero(np.abs(stereo) > 1.0))
    stereo = np.clip(stereo, -1.0, 1.0)
    return PcmBuffer(stereo, config.sample_rate_hz, clipped)


def quantize16(data: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(data * 32767.0), -32768, 32767).astype("<i2")


def write_wav(pcm: PcmBuffer, destination) -> None:
    """Canonical RIFF/WAVE, PCM tag 1, 16-bit little-endian."""
    if not np.all(np.isfinite(pcm.data)):
        raise ValueError("refusing to write non-finite samples")
    ints = quantize16(pcm.data)
    with wave.open(str(destination), "wb") as wf:
        wf.setnchannels(pcm.channels)
        wf.setsampwidth(2)
        wf.setframerate(pcm.sample_rate_hz)
        wf.writeframes(ints.tobytes())


def read_wav(source) -> PcmBuffer:
    try:
        with wave.open(str(source), "rb") as wf:
            if wf.getsampwidth() != 2 or wf.getcomptype() != "NONE":
                raise MalformedFile("only 16-bit PCM is supported")
            channels = wf.getnchannels()
            sr = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise MalformedFile(str(exc)) from exc
    ints = np.frombuffer(raw, dtype="<i2").reshape(-1, channels)
    return PcmBuffer(ints.astype(np.float64) / 32767.0, sr)

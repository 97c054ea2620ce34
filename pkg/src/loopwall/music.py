"""Timebase, pitch, scale and pattern primitives.

Everything downstream (generation, compatibility analysis, scheduling,
rendering) shares the integer sample grid defined here: one measure is an
exact whole number of samples, subdivided into an exact whole number of
pulses.  All types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional


class MusicError(Exception):
    """Base class for grid and pattern validation errors."""


class NonIntegerGrid(MusicError):
    """The tempo/meter/sample-rate combination does not yield an integer grid."""


class MeasureTooLong(MusicError):
    """Measure duration is at or above the two-second response bound."""


class UnsupportedMeter(MusicError):
    """A pattern constructor only supports specific meters."""


class NoPitchedEvents(MusicError):
    """An operation requiring pitched events got a fully unpitched pattern."""


MAX_MEASURE_SECONDS = 2.0

NOTE_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]


@dataclass(frozen=True)
class TimebaseConfig:
    """Tempo, meter, pulse grid and sample rate.

    Rejects any combination where one measure is not an exact integer number
    of samples, where the pulse grid does not divide the measure exactly, or
    where the measure lasts two seconds or longer.
    """

    tempo_bpm: Fraction
    beats_per_measure: int
    pulses_per_beat: int
    sample_rate_hz: int

    def __init__(self, tempo_bpm, beats_per_measure=4, pulses_per_beat=4,
                 sample_rate_hz=44100):
        object.__setattr__(self, "tempo_bpm", Fraction(tempo_bpm))
        object.__setattr__(self, "beats_per_measure", int(beats_per_measure))
        object.__setattr__(self, "pulses_per_beat", int(pulses_per_beat))
        object.__setattr__(self, "sample_rate_hz", int(sample_rate_hz))
        if self.tempo_bpm <= 0:
            raise ValueError("tempo must be positive")
        if self.beats_per_measure < 1 or self.pulses_per_beat < 1:
            raise ValueError("meter and grid counts must be >= 1")
        if self.sample_rate_hz < 1:
            raise ValueError("sample rate must be >= 1")
        samples = Fraction(self.sample_rate_hz * 60 * self.beats_per_measure,
                           1) / self.tempo_bpm
        if samples.denominator != 1:
            raise NonIntegerGrid(
                f"one measure is {float(samples):.4f} samples; "
                "not an integer at this tempo/sample-rate")
        seconds = Fraction(samples.numerator, self.sample_rate_hz)
        if seconds >= MAX_MEASURE_SECONDS:
            raise MeasureTooLong(
                f"measure lasts {float(seconds):.4f} s; must be under "
                f"{MAX_MEASURE_SECONDS} s")
        if samples.numerator % self.pulses_per_measure != 0:
            raise NonIntegerGrid(
                f"{self.pulses_per_measure} pulses do not divide "
                f"{samples.numerator} samples per measure exactly")

    @property
    def pulses_per_measure(self) -> int:
        return self.beats_per_measure * self.pulses_per_beat

    @property
    def samples_per_measure(self) -> int:
        return measure_samples(self)

    @property
    def samples_per_pulse(self) -> int:
        return self.samples_per_measure // self.pulses_per_measure

    def to_dict(self) -> dict:
        return {
            "tempo_bpm": [self.tempo_bpm.numerator, self.tempo_bpm.denominator],
            "beats_per_measure": self.beats_per_measure,
            "pulses_per_beat": self.pulses_per_beat,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimebaseConfig":
        tempo = d["tempo_bpm"]
        if isinstance(tempo, (list, tuple)):
            tempo = Fraction(tempo[0], tempo[1])
        else:
            tempo = Fraction(tempo)
        return cls(tempo, d["beats_per_measure"], d["pulses_per_beat"],
                   d["sample_rate_hz"])


def default_config() -> TimebaseConfig:
    """44100 Hz, 4/4 at 126 BPM, 16 pulses per measure (84000 samples)."""
    return TimebaseConfig(126, 4, 4, 44100)


def exact_measure_samples(tempo_bpm, beats_per_measure: int,
                          sample_rate_hz: int) -> int:
    """Raw grid arithmetic: sample_rate * 60 * beats / tempo, exactly."""
    samples = Fraction(sample_rate_hz * 60 * beats_per_measure) / Fraction(tempo_bpm)
    if samples.denominator != 1:
        raise NonIntegerGrid(f"{float(samples):.4f} samples per measure")
    return samples.numerator


def measure_samples(config: TimebaseConfig) -> int:
    """Exact integer sample count of one measure."""
    return exact_measure_samples(config.tempo_bpm, config.beats_per_measure,
                                 config.sample_rate_hz)


@dataclass(frozen=True, order=True)
class Pitch:
    """Semitone pitch in standard concert numbering (A4 = 69 = 440 Hz)."""

    note_number: int

    def __post_init__(self):
        if not 0 <= self.note_number <= 127:
            raise ValueError(f"note number {self.note_number} out of 0..127")

    @property
    def pitch_class(self) -> int:
        return self.note_number % 12

    @property
    def name(self) -> str:
        octave = self.note_number // 12 - 1
        return f"{NOTE_NAMES[self.pitch_class]}{octave}"

    def frequency_hz(self) -> float:
        return 440.0 * 2.0 ** ((self.note_number - 69) / 12.0)


def interval_class(a: Pitch | int, b: Pitch | int) -> int:
    """Smaller of the semitone distance mod 12 and its complement (0..6)."""
    pa = a.note_number if isinstance(a, Pitch) else int(a)
    pb = b.note_number if isinstance(b, Pitch) else int(b)
    d = abs(pa - pb) % 12
    return min(d, 12 - d)


@dataclass(frozen=True)
class Scale:
    """A pitch-class set with a designated root."""

    root: int
    members: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise ValueError("scale must have at least one member")
        if self.root not in self.members:
            raise ValueError("root must be a member of the scale")


# G dominant: G A B C D E F with optional F#, so both sevenths are members.
G_DOMINANT = Scale(root=7, members=frozenset({7, 9, 11, 0, 2, 4, 5, 6}))
# The emphasized subset used to keep overlapped loops consonant.
G_PENTATONIC = Scale(root=7, members=frozenset({7, 9, 11, 2, 4}))


def scale_contains(scale: Scale, pitch: Pitch) -> bool:
    return pitch.pitch_class in scale.members


@dataclass(frozen=True)
class NoteEvent:
    """One grid-quantized note: unpitched when ``pitch`` is None."""

    onset_pulse: int
    duration_pulses: int
    pitch: Optional[Pitch] = None
    velocity: float = 1.0

    def __post_init__(self):
        if self.onset_pulse < 0:
            raise ValueError("onset must be >= 0")
        if self.duration_pulses < 1:
            raise ValueError("duration must be >= 1 pulse")
        if not 0.0 <= self.velocity <= 1.0:
            raise ValueError("velocity must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "onset_pulse": self.onset_pulse,
            "duration_pulses": self.duration_pulses,
            "pitch": None if self.pitch is None else self.pitch.note_number,
            "velocity": self.velocity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoteEvent":
        pitch = None if d["pitch"] is None else Pitch(d["pitch"])
        return cls(d["onset_pulse"], d["duration_pulses"], pitch, d["velocity"])


@dataclass(frozen=True)
class Pattern:
    """An ordered sequence of note events over a whole number of measures."""

    length_measures: int
    events: tuple[NoteEvent, ...]
    pulses_per_measure: int = 16

    def __init__(self, length_measures: int, events: Iterable[NoteEvent],
                 pulses_per_measure: int = 16):
        events = tuple(sorted(events, key=lambda e: (e.onset_pulse,
                                                     e.pitch is not None,
                                                     e.pitch or Pitch(0))))
        object.__setattr__(self, "length_measures", int(length_measures))
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "pulses_per_measure", int(pulses_per_measure))
        if self.length_measures < 1:
            raise ValueError("pattern must span at least one measure")
        limit = self.length_pulses
        for ev in events:
            if ev.onset_pulse >= limit:
                raise ValueError(
                    f"onset {ev.onset_pulse} beyond pattern end ({limit})")

    @property
    def length_pulses(self) -> int:
        return self.length_measures * self.pulses_per_measure

    def pitched_events(self) -> list[NoteEvent]:
        return [e for e in self.events if e.pitch is not None]

    def onsets(self) -> list[int]:
        return [e.onset_pulse for e in self.events]

    def to_dict(self) -> dict:
        return {
            "length_measures": self.length_measures,
            "pulses_per_measure": self.pulses_per_measure,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pattern":
        return cls(d["length_measures"],
                   [NoteEvent.from_dict(e) for e in d["events"]],
                   d["pulses_per_measure"])


# 3-2 son clave onsets on a 16-pulse measure grid, two measures long:
# measure one carries the "3" side (1, and-of-2, 4), measure two the "2"
# side (2, 3).
SON_CLAVE_ONSETS = (0, 6, 12, 20, 24)


def son_clave_pattern(config: TimebaseConfig) -> Pattern:
    """Two-measure unpitched 3-2 son clave on the shared pulse grid."""
    if config.pulses_per_beat != 4 or config.beats_per_measure != 4:
        raise UnsupportedMeter(
            "son clave is defined here on a 4/4, 4-pulses-per-beat grid")
    ppm = config.pulses_per_measure
    events = [NoteEvent(onset, 2, None, 1.0 if onset % 4 == 0 else 0.6)
              for onset in SON_CLAVE_ONSETS]
    return Pattern(2, events, ppm)


def pentatonic_fraction(pattern: Pattern, pentatonic: Scale = G_PENTATONIC) -> float:
    """Share of pitched events whose pitch class lies in the pentatonic set."""
    pitched = pattern.pitched_events()
    if not pitched:
        raise NoPitchedEvents("pattern has no pitched events")
    hits = sum(1 for e in pitched if e.pitch.pitch_class in pentatonic.members)
    return hits / len(pitched)

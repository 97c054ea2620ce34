"""Seeded generation of the loop library.

Six unpitched 16-measure bed loops in a fixed priority order, twelve pitched
8-measure collage loops each in its own timbre, and one announcement (bell
note + one-measure toll figure) per station slot.  Generation is
generate-and-test: candidate loops are drawn from per-instrument rhythm
vocabularies and rejected until they pass the compatibility checks against
everything already accepted.  The whole library is a pure function of
(seed, timebase config).
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from typing import Optional

from . import compat
from .music import (G_DOMINANT, G_PENTATONIC, NoteEvent, Pattern, Pitch,
                    TimebaseConfig, pentatonic_fraction, son_clave_pattern)

BED_MEASURES = 16
COLLAGE_MEASURES = 8
STATIONS = 6
SLOTS_PER_STATION = 2

ACCENT_VELOCITY = 1.0
SOFT_VELOCITY = 0.6

MAX_ATTEMPTS = 100

# Ascending G-major triad over two octaves; station s strikes the s-th note.
BELL_NOTES = (55, 59, 62, 67, 71, 74)   # G3 B3 D4 G4 B4 D5


class GenerationExhausted(Exception):
    """No constraint-satisfying loop found within the retry budget."""


@dataclass(frozen=True)
class Timbre:
    """Synthesis recipe for one instrument voice."""

    id: str
    family: str          # unpitched-percussion | pitched-mallet | bell
    decay_s: float
    brightness: float
    inharmonicity: float
    noise_fraction: float

    def __post_init__(self):
        if self.family not in ("unpitched-percussion", "pitched-mallet", "bell"):
            raise ValueError(f"unknown timbre family {self.family!r}")
        if self.decay_s <= 0:
            raise ValueError("decay must be positive")
        for name in ("brightness", "inharmonicity", "noise_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "id": self.id, "family": self.family, "decay_s": self.decay_s,
            "brightness": self.brightness,
            "inharmonicity": self.inharmonicity,
            "noise_fraction": self.noise_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Timbre":
        return cls(d["id"], d["family"], d["decay_s"], d["brightness"],
                   d["inharmonicity"], d["noise_fraction"])


@dataclass(frozen=True)
class BedRole:
    priority: int          # 1 = last to leave, 6 = first to fade out


@dataclass(frozen=True)
class CollageRole:
    index: int             # 1..12


def _role_to_dict(role) -> dict:
    if isinstance(role, BedRole):
        return {"kind": "bed", "priority": role.priority}
    return {"kind": "collage", "index": role.index}


def _role_from_dict(d: dict):
    return BedRole(d["priority"]) if d["kind"] == "bed" else CollageRole(d["index"])


@dataclass(frozen=True)
class Loop:
    id: str
    role: object           # BedRole | CollageRole
    pattern: Pattern
    timbre: Timbre

    def __post_init__(self):
        if isinstance(self.role, BedRole):
            if self.pattern.length_measures != BED_MEASURES:
                raise ValueError("bed loops are 16 measures")
            if any(e.pitch is not None for e in self.pattern.events):
                raise ValueError("bed loops are fully unpitched")
        elif isinstance(self.role, CollageRole):
            pitched = self.pattern.pitched_events()
            if not pitched or len(pitched) != len(self.pattern.events):
                raise ValueError("collage loops are fully pitched")
            for e in pitched:
                if e.pitch.pitch_class not in G_DOMINANT.members:
                    raise ValueError(
                        f"pitch {e.pitch.name} outside the collage scale")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": _role_to_dict(self.role),
            "pattern": self.pattern.to_dict(),
            "timbre": self.timbre.id,
        }


@dataclass(frozen=True)
class AnnouncementSpec:
    """Bell note plus the one-measure toll figure that precedes a collage."""

    station: int
    slot: int
    bell_pitch: Pitch
    toll_pattern: Pattern
    timbre_id: str
    collage_loop_id: str

    def __post_init__(self):
        if self.bell_pitch.note_number not in BELL_NOTES:
            raise ValueError("bell pitch must be a G-major triad note")
        if self.toll_pattern.length_measures != 1:
            raise ValueError("toll figure spans exactly one measure")

    @property
    def id(self) -> str:
        return f"ANN{self.station}{self.slot}"

    def to_dict(self) -> dict:
        return {
            "station": self.station, "slot": self.slot,
            "bell_pitch": self.bell_pitch.note_number,
            "toll_pattern": self.toll_pattern.to_dict(),
            "timbre": self.timbre_id,
            "collage_loop": self.collage_loop_id,
        }


# Bed instruments in fixed priority order: BED01 anchors the clave figure and
# is the last to leave as the wall fills up.
BED_TIMBRES = (
    Timbre("clave", "unpitched-percussion", 0.10, 0.85, 0.2, 0.25),
    Timbre("shaker", "unpitched-percussion", 0.07, 0.95, 0.0, 1.0),
    Timbre("scraper", "unpitched-percussion", 0.22, 0.70, 0.0, 0.95),
    Timbre("rainstick", "unpitched-percussion", 1.60, 0.45, 0.0, 1.0),
    Timbre("cymbal", "unpitched-percussion", 1.80, 0.90, 0.8, 0.70),
    Timbre("tabla", "unpitched-percussion", 0.18, 0.35, 0.3, 0.30),
)

# Chromatic-percussion voices for the twelve collage loops, with the playing
# register (inclusive note-number bounds) each one draws from.
COLLAGE_TIMBRES = (
    (Timbre("marimba", "pitched-mallet", 0.45, 0.45, 0.0, 0.05), (55, 79)),
    (Timbre("vibraphone", "pitched-mallet", 1.60, 0.55, 0.0, 0.02), (62, 86)),
    (Timbre("glockenspiel", "pitched-mallet", 0.90, 0.90, 0.1, 0.02), (79, 103)),
    (Timbre("kulingtang", "bell", 0.70, 0.60, 0.45, 0.10), (60, 79)),
    (Timbre("almglocken", "bell", 1.10, 0.65, 0.55, 0.05), (62, 84)),
    (Timbre("orchestral_chimes", "bell", 2.20, 0.70, 0.60, 0.03), (67, 86)),
    (Timbre("angklung", "pitched-mallet", 0.35, 0.50, 0.15, 0.30), (60, 81)),
    (Timbre("handbells", "bell", 1.40, 0.75, 0.40, 0.02), (67, 91)),
    (Timbre("boobam", "pitched-mallet", 0.30, 0.25, 0.10, 0.20), (43, 62)),
    (Timbre("music_box", "pitched-mallet", 0.80, 0.85, 0.05, 0.01), (79, 98)),
    (Timbre("tubular_bells", "bell", 2.00, 0.60, 0.65, 0.03), (55, 74)),
    (Timbre("kalimba", "pitched-mallet", 0.40, 0.40, 0.12, 0.08), (60, 84)),
)

BELL_TIMBRE = Timbre("announce_bell", "bell", 2.50, 0.80, 0.50, 0.02)


@dataclass(frozen=True)
class LoopLibrary:
    seed: int
    config: TimebaseConfig
    beds: tuple[Loop, ...]
    collages: tuple[Loop, ...]
    announcements: tuple[AnnouncementSpec, ...]

    def __post_init__(self):
        ids = [t.id for t in self.timbres()]
        if len(set(ids)) != len(ids):
            raise ValueError("timbre ids must be unique within the library")

    def timbres(self) -> list[Timbre]:
        seen = {}
        for lp in list(self.beds) + list(self.collages):
            seen[lp.timbre.id] = lp.timbre
        seen[BELL_TIMBRE.id] = BELL_TIMBRE
        return list(seen.values())

    def all_loops(self) -> list[Loop]:
        return list(self.beds) + list(self.collages)

    def loop_by_id(self, loop_id: str) -> Loop:
        for lp in self.all_loops():
            if lp.id == loop_id:
                return lp
        raise KeyError(loop_id)

    def bed(self, priority: int) -> Loop:
        return self.beds[priority - 1]

    def collage(self, index: int) -> Loop:
        return self.collages[index - 1]

    def collage_for_slot(self, station: int, slot: int) -> Loop:
        return self.collage(collage_index_for_slot(station, slot))

    def announcement(self, station: int, slot: int) -> AnnouncementSpec:
        for ann in self.announcements:
            if ann.station == station and ann.slot == slot:
                return ann
        raise KeyError((station, slot))

    def announcement_for_loop(self, loop_id: str) -> AnnouncementSpec:
        for ann in self.announcements:
            if ann.collage_loop_id == loop_id:
                return ann
        raise KeyError(loop_id)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config.to_dict(),
            "timbres": [t.to_dict() for t in sorted(self.timbres(),
                                                    key=lambda t: t.id)],
            "beds": [lp.to_dict() for lp in self.beds],
            "collages": [lp.to_dict() for lp in self.collages],
            "announcements": [a.to_dict() for a in self.announcements],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "LoopLibrary":
        config = TimebaseConfig.from_dict(d["config"])
        timbres = {t["id"]: Timbre.from_dict(t) for t in d["timbres"]}

        def load_loop(ld):
            return Loop(ld["id"], _role_from_dict(ld["role"]),
                        Pattern.from_dict(ld["pattern"]), timbres[ld["timbre"]])

        return cls(
            seed=d["seed"], config=config,
            beds=tuple(load_loop(ld) for ld in d["beds"]),
            collages=tuple(load_loop(ld) for ld in d["collages"]),
            announcements=tuple(
                AnnouncementSpec(a["station"], a["slot"], Pitch(a["bell_pitch"]),
                                 Pattern.from_dict(a["toll_pattern"]),
                                 a["timbre"], a["collage_loop"])
                for a in d["announcements"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "LoopLibrary":
        return cls.from_dict(json.loads(text))


def collage_index_for_slot(station: int, slot: int) -> int:
    """Station s, slot k own collage 2(s-1)+k."""
    if not (1 <= station <= STATIONS and 1 <= slot <= SLOTS_PER_STATION):
        raise ValueError("station in 1..6, slot in 1..2")
    return 2 * (station - 1) + slot


def _rng(seed: int, *tags) -> random.Random:
    return random.Random(":".join([str(seed)] + [str(t) for t in tags]))


def _tile_clave(config: TimebaseConfig) -> Pattern:
    clave = son_clave_pattern(config)
    ppm = clave.pulses_per_measure
    events = []
    for rep in range(BED_MEASURES // 2):
        for ev in clave.events:
            events.append(NoteEvent(ev.onset_pulse + rep * 2 * ppm,
                                    ev.duration_pulses, None, ev.velocity))
    return Pattern(BED_MEASURES, events, ppm)


def _bed_rhythm(priority: int, rng: random.Random, ppm: int) -> Pattern:
    """Seeded per-measure rhythm from the instrument's vocabulary."""
    events = []
    for m in range(BED_MEASURES):
        base = m * ppm
        if priority == 2:      # shaker: off-beat eighths, occasionally thinned
            for p in (2, 6, 10, 14):
                if rng.random() < 0.88:
                    events.append(NoteEvent(base + p, 1, None, SOFT_VELOCITY))
        elif priority == 3:    # scraper: one or two mid-measure drags
            for p in rng.sample((4, 5, 12, 13), rng.choice((1, 1, 2))):
                events.append(NoteEvent(base + p, 3, None, SOFT_VELOCITY))
        elif priority == 4:    # rainstick: one long wash every fourth measure
            if m % 4 == 1:
                events.append(NoteEvent(base + rng.choice((3, 7, 11)), 8, None,
                                        SOFT_VELOCITY))
        elif priority == 5:    # cymbal: one swell every other measure
            if m % 2 == 1:
                events.append(NoteEvent(base + rng.choice((8, 9, 10)), 4, None,
                                        rng.choice((SOFT_VELOCITY, ACCENT_VELOCITY))))
        elif priority == 6:    # tabla: syncopated strokes on odd pulses
            for p in rng.sample((1, 3, 5, 7, 9, 11, 13, 15), rng.choice((2, 3))):
                vel = ACCENT_VELOCITY if rng.random() < 0.15 else SOFT_VELOCITY
                events.append(NoteEvent(base + p, 2, None, vel))
    return Pattern(BED_MEASURES, events, ppm)


def generate_bed(priority: int, seed: int,
                 config: Optional[TimebaseConfig] = None) -> Loop:
    """One 16-measure unpitched bed loop; instrument is fixed by priority."""
    if not 1 <= priority <= 6:
        raise ValueError("bed priority in 1..6")
    config = config or _default_config()
    timbre = BED_TIMBRES[priority - 1]
    ppm = config.pulses_per_measure
    if priority == 1:
        pattern = _tile_clave(config)
    else:
        pattern = _bed_rhythm(priority, _rng(seed, "bed", priority), ppm)
    return Loop(f"BED{priority:02d}", BedRole(priority), pattern, timbre)


def _scale_notes(lo: int, hi: int, members: frozenset[int]) -> list[int]:
    return [n for n in range(lo, hi + 1) if n % 12 in members]


def _collage_pattern(rng: random.Random, ppm: int, register: tuple[int, int]
                     ) -> Pattern:
    """One candidate collage phrase: sparse, syncopated, pentatonic-leaning."""
    penta = _scale_notes(register[0], register[1], G_PENTATONIC.members)
    color = _scale_notes(register[0], register[1],
                         G_DOMINANT.members - G_PENTATONIC.members)
    while True:
        events = []
        for m in range(COLLAGE_MEASURES):
            base = m * ppm
            pulses = sorted(rng.sample(range(ppm), rng.choice((2, 3, 3, 4))))
            # Min two-pulse spacing keeps same-pitch repeats from chaining
            # into sustained co-soundings.
            spaced = []
            for p in pulses:
                if not spaced or p - spaced[-1] >= 2:
                    spaced.append(p)
            for p in spaced:
                if rng.random() < 0.85 or not color:
                    note = rng.choice(penta)
                else:
                    note = rng.choice(color)
                vel = ACCENT_VELOCITY if rng.random() < 0.15 else SOFT_VELOCITY
                events.append(NoteEvent(base + p, rng.choice((1, 2, 2, 3)),
                                        Pitch(note), vel))
        pattern = Pattern(COLLAGE_MEASURES, events, ppm)
        offbeat = sum(1 for e in events if e.onset_pulse % 4 != 0)
        if offbeat / len(events) < 0.25:
            continue
        if pentatonic_fraction(pattern) < 0.7:
            continue
        return pattern


def generate_collage(index: int, seed: int,
                     config: Optional[TimebaseConfig] = None) -> Loop:
    """One 8-measure pitched collage loop in the index's unique timbre."""
    if not 1 <= index <= 12:
        raise ValueError("collage index in 1..12")
    config = config or _default_config()
    timbre, register = COLLAGE_TIMBRES[index - 1]
    pattern = _collage_pattern(_rng(seed, "collage", index),
                               config.pulses_per_measure, register)
    return Loop(f"C{index:02d}", CollageRole(index), pattern, timbre)


def _most_frequent_pitch(pattern: Pattern) -> Pitch:
    counts = Counter(e.pitch.note_number for e in pattern.pitched_events())
    best = min(counts, key=lambda n: (-counts[n], n))
    return Pitch(best)


def announcement_for(station: int, slot: int, collage: Loop) -> AnnouncementSpec:
    """Bell note for the station plus four tolls in the collage's timbre."""
    if not isinstance(collage.role, CollageRole):
        raise ValueError("announcements are derived from collage loops")
    index = collage_index_for_slot(station, slot)
    ppm = collage.pattern.pulses_per_measure
    pulses_per_beat = ppm // 4
    toll_pitch = _most_frequent_pitch(collage.pattern)
    tolls = [NoteEvent(beat * pulses_per_beat, 3, toll_pitch,
                       ACCENT_VELOCITY if beat == 0 else SOFT_VELOCITY)
             for beat in range(4)]
    return AnnouncementSpec(station, slot, Pitch(BELL_NOTES[station - 1]),
                            Pattern(1, tolls, ppm), collage.timbre.id,
                            collage.id)


def _passes_against(candidate: Loop, accepted: list[Loop]) -> bool:
    return all(compat.check_pair(candidate, other).passed for other in accepted)


def generate_library(seed: int, config: Optional[TimebaseConfig] = None
                     ) -> LoopLibrary:
    """The full 6-bed / 12-collage / 12-announcement library for a seed."""
    config = config or _default_config()
    accepted: list[Loop] = []
    beds = []
    for priority in range(1, 7):
        for attempt in range(MAX_ATTEMPTS):
            candidate = generate_bed(priority, seed + attempt * 1_000_003, config)
            if _passes_against(candidate, accepted):
                break
        else:
            raise GenerationExhausted(f"bed {priority}")
        accepted.append(candidate)
        beds.append(candidate)
    collages = []
    for index in range(1, 13):
        for attempt in range(MAX_ATTEMPTS):
            candidate = generate_collage(index, seed + attempt * 1_000_003,
                                         config)
            if _passes_against(candidate, accepted):
                break
        else:
            raise GenerationExhausted(f"collage {index}")
        accepted.append(candidate)
        collages.append(candidate)
    announcements = []
    for station in range(1, STATIONS + 1):
        for slot in range(1, SLOTS_PER_STATION + 1):
            collage = collages[collage_index_for_slot(station, slot) - 1]
            announcements.append(announcement_for(station, slot, collage))
    return LoopLibrary(seed, config, tuple(beds), tuple(collages),
                       tuple(announcements))


def _default_config() -> TimebaseConfig:
    from .music import default_config
    return default_config()

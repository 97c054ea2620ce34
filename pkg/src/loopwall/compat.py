"""Pairwise loop compatibility analysis on the symbolic pulse grid.

Two loops are compatible when, at every whole-measure start-time offset,
overlapping them produces no prolonged dissonance (interval class 1 or 6
sustained for a beat or more) and no excessive onset collision (more than
half of one loop's articulations landing exactly on the other's).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .music import interval_class

DISSONANT_INTERVAL_CLASSES = frozenset({1, 6})
DEFAULT_PROLONGED_THRESHOLD_PULSES = 4   # one beat on the 4-pulse-per-beat grid
DEFAULT_COLLISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class DissonanceIncident:
    start_pulse: int
    duration_pulses: int
    pitch_a: int
    pitch_b: int
    interval_class: int


@dataclass(frozen=True)
class DissonanceReport:
    offset_measures: int
    incidents: tuple[DissonanceIncident, ...]


@dataclass(frozen=True)
class PairReport:
    loop_a: str
    loop_b: str
    passed: bool
    worst_offset: int
    worst_dissonance_pulses: int
    max_collision_density: float
    incident_count: int


@dataclass
class CompatMatrix:
    loop_ids: list[str]
    pairs: dict[tuple[str, str], PairReport] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.pairs.values())

    def report(self, a: str, b: str) -> PairReport:
        return self.pairs[(a, b)] if (a, b) in self.pairs else self.pairs[(b, a)]

    def failing_pairs(self) -> list[PairReport]:
        return [r for r in self.pairs.values() if not r.passed]

    def to_dict(self) -> dict:
        return {
            "loop_ids": self.loop_ids,
            "passed": self.passed,
            "pairs": [
                {
                    "a": r.loop_a, "b": r.loop_b, "passed": r.passed,
                    "worst_offset": r.worst_offset,
                    "worst_dissonance_pulses": r.worst_dissonance_pulses,
                    "max_collision_density": r.max_collision_density,
                    "incidents": r.incident_count,
                }
                for r in self.pairs.values()
            ],
        }


def _cycle_measures(a, b) -> int:
    return math.lcm(a.pattern.length_measures, b.pattern.length_measures)


def _pitch_pulse_sets(loop, cycle_pulses: int, offset_pulses: int) -> dict[int, set[int]]:
    """Map pitch -> pulses (mod the cycle) where that pitch is sounding."""
    ppm = loop.pattern.pulses_per_measure
    pat_pulses = loop.pattern.length_measures * ppm
    reps = cycle_pulses // pat_pulses
    masks: dict[int, set[int]] = {}
    for ev in loop.pattern.events:
        if ev.pitch is None:
            continue
        mask = masks.setdefault(ev.pitch.note_number, set())
        for rep in range(reps):
            base = rep * pat_pulses + ev.onset_pulse + offset_pulses
            for k in range(ev.duration_pulses):
                mask.add((base + k) % cycle_pulses)
    return masks


def _onset_pulses(loop, cycle_pulses: int, offset_pulses: int) -> list[int]:
    """Every onset instance of the loop tiled over the cycle (with repeats)."""
    ppm = loop.pattern.pulses_per_measure
    pat_pulses = loop.pattern.length_measures * ppm
    reps = cycle_pulses // pat_pulses
    out = []
    for rep in range(reps):
        base = rep * pat_pulses + offset_pulses
        for ev in loop.pattern.events:
            out.append((base + ev.onset_pulse) % cycle_pulses)
    return out


def _runs(pulses: set[int], cycle_pulses: int) -> list[tuple[int, int]]:
    """Maximal consecutive runs (start, length), scanned linearly over the cycle."""
    runs = []
    start = None
    for p in range(cycle_pulses):
        if p in pulses:
            if start is None:
                start = p
        elif start is not None:
            runs.append((start, p - start))
            start = None
    if start is not None:
        runs.append((start, cycle_pulses - start))
    return runs


def overlap_dissonance(a, b, offset_measures: int,
                       threshold_pulses: int = DEFAULT_PROLONGED_THRESHOLD_PULSES
                       ) -> DissonanceReport:
    """Sustained dissonant co-soundings of ``a`` against ``b`` shifted by the offset."""
    ppm = a.pattern.pulses_per_measure
    cycle_pulses = _cycle_measures(a, b) * ppm
    masks_a = _pitch_pulse_sets(a, cycle_pulses, 0)
    masks_b = _pitch_pulse_sets(b, cycle_pulses, offset_measures * ppm)
    incidents = []
    for pa, mask_a in masks_a.items():
        for pb, mask_b in masks_b.items():
            ic = interval_class(pa, pb)
            if ic not in DISSONANT_INTERVAL_CLASSES:
                continue
            for start, length in _runs(mask_a & mask_b, cycle_pulses):
                if length >= threshold_pulses:
                    incidents.append(
                        DissonanceIncident(start, length, pa, pb, ic))
    incidents.sort(key=lambda i: (i.start_pulse, i.pitch_a, i.pitch_b))
    return DissonanceReport(offset_measures, tuple(incidents))


def onset_collision_density(a, b, offset_measures: int) -> float:
    """Fraction of a's onsets landing exactly on an onset pulse of b."""
    ppm = a.pattern.pulses_per_measure
    cycle_pulses = _cycle_measures(a, b) * ppm
    onsets_a = _onset_pulses(a, cycle_pulses, 0)
    onsets_b = set(_onset_pulses(b, cycle_pulses, offset_measures * ppm))
    if not onsets_a:
        return 0.0
    return sum(1 for p in onsets_a if p in onsets_b) / len(onsets_a)


def check_pair(a, b,
               threshold_pulses: int = DEFAULT_PROLONGED_THRESHOLD_PULSES,
               collision_threshold: float = DEFAULT_COLLISION_THRESHOLD
               ) -> PairReport:
    """Evaluate dissonance and collision at every whole-measure offset."""
    cycle = _cycle_measures(a, b)
    worst_offset = 0
    worst_key = (-1, -1.0)
    worst_dissonance = 0
    max_density = 0.0
    incident_count = 0
    passed = True
    for offset in range(cycle):
        report = overlap_dissonance(a, b, offset, threshold_pulses)
        # Density is direction-dependent; the verdict must not be, so take
        # the worse of both directions.
        density = max(onset_collision_density(a, b, offset),
                      onset_collision_density(b, a, (-offset) % cycle))
        longest = max((i.duration_pulses for i in report.incidents), default=0)
        if (longest, density) > worst_key:
            worst_key = (longest, density)
            worst_offset = offset
        worst_dissonance = max(worst_dissonance, longest)
        max_density = max(max_density, density)
        incident_count += len(report.incidents)
        if report.incidents or density > collision_threshold:
            passed = False
    return PairReport(a.id, b.id, passed, worst_offset, worst_dissonance,
                      max_density, incident_count)


def check_library(lib,
                  threshold_pulses: int = DEFAULT_PROLONGED_THRESHOLD_PULSES,
                  collision_threshold: float = DEFAULT_COLLISION_THRESHOLD
                  ) -> CompatMatrix:
    """check_pair over all unordered pairs of beds and collages."""
    loops = list(lib.beds) + list(lib.collages)
    matrix = CompatMatrix([lp.id for lp in loops])
    for i in range(len(loops)):
        for j in range(i + 1, len(loops)):
            matrix.pairs[(loops[i].id, loops[j].id)] = check_pair(
                loops[i], loops[j], threshold_pulses, collision_threshold)
    return matrix


def enumerate_arrangements(n_phrases: int, k: int) -> int:
    """Number of unordered k-stacks out of n interlocking phrases."""
    if not 0 <= k <= n_phrases:
        raise ValueError("need 0 <= k <= n")
    return math.comb(n_phrases, k)

"""The live soundtrack state machine.

Launch requests are quantized to the next measure boundary: the bell strikes
and the toll figure plays for one measure, the collage loop starts on the
following boundary and lives for a fixed number of measures.  Beds drop out
one per live collage, highest priority number first, and return lowest number
first as collages expire.  All emitted events are measure-aligned, and the
whole machine is a deterministic function of the ordered request log.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .music import TimebaseConfig

DEFAULT_LIFETIME_MEASURES = 48
DEFAULT_FADE_MEASURES = 2

MAX_COLLAGES = 12
MAX_PER_STATION = 2
BED_COUNT = 6

# Fixed emission order inside one measure boundary.
KIND_ORDER = ("CollageEnd", "BellStrike", "TollStart", "CollageStart",
              "BedFadeOut", "BedFadeIn")


class LaunchRejected(Exception):
    reason = "Rejected"


class StationFull(LaunchRejected):
    reason = "StationFull"


class WallFull(LaunchRejected):
    reason = "WallFull"


@dataclass(frozen=True)
class ScheduleEvent:
    at_sample: int
    kind: str
    station: Optional[int] = None
    slot: Optional[int] = None
    loop_id: Optional[str] = None
    bed: Optional[int] = None
    fade_measures: Optional[int] = None

    def to_dict(self, samples_per_measure: int) -> dict:
        d = {"at_sample": self.at_sample,
             "measure": self.at_sample // samples_per_measure,
             "kind": self.kind}
        for key in ("station", "slot", "loop_id", "bed", "fade_measures"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d


@dataclass(frozen=True)
class CollageInstance:
    station: int
    slot: int
    loop_id: str
    request_sample: int
    announce_measure: int
    start_measure: int
    end_measure: int

    def to_dict(self) -> dict:
        return {
            "station": self.station, "slot": self.slot,
            "loop_id": self.loop_id,
            "request_sample": self.request_sample,
            "announce_measure": self.announce_measure,
            "start_measure": self.start_measure,
            "end_measure": self.end_measure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollageInstance":
        return cls(d["station"], d["slot"], d["loop_id"], d["request_sample"],
                   d["announce_measure"], d["start_measure"], d["end_measure"])


@dataclass(frozen=True)
class LaunchOutcome:
    station: int
    slot: int
    loop_id: str
    announce_measure: int
    start_measure: int
    end_measure: int
    bell_note: int


def bed_set_for(n_collages: int) -> set[int]:
    """The paper's layering rule: one bed out per live collage, from BED06 down."""
    return set(range(1, BED_COUNT - min(n_collages, BED_COUNT) + 1))


@dataclass
class SoundtrackState:
    """Single-owner mutable state; snapshots are plain dicts."""

    config: TimebaseConfig
    library: object        # LoopLibrary; only slot->loop/bell mappings are used
    lifetime_measures: int = DEFAULT_LIFETIME_MEASURES
    fade_measures: int = DEFAULT_FADE_MEASURES
    current_sample: int = 0
    instances: list[CollageInstance] = field(default_factory=list)
    bed_active: set[int] = field(default_factory=lambda: set(range(1, 7)))

    @property
    def samples_per_measure(self) -> int:
        return self.config.samples_per_measure

    @property
    def current_measure(self) -> int:
        return self.current_sample // self.samples_per_measure


def new_state(config: TimebaseConfig, library,
              lifetime_measures: int = DEFAULT_LIFETIME_MEASURES,
              fade_measures: int = DEFAULT_FADE_MEASURES) -> SoundtrackState:
    """Fresh state: no collages, all six beds playing, clock at zero."""
    return SoundtrackState(config, library, lifetime_measures, fade_measures)


def active_beds(state: SoundtrackState) -> set[int]:
    return set(state.bed_active)


def _live_instances(state: SoundtrackState, measure: int) -> list[CollageInstance]:
    return [i for i in state.instances
            if i.announce_measure <= measure < i.end_measure]


def request_launch(state: SoundtrackState, station: int,
                   now_sample: int) -> LaunchOutcome:
    """Accept a launch at the next measure boundary, or raise a rejection.

    Rejections (StationFull, WallFull) leave the state untouched.
    """
    if not 1 <= station <= 6:
        raise ValueError("station in 1..6")
    if now_sample < state.current_sample:
        raise ValueError("requests must not arrive in the past")
    spm = state.samples_per_measure
    # Liveness is judged by time, not list membership: an instance whose end
    # boundary is at or before the request no longer holds its slot, even if
    # the clock has not been advanced past that boundary yet.
    live = [i for i in state.instances if i.end_measure * spm > now_sample]
    if len(live) >= MAX_COLLAGES:
        raise WallFull(f"{MAX_COLLAGES} collages already live")
    taken = {i.slot for i in live if i.station == station}
    if len(taken) >= MAX_PER_STATION:
        raise StationFull(f"station {station} has both slots live")
    slot = min({1, 2} - taken)
    # First boundary strictly after the request; bell latency is always in
    # (0, samples_per_measure].
    announce = now_sample // spm + 1
    start = announce + 1
    end = start + state.lifetime_measures
    loop = state.library.collage_for_slot(station, slot)
    ann = state.library.announcement(station, slot)
    state.instances.append(CollageInstance(
        station, slot, loop.id, now_sample, announce, start, end))
    return LaunchOutcome(station, slot, loop.id, announce, start, end,
                         ann.bell_pitch.note_number)


def _boundary_events(state: SoundtrackState, measure: int) -> list[ScheduleEvent]:
    """Process one measure boundary: expiries, announcements, starts, bed moves."""
    spm = state.samples_per_measure
    at = measure * spm
    events = []
    expired = [i for i in state.instances if i.end_measure == measure]
    for inst in sorted(expired, key=lambda i: (i.station, i.slot)):
        events.append(ScheduleEvent(at, "CollageEnd", station=inst.station,
                                    slot=inst.slot, loop_id=inst.loop_id))
        state.instances.remove(inst)
    announcing = sorted((i for i in state.instances
                         if i.announce_measure == measure),
                        key=lambda i: i.request_sample)
    for inst in announcing:
        events.append(ScheduleEvent(at, "BellStrike", station=inst.station,
                                    slot=inst.slot, loop_id=inst.loop_id))
        events.append(ScheduleEvent(at, "TollStart", station=inst.station,
                                    slot=inst.slot, loop_id=inst.loop_id))
    starting = sorted((i for i in state.instances
                       if i.start_measure == measure),
                      key=lambda i: i.request_sample)
    for inst in starting:
        events.append(ScheduleEvent(at, "CollageStart", station=inst.station,
                                    slot=inst.slot, loop_id=inst.loop_id))
    target = bed_set_for(len(_live_instances(state, measure)))
    for bed in sorted(state.bed_active - target, reverse=True):
        events.append(ScheduleEvent(at, "BedFadeOut", bed=bed,
                                    fade_measures=state.fade_measures))
    for bed in sorted(target - state.bed_active):
        events.append(ScheduleEvent(at, "BedFadeIn", bed=bed,
                                    fade_measures=state.fade_measures))
    state.bed_active = target
    return events


def advance_to(state: SoundtrackState, target_sample: int) -> list[ScheduleEvent]:
    """Emit every scheduled event with at_sample in [current, target)."""
    if target_sample < state.current_sample:
        raise ValueError("clock cannot move backwards")
    spm = state.samples_per_measure
    events = []
    first = (state.current_sample + spm - 1) // spm
    for measure in range(first, (target_sample + spm - 1) // spm):
        if measure * spm >= target_sample:
            break
        events.extend(_boundary_events(state, measure))
    state.current_sample = target_sample
    return events


def snapshot(state: SoundtrackState) -> dict:
    """Complete serializable view, sufficient to restore or drive a UI."""
    spm = state.samples_per_measure
    measure = state.current_sample // spm
    return {
        "current_sample": state.current_sample,
        "measure": measure,
        "lifetime_measures": state.lifetime_measures,
        "fade_measures": state.fade_measures,
        "bed_active": sorted(state.bed_active),
        "collages": [
            dict(inst.to_dict(),
                 remaining_measures=max(0, inst.end_measure - max(
                     measure, inst.start_measure)),
                 timbre=state.library.loop_by_id(inst.loop_id).timbre.id)
            for inst in sorted(state.instances,
                               key=lambda i: (i.station, i.slot))
        ],
    }


def restore(doc: dict, config: TimebaseConfig, library) -> SoundtrackState:
    state = SoundtrackState(config, library,
                            doc["lifetime_measures"], doc["fade_measures"],
                            doc["current_sample"],
                            [CollageInstance.from_dict(c)
                             for c in doc["collages"]],
                            set(doc["bed_active"]))
    return state

import copy
import random

import pytest

from loopwall import scheduler
from loopwall.loopgen import generate_library
from loopwall.music import default_config

CFG = default_config()
SPM = CFG.samples_per_measure


@pytest.fixture(scope="module")
def library():
    return generate_library(1, CFG)


def fresh(library, lifetime=8, fade=2):
    return scheduler.new_state(CFG, library, lifetime, fade)


def brute_force_events(requests, total_measures, library, lifetime, fade):
    """Per-measure recomputation of the whole event stream from the request log.

    Independent of the incremental state machine: accepted launches are
    decided request by request, then every measure's events are derived from
    scratch.
    """
    accepted = []
    for at_sample, station in requests:
        measure_now = at_sample // SPM
        live = [a for a in accepted if a["end"] > measure_now]
        if len(live) >= 12:
            continue
        slots = {a["slot"] for a in live if a["station"] == station}
        if len(slots) >= 2:
            continue
        slot = min({1, 2} - slots)
        announce = at_sample // SPM + 1
        accepted.append({
            "station": station, "slot": slot, "request": at_sample,
            "announce": announce, "start": announce + 1,
            "end": announce + 1 + lifetime,
            "loop": library.collage_for_slot(station, slot).id,
        })
    events = []
    prev_beds = set(range(1, 7))
    for m in range(total_measures):
        at = m * SPM
        ending = sorted((a for a in accepted if a["end"] == m),
                        key=lambda a: (a["station"], a["slot"]))
        for a in ending:
            events.append(("CollageEnd", at, a["station"], a["slot"],
                           a["loop"], None))
        announcing = sorted((a for a in accepted if a["announce"] == m),
                            key=lambda a: a["request"])
        for a in announcing:
            events.append(("BellStrike", at, a["station"], a["slot"],
                           a["loop"], None))
            events.append(("TollStart", at, a["station"], a["slot"],
                           a["loop"], None))
        starting = sorted((a for a in accepted if a["start"] == m),
                          key=lambda a: a["request"])
        for a in starting:
            events.append(("CollageStart", at, a["station"], a["slot"],
                           a["loop"], None))
        n = sum(1 for a in accepted if a["announce"] <= m < a["end"])
        target = set(range(1, 7 - min(n, 6)))
        for bed in sorted(prev_beds - target, reverse=True):
            events.append(("BedFadeOut", at, None, None, None, bed))
        for bed in sorted(target - prev_beds):
            events.append(("BedFadeIn", at, None, None, None, bed))
        prev_beds = target
    return events


def run_machine(requests, total_measures, library, lifetime, fade):
    state = fresh(library, lifetime, fade)
    events = []
    for at_sample, station in requests:
        events.extend(scheduler.advance_to(state, at_sample))
        try:
            scheduler.request_launch(state, station, at_sample)
        except scheduler.LaunchRejected:
            pass
    events.extend(scheduler.advance_to(state, total_measures * SPM))
    return state, events


def as_tuples(events):
    return [(e.kind, e.at_sample, e.station, e.slot, e.loop_id, e.bed)
            for e in events]


def random_trace(rng, max_measures=64):
    total = rng.randint(4, max_measures)
    requests = []
    t = 0
    for _ in range(rng.randint(0, 20)):
        t += rng.randint(0, 3 * SPM)
        if t >= total * SPM:
            break
        requests.append((t, rng.randint(1, 6)))
    return requests, total


class TestNewState:
    def test_fresh_state(self, library):
        state = fresh(library)
        assert scheduler.active_beds(state) == {1, 2, 3, 4, 5, 6}
        assert state.instances == []
        assert state.current_sample == 0

    def test_snapshot_round_trip(self, library):
        state = fresh(library)
        doc = scheduler.snapshot(state)
        restored = scheduler.restore(doc, CFG, library)
        assert scheduler.snapshot(restored) == doc

    def test_snapshot_measure_index(self, library):
        state = fresh(library)
        scheduler.advance_to(state, 5 * SPM + 10)
        assert scheduler.snapshot(state)["measure"] == 5


class TestRequestLaunch:
    def test_first_launch_fades_bed_six(self, library):
        state = fresh(library)
        scheduler.advance_to(state, 10)
        out = scheduler.request_launch(state, 1, 10)
        assert out.announce_measure == 1
        assert out.start_measure == 2
        assert out.bell_note == 55   # G3
        events = scheduler.advance_to(state, 2 * SPM)
        fades = [e for e in events if e.kind == "BedFadeOut"]
        assert [f.bed for f in fades] == [6]

    def test_second_launch_fades_bed_five(self, library):
        state = fresh(library)
        requests = [(10, 1), (20, 2)]
        _, events = run_machine(requests, 4, library, 8, 2)
        fades = [e.bed for e in events if e.kind == "BedFadeOut"]
        assert fades == [6, 5]

    def test_six_plus_launches_leave_no_beds(self, library):
        requests = [(10 + i, s) for i, s in enumerate((1, 2, 3, 4, 5, 6, 1))]
        state, events = run_machine(requests, 4, library, 40, 2)
        assert scheduler.active_beds(state) == set()
        assert len(state.instances) == 7

    def test_station_full(self, library):
        state = fresh(library)
        scheduler.request_launch(state, 3, 0)
        scheduler.request_launch(state, 3, 1)
        before = scheduler.snapshot(state)
        with pytest.raises(scheduler.StationFull):
            scheduler.request_launch(state, 3, 2)
        assert scheduler.snapshot(state) == before

    def test_wall_full(self, library):
        state = fresh(library)
        for station in range(1, 7):
            scheduler.request_launch(state, station, 0)
            scheduler.request_launch(state, station, 0)
        before = scheduler.snapshot(state)
        with pytest.raises(scheduler.WallFull):
            scheduler.request_launch(state, 1, 0)
        assert scheduler.snapshot(state) == before

    def test_request_in_past_rejected(self, library):
        state = fresh(library)
        scheduler.advance_to(state, SPM)
        with pytest.raises(ValueError):
            scheduler.request_launch(state, 1, 5)

    def test_boundary_request_quantizes_to_next(self, library):
        state = fresh(library)
        out = scheduler.request_launch(state, 1, 2 * SPM)
        assert out.announce_measure == 3   # strictly after the boundary


class TestAdvance:
    def test_expiry_restores_beds_lowest_first(self, library):
        requests = [(i, s) for i, s in enumerate((1, 2, 3, 4, 5, 6))]
        state, events = run_machine(requests, 30, library, 8, 2)
        fade_ins = [e.bed for e in events if e.kind == "BedFadeIn"]
        assert fade_ins == [1, 2, 3, 4, 5, 6]
        assert scheduler.active_beds(state) == {1, 2, 3, 4, 5, 6}

    def test_composability(self, library):
        rng = random.Random(42)
        for _ in range(20):
            requests, total = random_trace(rng, 32)
            s1 = fresh(library)
            s2 = fresh(library)
            ev_once = []
            ev_twice = []
            cursor = 0
            for at, station in requests:
                ev_once.extend(scheduler.advance_to(s1, at))
                ev_twice.extend(scheduler.advance_to(s2, (cursor + at) // 2))
                ev_twice.extend(scheduler.advance_to(s2, at))
                cursor = at
                for s in (s1, s2):
                    try:
                        scheduler.request_launch(s, station, at)
                    except scheduler.LaunchRejected:
                        pass
            ev_once.extend(scheduler.advance_to(s1, total * SPM))
            mid = (cursor + total * SPM) // 2
            ev_twice.extend(scheduler.advance_to(s2, mid))
            ev_twice.extend(scheduler.advance_to(s2, total * SPM))
            assert as_tuples(ev_once) == as_tuples(ev_twice)

    def test_events_measure_aligned(self, library):
        rng = random.Random(1)
        requests, total = random_trace(rng)
        _, events = run_machine(requests, total, library, 8, 2)
        assert all(e.at_sample % SPM == 0 for e in events)


class TestActiveBeds:
    @pytest.mark.parametrize("n,expected", [
        (0, {1, 2, 3, 4, 5, 6}),
        (3, {1, 2, 3}),
        (6, set()),
        (9, set()),
    ])
    def test_rule(self, n, expected):
        assert scheduler.bed_set_for(n) == expected


class TestOracle:
    def test_event_stream_matches_brute_force(self, library):
        rng = random.Random(99)
        for _ in range(50):
            requests, total = random_trace(rng, 64)
            lifetime = rng.choice((4, 8, 16))
            _, events = run_machine(requests, total, library, lifetime, 2)
            expected = brute_force_events(requests, total, library,
                                          lifetime, 2)
            assert as_tuples(events) == expected

    def test_determinism(self, library):
        rng = random.Random(5)
        requests, total = random_trace(rng)
        _, ev1 = run_machine(requests, total, library, 8, 2)
        _, ev2 = run_machine(requests, total, library, 8, 2)
        assert as_tuples(ev1) == as_tuples(ev2)

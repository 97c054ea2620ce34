import pytest

from loopwall import compat
from loopwall.loopgen import (BELL_NOTES, AnnouncementSpec, BedRole,
                              CollageRole, Loop, LoopLibrary, Timbre,
                              announcement_for, collage_index_for_slot,
                              generate_bed, generate_collage, generate_library)
from loopwall.music import (G_DOMINANT, SON_CLAVE_ONSETS, default_config,
                            pentatonic_fraction)


@pytest.fixture(scope="module")
def library():
    return generate_library(1, default_config())


class TestGenerateBed:
    def test_priority_one_carries_the_clave(self):
        bed = generate_bed(1, seed=1)
        onsets = set(bed.pattern.onsets())
        for rep in range(8):
            for onset in SON_CLAVE_ONSETS:
                assert onset + rep * 32 in onsets

    @pytest.mark.parametrize("priority", range(1, 7))
    def test_unpitched_and_sixteen_measures(self, priority):
        bed = generate_bed(priority, seed=1)
        assert bed.pattern.length_measures == 16
        assert all(e.pitch is None for e in bed.pattern.events)

    def test_instruments_fixed_by_priority(self):
        names = [generate_bed(p, seed=1).timbre.id for p in range(1, 7)]
        assert names == ["clave", "shaker", "scraper", "rainstick",
                         "cymbal", "tabla"]

    def test_bad_priority(self):
        with pytest.raises(ValueError):
            generate_bed(0, seed=1)


class TestGenerateCollage:
    @pytest.mark.parametrize("index", range(1, 13))
    def test_constraints(self, index):
        loop = generate_collage(index, seed=1)
        assert loop.pattern.length_measures == 8
        events = loop.pattern.events
        assert all(e.pitch is not None for e in events)
        assert all(e.pitch.pitch_class in G_DOMINANT.members for e in events)
        assert pentatonic_fraction(loop.pattern) >= 0.7
        offbeat = sum(1 for e in events if e.onset_pulse % 4 != 0)
        assert offbeat / len(events) >= 0.25

    def test_first_three_timbres(self):
        assert generate_collage(1, 1).timbre.id == "marimba"
        assert generate_collage(2, 1).timbre.id == "vibraphone"
        assert generate_collage(3, 1).timbre.id == "glockenspiel"


class TestAnnouncements:
    def test_bell_notes_ascending_g_triad(self):
        assert BELL_NOTES == (55, 59, 62, 67, 71, 74)

    def test_bell_note_per_station(self, library):
        for station in range(1, 7):
            for slot in (1, 2):
                ann = library.announcement(station, slot)
                assert ann.bell_pitch.note_number == BELL_NOTES[station - 1]

    def test_toll_uses_collage_timbre(self, library):
        for ann in library.announcements:
            collage = library.loop_by_id(ann.collage_loop_id)
            assert ann.timbre_id == collage.timbre.id

    def test_toll_is_one_measure_four_strikes(self, library):
        for ann in library.announcements:
            assert ann.toll_pattern.length_measures == 1
            assert len(ann.toll_pattern.events) == 4
            assert ann.toll_pattern.onsets() == [0, 4, 8, 12]

    def test_slot_mapping(self):
        assert collage_index_for_slot(1, 1) == 1
        assert collage_index_for_slot(1, 2) == 2
        assert collage_index_for_slot(6, 2) == 12

    def test_requires_collage_role(self, library):
        with pytest.raises(ValueError):
            announcement_for(1, 1, library.beds[0])


class TestGenerateLibrary:
    def test_counts(self, library):
        assert len(library.beds) == 6
        assert len(library.collages) == 12
        assert len(library.announcements) == 12
        assert [b.id for b in library.beds] == [f"BED{i:02d}" for i in range(1, 7)]
        assert [c.id for c in library.collages] == [f"C{i:02d}" for i in range(1, 13)]

    def test_deterministic(self, library):
        assert generate_library(1, default_config()).to_json() == library.to_json()

    def test_different_seeds_differ(self, library):
        assert generate_library(2, default_config()).to_json() != library.to_json()

    def test_passes_compat(self, library):
        assert compat.check_library(library).passed

    def test_collage_timbres_distinct(self, library):
        ids = [c.timbre.id for c in library.collages]
        assert len(set(ids)) == 12

    def test_bed_instruments_distinct(self, library):
        ids = [b.timbre.id for b in library.beds]
        assert len(set(ids)) == 6

    def test_round_trip(self, library):
        restored = LoopLibrary.from_json(library.to_json())
        assert restored.to_json() == library.to_json()

    def test_all_events_on_grid(self, library):
        ppm = default_config().pulses_per_measure
        for loop in library.all_loops():
            for e in loop.pattern.events:
                assert 0 <= e.onset_pulse < loop.pattern.length_measures * ppm


class TestValidation:
    def test_bed_must_be_unpitched(self, library):
        collage = library.collages[0]
        with pytest.raises(ValueError):
            Loop("X", BedRole(1), collage.pattern, library.beds[0].timbre)

    def test_collage_scale_enforced(self):
        from loopwall.music import NoteEvent, Pattern, Pitch
        bad = Pattern(8, [NoteEvent(0, 1, Pitch(68), 0.6)])   # G#: out of scale
        timbre = Timbre("t", "pitched-mallet", 0.3, 0.5, 0.0, 0.0)
        with pytest.raises(ValueError):
            Loop("X", CollageRole(1), bad, timbre)

    def test_timbre_ranges(self):
        with pytest.raises(ValueError):
            Timbre("t", "pitched-mallet", 0.3, 1.5, 0.0, 0.0)
        with pytest.raises(ValueError):
            Timbre("t", "weird-family", 0.3, 0.5, 0.0, 0.0)

import json

import pytest
from fastapi.testclient import TestClient

from loopwall import scheduler, service
from loopwall.loopgen import generate_library
from loopwall.music import default_config

CFG = default_config()
SPM = CFG.samples_per_measure


@pytest.fixture(scope="module")
def library():
    return generate_library(1, CFG)


@pytest.fixture()
def client(library):
    session = service.Session(service.SessionConfig(CFG, lifetime_measures=8),
                              library=library)
    with TestClient(service.create_app(session)) as tc:
        tc.session = session
        yield tc


class TestLaunchEndpoint:
    def test_fresh_launch_accepted_bell_g3(self, client):
        response = client.post("/launch", json={"station": 1})
        assert response.status_code == 200
        doc = response.json()
        assert doc["accepted"] is True
        assert doc["bell_note"] == 55
        assert doc["slot"] == 1
        assert doc["loop_id"] == "C01"

    def test_station_full_is_structured_rejection(self, client):
        client.post("/launch", json={"station": 2})
        client.post("/launch", json={"station": 2})
        response = client.post("/launch", json={"station": 2})
        assert response.status_code == 200
        doc = response.json()
        assert doc == {"accepted": False, "reason": "StationFull",
                       "station": 2}

    def test_wall_full(self, client):
        for station in range(1, 7):
            client.post("/launch", json={"station": station})
            client.post("/launch", json={"station": station})
        doc = client.post("/launch", json={"station": 1}).json()
        assert doc["accepted"] is False
        assert doc["reason"] == "WallFull"

    def test_invalid_station(self, client):
        assert client.post("/launch", json={"station": 9}).status_code == 422


class TestStateEndpoint:
    def test_fresh_state(self, client):
        doc = client.get("/state").json()
        assert doc["collages"] == []
        assert doc["bed_active"] == [1, 2, 3, 4, 5, 6]

    def test_after_launch_and_two_measures(self, client):
        client.post("/launch", json={"station": 1})
        client.post("/advance", json={"measures": 2})
        doc = client.get("/state").json()
        assert len(doc["collages"]) == 1
        assert doc["bed_active"] == [1, 2, 3, 4, 5]

    def test_state_matches_replay(self, client, library):
        for station in (1, 2, 3):
            client.post("/launch", json={"station": station})
            client.post("/advance", json={"measures": 3})
        live = client.get("/state").json()
        replayed = service.replay_requests(client.session.log,
                                           client.session.config, library)
        scheduler.advance_to(replayed, client.session.state.current_sample)
        assert scheduler.snapshot(replayed) == live


class TestEventStream:
    def test_launch_event_order(self, client):
        client.post("/launch", json={"station": 1})
        events = client.post("/advance", json={"measures": 4}).json()["events"]
        kinds = [e["kind"] for e in events]
        assert kinds.index("BellStrike") < kinds.index("TollStart") \
            < kinds.index("CollageStart")

    def test_sse_snapshot_then_events(self, client):
        client.post("/launch", json={"station": 1})
        client.post("/advance", json={"measures": 4})
        # A late joiner gets the snapshot marker first, then the feed.
        response = client.get("/events", params={"limit": 1})
        messages = [json.loads(line[len("data: "):])
                    for line in response.text.splitlines()
                    if line.startswith("data: ")]
        assert messages[0]["kind"] == "snapshot"
        assert "bed_active" in messages[0]

    def test_two_subscribers_identical(self, client, library):
        session = client.session
        q1 = session.subscribe()
        q2 = session.subscribe()
        client.post("/launch", json={"station": 1})
        client.post("/advance", json={"measures": 4})

        def drain(q):
            out = []
            while not q.empty():
                out.append(q.get_nowait())
            return out
        m1, m2 = drain(q1), drain(q2)
        assert m1 == m2
        assert any(m.get("kind") == "BellStrike" for m in m1)

    def test_log_and_advance_agree(self, client):
        client.post("/launch", json={"station": 4})
        returned = client.post("/advance", json={"measures": 3}).json()["events"]
        logged = [e for e in client.session.log if e["type"] == "event"]
        assert [e["kind"] for e in returned] == [e["kind"] for e in logged]
        assert [e["at_sample"] for e in returned] \
            == [e["at_sample"] for e in logged]


class TestAudioEndpoints:
    def test_loop_wav(self, client):
        response = client.get("/loops/C01.wav")
        assert response.status_code == 200
        assert response.content[:4] == b"RIFF"

    def test_unknown_loop(self, client):
        assert client.get("/loops/NOPE.wav").status_code == 404

    def test_audio_chunk_is_one_measure(self, client):
        response = client.get("/audio/next")
        assert response.content[:4] == b"RIFF"
        # 44 byte canonical header + one measure of 16-bit stereo frames.
        assert len(response.content) == 44 + SPM * 2 * 2

    def test_config_endpoint(self, client):
        doc = client.get("/config").json()
        assert doc["timebase"]["sample_rate_hz"] == 44100


class TestTrace:
    def test_parse_valid(self):
        text = '{"t_ms": 0, "event": "launch", "station": 1}\n' \
               '{"t_ms": 1500, "event": "launch", "station": 2}\n'
        records = service.parse_trace(text)
        assert [r["station"] for r in records] == [1, 2]

    def test_parse_errors_carry_line_numbers(self):
        cases = [
            ("not json", 1),
            ('{"t_ms": 0, "event": "launch", "station": 1}\n'
             '{"t_ms": -5, "event": "launch", "station": 1}', 2),
            ('{"t_ms": 100, "event": "launch", "station": 1}\n'
             '{"t_ms": 50, "event": "launch", "station": 1}', 2),
            ('{"t_ms": 0, "event": "launch", "station": 7}', 1),
            ('{"t_ms": 0, "event": "noise", "station": 1}', 1),
        ]
        for text, line in cases:
            with pytest.raises(service.TraceParseError) as err:
                service.parse_trace(text)
            assert err.value.line == line

    def test_empty_trace_renders_ambient(self, tmp_path, library):
        trace = tmp_path / "empty.jsonl"
        trace.write_text("")
        cfg = service.SessionConfig(CFG)
        result = service.run_trace(trace, tmp_path / "out", 4, cfg, library)
        assert result["event_count"] == 0
        assert result["frames"] == 4 * SPM
        assert result["clipped_samples"] == 0

    def test_demo_trace_bed_fade_order(self, tmp_path, library):
        lines = []
        for i, station in enumerate((1, 2, 3, 4, 5, 6)):
            lines.append(json.dumps({"t_ms": 4000 * i, "event": "launch",
                                     "station": station}))
        trace = tmp_path / "demo.jsonl"
        trace.write_text("\n".join(lines) + "\n")
        cfg = service.SessionConfig(CFG, lifetime_measures=60)
        result = service.run_trace(trace, tmp_path / "out", 16, cfg, library)
        fades = [json.loads(l)["bed"]
                 for l in (tmp_path / "out" / "events.jsonl").read_text().splitlines()
                 if json.loads(l)["kind"] == "BedFadeOut"]
        assert fades == [6, 5, 4, 3, 2, 1]

    def test_run_trace_deterministic(self, tmp_path, library):
        trace = tmp_path / "t.jsonl"
        trace.write_text('{"t_ms": 500, "event": "launch", "station": 3}\n')
        cfg = service.SessionConfig(CFG, lifetime_measures=8)
        service.run_trace(trace, tmp_path / "a", 8, cfg, library)
        service.run_trace(trace, tmp_path / "b", 8, cfg, library)
        assert (tmp_path / "a" / "session.wav").read_bytes() \
            == (tmp_path / "b" / "session.wav").read_bytes()
        assert (tmp_path / "a" / "events.jsonl").read_text() \
            == (tmp_path / "b" / "events.jsonl").read_text()


class TestSessionConfig:
    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv(service.ENV_PORT, "9000")
        monkeypatch.setenv(service.ENV_REALTIME, "true")
        cfg = service.SessionConfig(CFG).with_env_overrides()
        assert cfg.port == 9000
        assert cfg.realtime is True

    def test_round_trip(self):
        cfg = service.SessionConfig(CFG, lifetime_measures=32, seed=9)
        assert service.SessionConfig.from_dict(cfg.to_dict()) == cfg

"""Record a scripted session against the real service for the UI tests.

Drives the FastAPI app through its HTTP surface (POST /launch, POST
/advance, GET /state) while holding a subscriber queue, so the fixture
captures exactly the message stream an EventSource client would receive,
interleaved with authoritative snapshots.  Output is deterministic for a
fixed seed and script.
"""

import asyncio
import json
from pathlib import Path

from fastapi.testclient import TestClient

from loopwall.music import default_config
from loopwall.service import Session, SessionConfig, create_app

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "session.json"

# (op, arg): launch a station, or advance the clock by N measures.
SCRIPT = [
    ("launch", 1), ("launch", 2),
    ("advance", 3),
    ("launch", 3), ("launch", 3),
    ("advance", 2),
    ("launch", 3),            # third launch on station 3 -> StationFull
    ("launch", 4),
    ("advance", 4),
    ("launch", 5), ("launch", 6),
    ("advance", 6),
    ("advance", 6),           # early collages expire (lifetime 8)
    ("launch", 1), ("launch", 2),
    ("advance", 3),
]


def drain(queue: asyncio.Queue) -> list[dict]:
    messages = []
    while True:
        try:
            messages.append(queue.get_nowait())
        except asyncio.QueueEmpty:
            return messages


def main() -> None:
    config = SessionConfig(default_config(), lifetime_measures=8, seed=1)
    session = Session(config)
    queue = session.subscribe()
    steps = []
    with TestClient(create_app(session)) as client:
        initial = drain(queue)          # opening snapshot
        for op, arg in SCRIPT:
            if op == "launch":
                outcome = client.post("/launch", json={"station": arg}).json()
                steps.append({"op": "launch", "station": arg,
                              "outcome": outcome})
            else:
                client.post("/advance", json={"measures": arg})
                steps.append({"op": "messages", "messages": drain(queue)})
                steps.append({"op": "state",
                              "snapshot": client.get("/state").json()})
        steps.append({"op": "state", "snapshot": client.get("/state").json()})
    launches = sum(1 for s in steps if s["op"] == "launch")
    rejected = sum(1 for s in steps if s["op"] == "launch"
                   and not s["outcome"]["accepted"])
    doc = {
        "config": {
            "sample_rate_hz": config.timebase.sample_rate_hz,
            "samples_per_measure": config.timebase.samples_per_measure,
            "lifetime_measures": config.lifetime_measures,
            "fade_measures": config.fade_measures,
        },
        "initial": initial,
        "steps": steps,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}: {launches} launches ({rejected} rejected), "
          f"{len(steps)} steps")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Record a real service exchange for the frontend tests.

Runs the FastAPI app in-process against the bundled fixture with the
deterministic mock model and dumps the open / refine / reload payloads,
so the TypeScript state logic is tested against actual wire bodies.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from textgrasp.assets import default_bank_path, default_category_map, fixture_root
from textgrasp.augment import AugmentationConfig
from textgrasp.cornell import load_dataset
from textgrasp.parsing import VARIANT_FULL
from textgrasp.service import MockServiceModel, build_state, create_app
from textgrasp.templates import build_dataset, load_dataset_records, load_template_bank

OUT = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        samples = load_dataset(fixture_root(), default_category_map())
        bank = load_template_bank(default_bank_path())
        cfg = AugmentationConfig(per_image_count=1, output_size=224, seed=77)
        build_dataset(samples, cfg, bank, VARIANT_FULL, tmp / "data.jsonl")
        records = load_dataset_records(tmp / "data.jsonl")
        state = build_state(
            image_root=tmp,
            sessions_dir=tmp / "sessions",
            model=MockServiceModel(gt_poses={r.id: r.pose for r in records}),
            dataset_path=tmp / "data.jsonl",
        )
        client = TestClient(create_app(state))

        opened = client.post("/api/session", json={"image_id": records[0].id}).json()
        sid = opened["session_id"]
        refined = client.post(f"/api/session/{sid}/refine",
                              json={"message": "move left and rotate"}).json()
        refined_again = client.post(f"/api/session/{sid}/refine",
                                    json={"message": "a bit down"}).json()
        state.sessions.clear()  # simulate a fresh process before the reload GET
        reloaded = client.get(f"/api/session/{sid}").json()

        unparseable_state = build_state(
            image_root=tmp,
            sessions_dir=tmp / "sessions2",
            model=MockServiceModel(gt_poses={r.id: r.pose for r in records},
                                   scripted=["hmm, I cannot improve on that"]),
            dataset_path=tmp / "data.jsonl",
        )
        client2 = TestClient(create_app(unparseable_state))
        opened2 = client2.post("/api/session", json={"image_id": records[0].id}).json()
        bad = client2.post(f"/api/session/{opened2['session_id']}/refine",
                           json={"message": "improve"}).json()

    payload = {
        "opened": opened,
        "refined": refined,
        "refined_again": refined_again,
        "reloaded": reloaded,
        "unparseable_refinement": bad,
    }
    path = OUT / "session_flow.json"
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    print(f"wrote session flow fixture to {path}")


if __name__ == "__main__":
    main()

"""End-to-end walkthrough on a tiny hand-written catalog.

Ingests a handful of things, trains the seed classifier, walks one item
through the two-moderator review flow (including a disagreement that nudges
a group threshold), and finishes by reloading everything from disk to show
that the corpus file plus the audit log really are the whole state.
"""

import tempfile
from pathlib import Path

import numpy as np

from printmod.classifier import model_to_record
from printmod.corpus import AssetKind, MediaAsset
from printmod.moderation import ModeratorProfile, ReviewDecision
from printmod.service.system import ModerationSystem
from printmod.simulation import TickClock

SEED_CATALOG = [
    {"id": "fig-01", "title": "lingerie pinup figurine", "description": "stylized pinup figure in lingerie", "tags": ["figurine", "pinup"], "platform_nsfw": True},
    {"id": "fig-02", "title": "nude study statue", "description": "classical nude sculpture study", "tags": ["statue"], "platform_nsfw": True},
    {"id": "fig-03", "title": "lingerie mannequin torso", "description": "torso mannequin for lingerie display", "tags": ["mannequin"], "platform_nsfw": True},
    {"id": "ben-01", "title": "shelf bracket", "description": "simple L bracket for shelves", "tags": ["bracket"]},
    {"id": "ben-02", "title": "cable clip", "description": "snap-on clip for desk cables", "tags": ["clip"]},
    {"id": "ben-03", "title": "flower vase", "description": "twisted vase for dried flowers", "tags": ["vase"]},
]


def banner(text: str) -> None:
    print(f"\n=== {text} " + "=" * max(0, 56 - len(text)))


def preview_asset(asset_id: str, thing_id: str) -> MediaAsset:
    pixels = np.empty((48, 48, 3), dtype=np.uint8)
    pixels[:] = (150, 160, 200)
    pixels[0:16, 0:16] = (220, 40, 150)
    return MediaAsset(id=asset_id, thing_id=thing_id, kind=AssetKind.RENDERED_PREVIEW, pixels=pixels)


def main() -> None:
    with tempfile.TemporaryDirectory(prefix="printmod-demo-") as tmp:
        data_dir = Path(tmp)
        system = ModerationSystem(data_dir=data_dir, clock=TickClock())
        system.register_moderator(ModeratorProfile(id="mod-a", audience_group="adults"))
        system.register_moderator(ModeratorProfile(id="mod-b", audience_group="teens"))

        banner("ingest the seed catalog")
        for raw in SEED_CATALOG:
            result = system.ingest(raw, enqueue=False)
            print(f"  {raw['id']:8s} v{result['thing']['version']}  gate={result['gate']['status']}")

        banner("seed training from the platform NSFW flag")
        model = system.seed_train(n_pos=3, n_neg=3, rng_seed=7, epochs=60)
        print(f"  model v{model.version} over {len(model.weights)} categories")

        banner("a new upload gets scored, explained, and queued")
        result = system.ingest(
            {"id": "fig-04", "title": "lingerie figure variant", "description": "another lingerie figure for the shelf", "tags": ["figurine"]},
            assets=[preview_asset("fig-04-img0", "fig-04")],
        )
        pred = result["prediction"]
        for cat, p in sorted(pred["probabilities"].items()):
            print(f"  {cat:20s} p={p:.3f}")
        top = pred["attributions"]["sexual_suggestive"][:3]
        print("  top contributions:", ", ".join(f"{f}={v:+.2f}" for f, v in top))
        task_id = result["task_id"]
        print(f"  queued as {task_id}")

        banner("review: agreement, then a rejection = disagreement")
        task = system.next_task("mod-a")
        out = system.submit_review(ReviewDecision.from_record({
            "task_id": task.task_id,
            "moderator_id": "mod-a",
            "case": "agree_finalize",
            "selected_categories": ["sexual_suggestive"],
        }))
        print(f"  mod-a agrees      -> task {out['state']}")
        task = system.next_task("mod-b")
        out = system.submit_review(ReviewDecision.from_record({
            "task_id": task.task_id,
            "moderator_id": "mod-b",
            "case": "reject_detection",
            "rejected_regions": [{"asset_id": "fig-04-img0", "row": 0, "col": 0}],
        }))
        print(f"  mod-b rejects     -> task {out['state']}, "
              f"{out['examples_applied']} example(s) applied at model v{out['model_version']}")
        print(f"  disagreements so far: {system.disagreement_count()}")

        banner("per-audience thresholds after calibration")
        for group, profile in sorted(system.threshold_snapshot().items()):
            cuts = ", ".join(f"{cat}={theta:.2f}" for cat, theta in sorted(profile["thresholds"].items()))
            print(f"  {group:8s} {cuts}")
        print("  (the rejecting moderator's group got the higher cutoff)")

        banner("consent gate in search")
        system.ingest({"id": "scan-01", "title": "head scan", "description": "3d scan of a colleague's head", "tags": ["3d_scan"]}, enqueue=False)
        anon = {item["thing_id"] for item in system.search()["items"]}
        staff = {item["thing_id"] for item in system.search(requester_is_moderator=True)["items"]}
        print(f"  end users see : {sorted(anon)}")
        print(f"  moderators see: {sorted(staff - anon)} extra (reason shown inline)")

        banner("restart: replaying the audit log rebuilds everything")
        reopened = ModerationSystem(data_dir=data_dir, clock=TickClock())
        same_model = model_to_record(reopened.model) == model_to_record(system.model)
        same_thetas = reopened.threshold_snapshot() == system.threshold_snapshot()
        print(f"  model bit-identical: {same_model}; thresholds identical: {same_thetas}")
        print(f"  audit events replayed: {len(reopened.audit)}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Smoke test for the guidebench_py extension module.

Builds the cdylib with cargo if needed, imports it, and exercises the main
surface: annotation loading, plan building, transcript generation, metric
evaluation, and the text metrics.

Usage: python3 python/smoke_test.py [--release]
"""
import json
import os
import shutil
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
FIXTURES = os.path.join(ROOT, "fixtures")


def build_module(release: bool) -> str:
    profile = "release" if release else "debug"
    cmd = ["cargo", "build", "-p", "guidebench-py"]
    if release:
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)
    built = os.path.join(ROOT, "target", profile, "libguidebench_py.so")
    if not os.path.exists(built):  # macOS fallback
        built = os.path.join(ROOT, "target", profile, "libguidebench_py.dylib")
    out_dir = os.path.join(HERE, "_build")
    os.makedirs(out_dir, exist_ok=True)
    out = os.path.join(out_dir, "guidebench_py.so")
    shutil.copy2(built, out)
    return out_dir


def check(name, condition, detail=""):
    status = "ok" if condition else "FAIL"
    print(f"  {status}  {name}" + (f" ({detail})" if detail else ""))
    if not condition:
        raise SystemExit(f"smoke test failed at: {name} {detail}")


def main():
    release = "--release" in sys.argv
    sys.path.insert(0, build_module(release))
    import guidebench_py as gb

    print("guidebench_py smoke test")

    video = gb.load_annotations(
        os.path.join(FIXTURES, "annotations", "bruschetta_demo.json")
    )
    check("load_annotations", video.video_id == "bruschetta_demo")
    check("action count", len(video.actions()) == 5)
    check("mistake count", video.mistake_count() == 2)

    plan = gb.build_plan(video)
    check("plan length", len(plan) == 5)
    check("first step text", plan.step_texts()[0] == "chop the tomatoes")

    compound = gb.build_plan(
        gb.load_annotations(os.path.join(FIXTURES, "annotations", "pasta_compound.json"))
    )
    check("compound step", compound.steps()[0] ==
          ["simmer the tomato sauce", "stir the sauce occasionally"])

    transcript = gb.generate_transcript(video)
    events = transcript.events()
    check("transcript first event",
          events[0].kind == "instruction" and events[0].time_s == 0.0)
    check("transcript ends with done", events[-1].kind == "done")
    golden = open(
        os.path.join(FIXTURES, "golden", "transcripts", "bruschetta_demo.jsonl")
    ).read()
    check("transcript matches golden", transcript.to_jsonl() == golden)

    advanced = gb.generate_transcript(
        gb.load_annotations(os.path.join(FIXTURES, "annotations", "adv_onion_repeat.json"))
    )
    check("advanced replan count", advanced.replans_used == 1)
    check("divergence prefix", any(
        e.divergent and e.text.startswith("You did not follow the instruction.")
        for e in advanced.events()
    ))

    manifest = os.path.join(FIXTURES, "manifest.tsv")
    checks = gb.validate_manifest(manifest)
    check("validate_manifest", len(checks) == 16 and all(ok for _, ok, _ in checks))

    report = gb.eval_manifest(manifest, set="main", split="test", agent="oracle")
    check("oracle IC-Acc", report.ic_acc == 1.0, f"got {report.ic_acc}")
    check("oracle precision/recall", report.precision == 1.0 and report.recall == 1.0)
    check("oracle ROUGE-L", report.rouge_l_mean == 1.0)
    parsed = json.loads(report.to_json())
    check("report JSON", parsed["ic_acc"] == 1.0)

    silent = gb.eval_manifest(manifest, set="main", split="test", agent="silent")
    check("silent IC-Acc", silent.ic_acc == 0.0)
    check("silent no false positives", silent.confusion[1] == 0)

    turn = gb.eval_manifest(manifest, set="main", split="test", agent="oracle", mode="turn")
    check("turn-based oracle", turn.ic_acc == 1.0)

    stats = gb.dataset_stats(manifest, set="main", split="val")
    check("val stats", stats["videos"] == 2 and stats["instructions"] == 6
          and stats["followed_success"] == 6)

    score = gb.rouge_l("add the salt", "add salt now")
    check("rouge_l", abs(score - 2.0 / 3.0) < 1e-9, f"got {score}")
    check("normalize_tokens", gb.normalize_tokens("1/4 tsp Salt!") == ["1/4", "tsp", "salt"])

    picked = gb.identify_performed_step(
        "You did not follow the instruction. You chopped the onion.",
        [("s1", "chop the onion"), ("s2", "slice the tomato")],
    )
    check("identify_performed_step", picked == "s1")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()

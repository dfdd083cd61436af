"""Stage runners shared by the CLI subcommands and the one-shot pipeline."""

from __future__ import annotations

import functools
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from idaug.config import PipelineConfig
from idaug.errors import IdaugError, NonSalientError
from idaug.features import FeatureStore, extract_features, read_feature_store, write_feature_store
from idaug.inpaint import generate_backgrounds
from idaug.matcher import match_all, read_matches, write_matches
from idaug.sample import DatasetManifest, ManifestEntry, load_manifest, load_sample
from idaug.synthesis import synthesize
from idaug.workers import Outcome, run_all

log = logging.getLogger("idaug")


@dataclass
class StageReport:
    name: str
    succeeded: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)
    seconds: float = 0.0

    def absorb(self, outcomes: list[Outcome]) -> None:
        for o in outcomes:
            if o.ok:
                self.succeeded += 1
            else:
                self.failures.append((o.key, o.error))

    def as_record(self) -> dict:
        return {
            "stage": self.name,
            "succeeded": self.succeeded,
            "failed": len(self.failures),
            "failures": [{"id": k, "error": e} for k, e in self.failures],
        }


def _feature_job(entry: ManifestEntry, masked: bool) -> np.ndarray:
    sample = load_sample(entry)
    if masked:
        if not sample.salient:
            raise NonSalientError(f"{entry.id}: empty mask, no object to describe")
        return extract_features(sample.image, sample.mask)
    return extract_features(sample.image)


def extract_store(manifest: DatasetManifest, masked: bool, jobs: int = 1) -> tuple[FeatureStore, list[Outcome]]:
    """Descriptors for every sample: under its mask (objects) or whole (backgrounds)."""
    job = functools.partial(_feature_job, masked=masked)
    outcomes = run_all(job, [(e.id, e) for e in manifest], jobs=jobs, stage="extract")
    ok = [o for o in outcomes if o.ok]
    vectors = np.array([o.value for o in ok], dtype=np.float64).reshape(len(ok), -1)
    if not ok:
        vectors = np.zeros((0, 256))
    return FeatureStore(tuple(o.key for o in ok), vectors), outcomes


def run_pipeline(config: PipelineConfig) -> tuple[int, dict]:
    """inpaint -> extract -> match -> synth under ``config.out``.

    Writes ``summary.json`` (counts and failures, no timings so reruns are
    byte-identical) and returns the exit code with the summary.
    """
    if not config.manifest or not config.out:
        raise IdaugError("pipeline needs both a manifest and an output directory")
    out = Path(config.out)
    manifest = load_manifest(config.manifest)
    out.mkdir(parents=True, exist_ok=True)
    reports: list[StageReport] = []

    def stage(name: str):
        report = StageReport(name)
        reports.append(report)
        report.seconds = time.perf_counter()
        return report

    def finish(report: StageReport):
        report.seconds = time.perf_counter() - report.seconds
        log.info("stage=%s event=finished ok=%d failed=%d duration=%.3f",
                 report.name, report.succeeded, len(report.failures), report.seconds)

    r = stage("inpaint")
    bg_manifest_path, outcomes = generate_backgrounds(
        manifest, out / "backgrounds", backend=config.inpaint_backend, cmd=config.inpaint_cmd,
        dilation_radius=config.dilation_radius, jobs=config.jobs,
    )
    r.absorb(outcomes)
    finish(r)
    bg_manifest = load_manifest(bg_manifest_path)

    r = stage("extract")
    objects, outcomes = extract_store(manifest, masked=True, jobs=config.jobs)
    r.absorb(outcomes)
    backgrounds, outcomes = extract_store(bg_manifest, masked=False, jobs=config.jobs)
    r.absorb(outcomes)
    write_feature_store(objects, out / "features" / "objects.csv")
    write_feature_store(backgrounds, out / "features" / "backgrounds.csv")
    finish(r)

    r = stage("match")
    try:
        matches = match_all(
            read_feature_store(out / "features" / "objects.csv"),
            read_feature_store(out / "features" / "backgrounds.csv"),
            criterion=config.criterion, k=config.k, exclude_self=config.exclude_self,
            reading=config.reading,
        )
        r.succeeded = len(matches)
    except IdaugError as exc:
        matches = []
        r.failures.append(("*", f"{type(exc).__name__}: {exc}"))
    write_matches(matches, out / "matches.csv")
    finish(r)

    r = stage("synth")
    if matches:
        _, outcomes = synthesize(manifest, bg_manifest, read_matches(out / "matches.csv"),
                                 config.seed, out / "augmented", jobs=config.jobs)
        r.absorb(outcomes)
    finish(r)

    failed = sum(len(x.failures) for x in reports)
    summary = {
        "input_samples": len(manifest),
        "augmented_samples": reports[-1].succeeded,
        "hard_failures": failed,
        "seed": config.seed,
        "stages": [x.as_record() for x in reports],
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary["timings"] = {x.name: round(x.seconds, 3) for x in reports}
    return (0 if failed == 0 else 1), summary

"""Clip-to-features orchestration shared by the CLI and library users."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .adles import EstimationResult, estimate
from .config import PipelineConfig
from .features import SegmentFeatures, featurize
from .glottal import IllConditionedError, inverse_filter
from .signal import AudioClip, ManifestRecord, Segment, is_voiced, load_clip, segment_clip

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentOutcome:
    segment_id: str
    meta: dict
    result: EstimationResult | None
    skipped: str = ""  # reason when no estimate was produced

    def record(self) -> dict:
        r = self.result
        return {
            **self.meta,
            "alpha": r.params.alpha,
            "beta": r.params.beta,
            "delta": r.params.delta,
            "residual_energy": r.residual.energy,
            "residual_mean_abs": r.residual.mean_abs,
            "residual_max_abs": r.residual.max_abs,
            "iterations": r.iterations,
            "converged": r.converged,
        }

    def features(self) -> SegmentFeatures:
        return featurize(self.result, self.meta)


def segment_id(rec: ManifestRecord, seg: Segment) -> str:
    return f"{rec.speaker_id}/{Path(rec.path).stem}/{seg.index:04d}"


def load_record(rec: ManifestRecord, cfg: PipelineConfig) -> AudioClip:
    return load_clip(rec.path, cfg.segmentation.sample_rate, rec.speaker_id, rec.label, rec.vowel)


def voiced_segments(clip: AudioClip, cfg: PipelineConfig) -> list[Segment]:
    s = cfg.segmentation
    return [seg for seg in segment_clip(clip, s.win_s, s.hop_s) if is_voiced(seg, s.energy_floor, s.zcr_ceiling)]


def estimate_segment(seg: Segment, cfg: PipelineConfig) -> EstimationResult:
    u0m = inverse_filter(seg.samples, seg.sample_rate, cfg.inverse_filter)
    if u0m.degenerate:
        raise IllConditionedError("segment is silent")
    return estimate(u0m, cfg.boundary, cfg.constants, cfg.optimizer)


def process_segment(args) -> SegmentOutcome:
    """Worker entry point: ``(segment, meta, cfg)`` -> outcome. Picklable."""
    seg, meta, cfg = args
    try:
        return SegmentOutcome(meta["segment_id"], meta, estimate_segment(seg, cfg))
    except IllConditionedError as exc:
        log.warning("skipping %s: %s", meta["segment_id"], exc)
        return SegmentOutcome(meta["segment_id"], meta, None, str(exc))

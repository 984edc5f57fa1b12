"""Command-line front end: ``estimate``, ``phase``, ``eval`` and ``selftest``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

from . import checks
from .classify import SingleClassError, SpeakerLeakError, evaluate, make_cv_plan
from .config import PipelineConfig
from .features import read_features, write_features_csv
from .glottal import IllConditionedError
from .pipeline import estimate_segment, load_record, process_segment, segment_id, voiced_segments
from .signal import AudioError, load_clip, is_voiced, read_manifest, segment_clip
from .vfmodel import DivergenceError, integrate_forward, model_step, phase_portrait, write_portrait_csv

log = logging.getLogger("vocalfold")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3
VOWEL_FILTERS = {"a": {"a"}, "i": {"i"}, "u": {"u"}, "ai": {"a", "i"}, "au": {"a", "u"}, "iu": {"i", "u"}, "all": None}


class InputError(Exception):
    pass


def cmd_estimate(args) -> int:
    cfg = PipelineConfig.load(args.config)
    records = read_manifest(args.manifest)
    if not records:
        raise InputError(f"{args.manifest}: manifest lists no clips")
    tasks = []
    n_segments = 0
    for rec in records:
        try:
            clip = load_record(rec, cfg)
            segs = segment_clip(clip, cfg.segmentation.win_s, cfg.segmentation.hop_s)
        except AudioError as exc:
            raise InputError(f"clip {rec.path}: {exc}") from exc
        n_segments += len(segs)
        s = cfg.segmentation
        for seg in segs:
            if not is_voiced(seg, s.energy_floor, s.zcr_ceiling):
                continue
            meta = {"segment_id": segment_id(rec, seg), "speaker_id": rec.speaker_id, "vowel": rec.vowel, "label": rec.label}
            tasks.append((seg, meta, cfg))

    if args.jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = _collect(pool.map(process_segment, tasks), tasks)
    else:
        outcomes = _collect(map(process_segment, tasks), tasks)

    done = [o for o in outcomes if o.result is not None]
    with open(args.out, "w") as fh:
        for o in done:
            fh.write(json.dumps(o.record()) + "\n")
    if args.features_out:
        write_features_csv([o.features() for o in done], args.features_out)
    n_conv = sum(o.result.converged for o in done)
    print(
        f"clips={len(records)} segments={n_segments} voiced={len(tasks)} "
        f"estimated={len(done)} skipped={len(outcomes) - len(done)} converged={n_conv}",
        file=sys.stderr,
    )
    return EXIT_OK


def _collect(it, tasks):
    out = []
    try:
        for o in it:
            out.append(o)
    except DivergenceError as exc:
        failing = tasks[len(out)][1]["segment_id"]
        raise DivergenceError(exc.step, exc.bound) from RuntimeError(f"segment {failing}")
    return out


def cmd_phase(args) -> int:
    cfg = PipelineConfig.load(args.config)
    s = cfg.segmentation
    try:
        clip = load_clip(args.clip, s.sample_rate)
        segs = segment_clip(clip, s.win_s, s.hop_s)
    except AudioError as exc:
        raise InputError(f"clip {args.clip}: {exc}") from exc
    if not 0 <= args.segment < len(segs):
        raise InputError(f"segment index {args.segment} out of range (clip has {len(segs)} segments)")
    seg = segs[args.segment]
    if not is_voiced(seg, s.energy_floor, s.zcr_ceiling):
        raise InputError(f"segment {args.segment} is not voiced")
    try:
        res = estimate_segment(seg, cfg)
    except IllConditionedError as exc:
        raise InputError(f"segment {args.segment}: {exc}") from exc
    n_steps = max(1, int(round(args.horizon_s * s.sample_rate)))
    traj = integrate_forward(res.params, cfg.boundary, n_steps, model_step(s.sample_rate, cfg.optimizer.nominal_f0))
    for side in ("left", "right"):
        write_portrait_csv(phase_portrait(traj, side), f"{args.out}_{side}.csv")
    p = res.params
    print(f"alpha={p.alpha!r} beta={p.beta!r} delta={p.delta!r} rows={len(traj)}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = PipelineConfig.load(args.config)
    feats = read_features(args.features)
    keep = VOWEL_FILTERS[args.vowel]
    if keep is not None:
        feats = [f for f in feats if f.vowel in keep]
    if not feats:
        raise InputError(f"vowel filter {args.vowel!r} leaves no segments")
    labels = {f.label for f in feats}
    if None in labels:
        raise InputError("every segment needs a label for evaluation")
    if len(labels) < 2:
        raise InputError(f"vowel filter {args.vowel!r} leaves a single class")
    c = cfg.classifier
    k = args.k if args.k is not None else c.k
    seed = args.seed if args.seed is not None else c.seed
    plan = make_cv_plan([(f.speaker_id, f.label) for f in feats], k, seed)
    report = evaluate(feats, plan, c.l2, c.epochs, c.lr)
    doc = report.to_dict()
    doc["config"]["vowel"] = args.vowel
    text = json.dumps(doc, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = checks.run_all()
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"selftest {'passed' if ok else 'FAILED'}: {sum(r.passed for r in results)}/{len(results)} checks")
    return EXIT_OK if ok else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vocalfold", description="Vocal fold oscillation estimation from speech.")
    ap.add_argument("--print-default-config", action="store_true", help="print the full default config and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("estimate", help="estimate model parameters for every voiced segment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="JSON-lines output path")
    p.add_argument("--features-out", help="also write the feature table as CSV")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; estimation is deterministic")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("phase", help="phase portraits for one segment of a clip")
    p.add_argument("--clip", required=True)
    p.add_argument("--segment", type=int, required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX_left.csv and PREFIX_right.csv")
    p.add_argument("--horizon-s", type=float, default=0.5, help="simulated duration in audio seconds")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("eval", help="speaker-disjoint cross-validated ROC-AUC")
    p.add_argument("--features", required=True, help="feature CSV or estimate JSONL")
    p.add_argument("--config")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vowel", choices=sorted(VOWEL_FILTERS), default="all")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="gradient and parameter-recovery self-checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.print_default_config:
        print(PipelineConfig().to_json())
        return EXIT_OK
    if args.command is None:
        ap.print_help(sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except DivergenceError as exc:
        where = f" ({exc.__cause__})" if exc.__cause__ else ""
        print(f"error: numerical divergence{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, AudioError, SingleClassError, SpeakerLeakError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

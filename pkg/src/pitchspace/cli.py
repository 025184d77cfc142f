"""Command-line surface for the pipeline.

Subcommands: synth, sync, segment, features, train, eval, explain,
compare-rankings, render. Exit codes: 0 success, 1 usage/config error,
2 data error, 3 internal error. Every run writes a manifest (config hash,
seed, input digests) into the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import explain as explainmod
from . import gbdt as gbdtmod
from .config import ConfigError, RunConfig
from .dominance import compute_dominance_grid, offside_positions, space_scores
from .features import (
    PassSampleTable,
    build_dataset,
    write_medians,
    orient_frame,
)
from .match_io import (
    SchemaError,
    apply_shift,
    load_match,
    save_match,
    segment_attack_sequences,
    synchronization_shift,
)
from .render_svg import RenderOptions, render_animation_svg, render_frame_svg
from .synth import synthesize_match

logger = logging.getLogger("pitchspace")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would sys.exit(2); we map usage -> 1
        raise UsageError(message)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    seed: int | None,
    config_path: str | None,
    inputs: list[Path],
    outputs: list[str],
) -> None:
    # Keys stay relative (basename, parent-qualified on collision) so reruns
    # into different directories produce byte-identical manifests.
    names = [p.name for p in inputs]
    digests = {}
    for p in sorted(inputs, key=lambda p: (p.parent.name, p.name)):
        key = p.name if names.count(p.name) == 1 else f"{p.parent.name}/{p.name}"
        digests[key] = _sha256(p)
    doc = {
        "command": command,
        "seed": seed,
        "config_sha256": cfgmod.config_digest(config_path),
        "inputs": digests,
        "outputs": sorted(outputs),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _match_dirs(root: Path) -> list[Path]:
    """A match directory holds tracking.jsonl + events.jsonl; accept either a
    single match directory or a directory of them."""
    if (root / "tracking.jsonl").exists():
        return [root]
    dirs = sorted(d for d in root.iterdir() if d.is_dir() and (d / "tracking.jsonl").exists())
    if not dirs:
        raise SchemaError(f"no match directories under {root}", root)
    return dirs


def _load_matches(args, cfg: RunConfig) -> tuple[list, list[Path]]:
    inputs: list[Path] = []
    matches = []
    if getattr(args, "matches", None):
        for d in _match_dirs(Path(args.matches)):
            t, e = d / "tracking.jsonl", d / "events.jsonl"
            matches.append(load_match(t, e))
            inputs.extend([t, e])
    else:
        tracking = args.tracking or cfg.paths.get("tracking")
        events = args.events or cfg.paths.get("events")
        if not tracking or not events:
            raise UsageError("provide --tracking/--events or --matches")
        matches.append(load_match(tracking, events))
        inputs.extend([Path(tracking), Path(events)])
    return matches, inputs


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = cfgmod.load_config(args.config)
    seed = args.seed if args.seed is not None else 7
    out = _out_dir(args)
    frames, events, ground_truth = synthesize_match(cfg.synth, seed, cfg.motion)
    save_match(frames, events, out / "tracking.jsonl", out / "events.jsonl")
    with open(out / "ground_truth.json", "w", encoding="utf-8") as fh:
        json.dump(ground_truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out, "synth", seed, args.config,
        [out / "tracking.jsonl", out / "events.jsonl"],
        ["tracking.jsonl", "events.jsonl", "ground_truth.json"],
    )
    print(f"synth: wrote {len(frames)} frames, {len(events)} events to {out}")
    return EXIT_OK


def cmd_sync(args) -> int:
    cfgmod.load_config(args.config)  # validate early; nothing else read here
    out = _out_dir(args)
    frames, events = load_match(args.tracking, args.events)
    shifts = synchronization_shift(frames, events)
    shifted = apply_shift(events, shifts, frames)
    save_match(frames, shifted, out / "tracking.jsonl", out / "events.jsonl")
    with open(out / "sync_report.json", "w", encoding="utf-8") as fh:
        json.dump({"shifts": {str(k): v for k, v in shifts.items()}}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out, "sync", args.seed, args.config,
        [Path(args.tracking), Path(args.events)],
        ["tracking.jsonl", "events.jsonl", "sync_report.json"],
    )
    print(f"sync: shifts {shifts}")
    return EXIT_OK


def cmd_segment(args) -> int:
    cfgmod.load_config(args.config)  # validate early; nothing else read here
    out = _out_dir(args)
    frames, events = load_match(args.tracking, args.events)
    sequences, drops = segment_attack_sequences(events, frames)
    doc = {
        "sequences": [
            {
                "sequence_id": s.sequence_id,
                "team": s.team_id,
                "start_frame": s.start_frame,
                "end_frame": s.end_frame,
                "event_ids": list(s.event_ids),
            }
            for s in sequences
        ],
        "dropped": [{"event_ids": list(d.event_ids), "reason": d.reason} for d in drops],
    }
    with open(out / "sequences.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out, "segment", args.seed, args.config,
        [Path(args.tracking), Path(args.events)], ["sequences.json"],
    )
    print(f"segment: {len(sequences)} sequences, {len(drops)} drop records")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = _out_dir(args)
    matches, inputs = _load_matches(args, cfg)
    n = args.n if args.n is not None else cfg.feature_n
    ranking = args.ranking or cfg.ranking_variable
    table, medians = build_dataset(
        matches, n, ranking, cfg.pitch, cfg.motion, cfg.weight,
        fast_space_vel_semantics=cfg.fast_space_vel_semantics,
        infinite_times_first=cfg.infinite_times_first,
    )
    table.to_csv(out / "features.csv")
    write_medians(medians, out / "medians.json")
    _write_manifest(
        out, "features", args.seed, args.config, inputs, ["features.csv", "medians.json"]
    )
    print(
        f"features: {len(table)} pass samples, {len(table.columns)} columns "
        f"(n={n}, ranked by {ranking})"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = _out_dir(args)
    table = PassSampleTable.from_csv(args.features)
    seed = args.seed if args.seed is not None else cfg.cv_seed
    best_hp, results = gbdtmod.grid_search_cv(table, cfg.grid, k=cfg.cv_k, seed=seed)
    model = gbdtmod.train_gbdt(table, best_hp)
    gbdtmod.save_model(model, out / "model.json")
    with open(out / "cv_results.json", "w", encoding="utf-8") as fh:
        json.dump(
            [
                {
                    "hyperparams": r.hyperparams.__dict__,
                    "fold_accuracies": r.fold_accuracies,
                    "mean_accuracy": r.mean_accuracy,
                    "best": r.hyperparams == best_hp,
                }
                for r in results
            ],
            fh, indent=1, sort_keys=True,
        )
        fh.write("\n")
    _write_manifest(
        out, "train", seed, args.config, [Path(args.features)], ["model.json", "cv_results.json"]
    )
    best = max(r.mean_accuracy for r in results)
    print(f"train: grid of {len(results)} configs, best CV accuracy {best:.3f}")
    print(
        f"train: best config depth={best_hp.max_depth} lr={best_hp.learning_rate} "
        f"trees={best_hp.n_trees}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = cfgmod.load_config(args.config)
    model = gbdtmod.load_model(args.model)
    table = PassSampleTable.from_csv(args.features)
    if table.columns != model.feature_names:
        raise SchemaError(
            f"feature columns {table.columns[:3]}... do not match the model's", args.features
        )
    probs = model.predict_proba_batch(table.raw)
    report = gbdtmod.classification_metrics(table.labels, probs, threshold=cfg.threshold)
    n = len(model.feature_names) // 5
    print(gbdtmod.format_metrics_table({f"n={n}": report}))
    if args.out:
        out = _out_dir(args)
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "accuracy": report.accuracy,
                    "threshold": report.threshold,
                    "n_samples": report.n_samples,
                    "confusion": report.confusion,
                    "per_class": {
                        str(c): {"precision": m.precision, "recall": m.recall, "f1": m.f1}
                        for c, m in report.per_class.items()
                    },
                    "macro": {
                        "precision": report.macro.precision,
                        "recall": report.macro.recall,
                        "f1": report.macro.f1,
                    },
                },
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
        _write_manifest(
            out, "eval", args.seed, args.config,
            [Path(args.model), Path(args.features)], ["metrics.json"],
        )
    return EXIT_OK


def cmd_explain(args) -> int:
    cfgmod.load_config(args.config)  # validate early; nothing else read here
    out = _out_dir(args)
    model = gbdtmod.load_model(args.model)
    table = PassSampleTable.from_csv(args.features)
    summary = explainmod.shap_summary(model, table)
    summary.to_csv(out / "shap_summary.csv")
    outputs = ["shap_summary.csv"]
    if args.per_row:
        phi, base = explainmod.shap_values(model, table.raw)
        margins = model.margin(table.raw)
        with open(out / "attributions.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(["event_id", "base_value", "margin", *model.feature_names]) + "\n")
            for i, eid in enumerate(table.event_ids):
                row = [eid, repr(float(base)), repr(float(margins[i]))]
                row += [repr(float(v)) for v in phi[i]]
                fh.write(",".join(row) + "\n")
        outputs.append("attributions.csv")
    _write_manifest(
        out, "explain", args.seed, args.config,
        [Path(args.model), Path(args.features)], outputs,
    )
    print(f"explain: top feature by mean |phi| is {summary.top_feature()}")
    return EXIT_OK


def cmd_compare_rankings(args) -> int:
    cfg = cfgmod.load_config(args.config)
    matches, inputs = _load_matches(args, cfg)
    n = args.n if args.n is not None else cfg.feature_n
    seed = args.seed if args.seed is not None else cfg.cv_seed
    modes = [True] if cfg.infinite_rank == "first" else [False]
    if cfg.infinite_rank == "both":
        modes = [True, False]
    reports = {}
    for infinite_first in modes:
        report = gbdtmod.compare_ranking_variables(
            matches, n, cfg.grid, cfg.cv_k, seed, cfg.pitch, cfg.motion, cfg.weight,
            fast_space_vel_semantics=cfg.fast_space_vel_semantics,
            infinite_times_first=infinite_first,
        )
        label = "infinite-first" if infinite_first else "infinite-last"
        reports[label] = report
        print(f"[{label}]")
        print(gbdtmod.format_ranking_table(report))
    if args.out:
        out = _out_dir(args)
        with open(out / "ranking_report.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    label: {
                        "best_variable": r.best_variable,
                        "rows": [
                            {
                                "variable": row.variable,
                                "mean_accuracy": row.mean_accuracy,
                                "reference_accuracy": row.reference_accuracy,
                            }
                            for row in r.rows
                        ],
                    }
                    for label, r in reports.items()
                },
                fh, indent=1, sort_keys=True,
            )
            fh.write("\n")
        _write_manifest(out, "compare-rankings", seed, args.config, inputs, ["ranking_report.json"])
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = _out_dir(args)
    frames, events = load_match(args.tracking, args.events)
    frame_ids = None
    if args.frames:
        a, _, b = args.frames.partition(":")
        lo = int(a) if a else frames[0].frame_index
        hi = int(b) if b else frames[-1].frame_index
        frame_ids = (lo, hi)
    selected = [
        f for f in frames if frame_ids is None or frame_ids[0] <= f.frame_index <= frame_ids[1]
    ]
    if not selected:
        raise SchemaError("no frames in the requested range", args.tracking)

    rendered: list[tuple[int, str]] = []
    all_scores: list[float] = []
    prepared = []
    for f in selected:
        team = args.attacking_team or f.metadata.attacking_team_id
        if team is None:
            raise SchemaError(
                f"frame {f.frame_index}: no attacking team marker; pass --attacking-team",
                args.tracking,
            )
        oriented = orient_frame(f, team)
        excluded = offside_positions(oriented)
        fld = compute_dominance_grid(oriented, cfg.pitch, cfg.motion, excluded)
        scores = space_scores(fld, oriented, cfg.weight)
        prepared.append((oriented, scores, fld))
        all_scores.extend(e.score for e in scores if not e.excluded_offside)

    cm_min, cm_max = cfg.render.colormap_min, cfg.render.colormap_max
    if cm_min is None or cm_max is None:
        lo, hi = np.percentile(np.array(all_scores), [5.0, 95.0])
        cm_min = float(lo) if cm_min is None else cm_min
        cm_max = float(hi) if cm_max is None else cm_max
        if not cm_min < cm_max:
            cm_max = cm_min + 1.0
    opts = RenderOptions(
        show_voronoi_boundaries=cfg.render.show_voronoi_boundaries,
        show_scores=cfg.render.show_scores,
        score_min=cm_min,
        score_max=cm_max,
        frame_start=selected[0].frame_index,
        frame_end=selected[-1].frame_index,
        out_dir=str(out),
    )
    outputs = []
    for (oriented, scores, fld) in prepared:
        doc = render_frame_svg(oriented, scores, fld, opts)
        rendered.append((oriented.frame_index, doc))
    if args.animate:
        anim = render_animation_svg([doc for _, doc in rendered], frame_seconds=0.2)
        (out / "animation.svg").write_text(anim, encoding="utf-8")
        outputs.append("animation.svg")
    else:
        for frame_index, doc in rendered:
            name = f"frame_{frame_index:06d}.svg"
            (out / name).write_text(doc, encoding="utf-8")
            outputs.append(name)
    _write_manifest(
        out, "render", args.seed, args.config,
        [Path(args.tracking), Path(args.events)], outputs,
    )
    print(f"render: wrote {len(outputs)} file(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="pitchspace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="run config file (defaults if omitted)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("synth", help="generate a deterministic synthetic match")
    common(p)
    p.set_defaults(func=cmd_synth, needs_out=True)

    p = sub.add_parser("sync", help="align event frames to tracking via kickoff detection")
    common(p)
    p.add_argument("--tracking", required=True)
    p.add_argument("--events", required=True)
    p.set_defaults(func=cmd_sync, needs_out=True)

    p = sub.add_parser("segment", help="split events into attack sequences")
    common(p)
    p.add_argument("--tracking", required=True)
    p.add_argument("--events", required=True)
    p.set_defaults(func=cmd_segment, needs_out=True)

    p = sub.add_parser("features", help="build the pass-sample feature table")
    common(p)
    p.add_argument("--tracking")
    p.add_argument("--events")
    p.add_argument("--matches", help="directory of match directories")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--ranking", default=None, choices=["fast_space_vel", "dist_ball", "time_to_player", "time_to_passline"])
    p.set_defaults(func=cmd_features, needs_out=True)

    p = sub.add_parser("train", help="grid-search CV and fit the final model")
    common(p)
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_train, needs_out=True)

    p = sub.add_parser("eval", help="classification metrics for a model on a table")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_eval, needs_out=False)

    p = sub.add_parser("explain", help="Shapley attribution summary")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--per-row", action="store_true", dest="per_row")
    p.set_defaults(func=cmd_explain, needs_out=True)

    p = sub.add_parser("compare-rankings", help="CV accuracy per ranking variable")
    common(p)
    p.add_argument("--tracking")
    p.add_argument("--events")
    p.add_argument("--matches")
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=cmd_compare_rankings, needs_out=False)

    p = sub.add_parser("render", help="render space-score frames to SVG")
    common(p)
    p.add_argument("--tracking", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--frames", help="frame range lo:hi (inclusive)")
    p.add_argument("--attacking-team", dest="attacking_team", default=None)
    p.add_argument("--animate", action="store_true")
    p.set_defaults(func=cmd_render, needs_out=True)

    return parser


def cli_dispatch(argv: list[str]) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        if args.needs_out and not args.out:
            raise UsageError(f"{args.command}: --out is required")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print("run 'pitchspace --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

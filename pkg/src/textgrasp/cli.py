"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 validation/user error, 2 infrastructure error
(endpoint unreachable or rejecting requests).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import assets
from .augment import AugmentationConfig
from .client import (
    ENV_IMAGE_ROOT,
    ApiError,
    ConfigError,
    EndpointConfig,
    ModelClient,
    TransportError,
    export_training_config,
    write_training_config,
)
from .cornell import CategoryMap, IngestError, load_dataset, split_folds
from .evaluate import (
    RemoteClient,
    aggregate,
    evaluate_fold,
    fold_samples_by_source,
    format_summary_table,
    mock_model,
    samples_from_records,
    save_reports,
)
from .geometry import GraspPose, MetricThresholds
from .parsing import ALL_VARIANTS, VARIANT_FULL, parse_pose
from .service import DEFAULT_INSTRUCTION, LiveServiceModel, MockServiceModel, build_state, create_app
from .templates import (
    BankValidationError,
    author_templates,
    build_dataset,
    lint_bank,
    load_dataset_records,
    load_template_bank,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFRA = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textgrasp",
        description="Grasp-pose dataset building, parsing, evaluation, and refinement tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="materialize the instruction-tuning JSONL")
    p.add_argument("--root", type=Path, default=None,
                   help="Cornell-style dataset root (default: bundled fixture)")
    p.add_argument("--category-map", type=Path, default=None)
    p.add_argument("--bank", type=Path, default=None)
    p.add_argument("--variant", choices=ALL_VARIANTS, default=VARIANT_FULL)
    p.add_argument("--per-image-count", type=int, default=86)
    p.add_argument("--output-size", type=int, default=224)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output JSONL path")
    p.add_argument("--no-images", action="store_true", help="skip writing augmented PNGs")
    p.add_argument("--allow-unreviewed", action="store_true",
                   help="build even if the bank has unreviewed templates")

    p = sub.add_parser("split", help="produce a k-fold assignment")
    p.add_argument("--root", type=Path, default=None)
    p.add_argument("--category-map", type=Path, default=None)
    p.add_argument("--mode", choices=["image-wise", "object-wise"], required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="write JSON here (default stdout)")

    p = sub.add_parser("eval", help="evaluate a live endpoint over a built dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--image-root", type=Path, default=None,
                   help="directory containing the dataset's images/ (default: dataset dir)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode-label", choices=["IW", "OW"], default="IW")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--min-iou", type=float, default=0.25)
    p.add_argument("--max-angle-deg", type=float, default=30.0)
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")

    p = sub.add_parser("mock-eval", help="evaluate a deterministic mock client (no network)")
    p.add_argument("--mode", choices=["oracle", "constant", "gibberish", "scripted"],
                   required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constant-pose", type=float, nargs=3, metavar=("X", "Y", "THETA"),
                   default=None)
    p.add_argument("--replies", type=Path, default=None,
                   help="JSON file {sample_id: reply} for the scripted mock")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("templates", help="template bank tools")
    tsub = p.add_subparsers(dest="templates_command", required=True)
    g = tsub.add_parser("generate", help="draft reasoning templates via a model endpoint")
    g.add_argument("--categories", required=True, help="comma-separated category names")
    g.add_argument("--existing", type=Path, default=None, help="bank to merge into")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--per-category", type=int, default=3)
    g.add_argument("--mock", action="store_true",
                   help="use a canned offline author instead of a live endpoint")
    l = tsub.add_parser("lint", help="check a bank for pose-like triples and coverage")
    l.add_argument("--bank", type=Path, default=None)
    l.add_argument("--category-map", type=Path, default=None)

    p = sub.add_parser("export-train-config", help="write training hyperparameter presets")
    p.add_argument("--strategy", choices=["pretraining", "lora"], required=True)
    p.add_argument("--out", type=Path, default=None, help="write JSON here (default stdout)")

    p = sub.add_parser("serve", help="run the prediction/refinement HTTP service")
    p.add_argument("--dataset", type=Path, default=None)
    p.add_argument("--image-root", type=Path, default=None)
    p.add_argument("--sessions-dir", type=Path, default=Path("sessions"))
    p.add_argument("--folds", type=Path, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--mock", action="store_true", help="serve the deterministic mock model")
    p.add_argument("--overlay-w", type=float, default=150.0)
    p.add_argument("--overlay-plate", type=float, default=60.0)

    p = sub.add_parser("refine", help="interactive refinement chat in the terminal")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--instruction", default=DEFAULT_INSTRUCTION)
    p.add_argument("--mock", action="store_true")

    return parser


def _load_cmap(path: Path | None) -> CategoryMap:
    return CategoryMap.load(path) if path else assets.default_category_map()


def _load_bank(path, cmap=None):
    return load_template_bank(path or assets.default_bank_path(), cmap)


def _load_samples(root: Path | None, cmap_path: Path | None):
    cmap = _load_cmap(cmap_path)
    samples = load_dataset(root or assets.fixture_root(), cmap)
    if not samples:
        raise IngestError(f"no usable samples under {root or assets.fixture_root()}")
    return samples


def cmd_build_dataset(args) -> int:
    cmap = _load_cmap(args.category_map)
    bank = _load_bank(args.bank, cmap)
    samples = _load_samples(args.root, args.category_map)
    cfg = AugmentationConfig(per_image_count=args.per_image_count,
                             output_size=args.output_size, seed=args.seed)
    report = build_dataset(samples, cfg, bank, args.variant, args.out,
                           fallback_category=cmap.fallback,
                           strict=not args.allow_unreviewed,
                           write_images=not args.no_images)
    print(f"wrote {report.records_written} records to {report.out_path} "
          f"({report.dropped_variants} variants dropped)")
    return EXIT_OK


def cmd_split(args) -> int:
    samples = _load_samples(args.root, args.category_map)
    fa = split_folds(samples, args.mode, args.k, args.seed)
    text = fa.to_json()
    if args.out:
        args.out.write_text(text, encoding="utf-8")
        print(f"wrote fold assignment for {len(fa.assignment)} images to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _run_folds(client, samples, args, mode_label: str, method: str) -> int:
    thresholds = MetricThresholds(min_iou=getattr(args, "min_iou", 0.25),
                                  max_angle_deg=getattr(args, "max_angle_deg", 30.0))
    folds = fold_samples_by_source(samples, k=args.k, seed=args.seed)
    reports = []
    for i, fold in enumerate(folds):
        report = evaluate_fold(client, fold, thresholds, parallelism=args.parallelism,
                               fold_index=i)
        print(f"fold {i}: accuracy {report.accuracy:.4f} "
              f"({report.successes}/{report.scored} scored, "
              f"{report.parse_errors} parse errors, {report.infra_errors} infra errors)")
        reports.append(report)
    summary = aggregate(reports, mode=mode_label, config_fingerprint={
        "thresholds": {"min_iou": thresholds.min_iou,
                       "max_angle_deg": thresholds.max_angle_deg},
        "seed": args.seed,
        "k": args.k,
        "method": method,
    })
    print(format_summary_table([summary], method=method))
    if args.out:
        save_reports(args.out, summary, reports)
        print(f"report written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = EndpointConfig.from_env()
    records = load_dataset_records(args.dataset)
    image_root = args.image_root or args.dataset.parent
    samples = samples_from_records(records, image_root=image_root)
    client = RemoteClient(ModelClient(cfg))
    return _run_folds(client, samples, args, args.mode_label, method=cfg.model_name)


def cmd_mock_eval(args) -> int:
    records = load_dataset_records(args.dataset)
    samples = samples_from_records(records)
    if args.mode == "constant":
        if args.constant_pose is None:
            raise ValueError("--constant-pose X Y THETA is required for the constant mock")
        client = mock_model("constant", pose=GraspPose(*args.constant_pose))
    elif args.mode == "scripted":
        if args.replies is None:
            raise ValueError("--replies FILE is required for the scripted mock")
        replies = json.loads(args.replies.read_text(encoding="utf-8"))
        client = mock_model("scripted", replies=replies)
    else:
        client = mock_model(args.mode, samples=samples)
    args.min_iou, args.max_angle_deg = 0.25, 30.0
    return _run_folds(client, samples, args, "IW", method=f"mock-{args.mode}")


def cmd_templates(args) -> int:
    if args.templates_command == "lint":
        cmap = _load_cmap(args.category_map)
        bank = _load_bank(args.bank, cmap)
        issues = lint_bank(bank)
        unreviewed = bank.unreviewed()
        for issue in issues:
            print(f"LINT: {issue}")
        for cat, text in unreviewed:
            print(f"UNREVIEWED [{cat}]: {text[:70]}")
        if issues:
            return EXIT_VALIDATION
        print(f"bank clean: {sum(len(v) for v in bank.reasoning.values())} templates, "
              f"{len(unreviewed)} awaiting review")
        return EXIT_OK

    categories = [c.strip() for c in args.categories.split(",") if c.strip()]
    if not categories:
        raise ValueError("no categories given")
    existing = load_template_bank(args.existing) if args.existing else None
    if args.mock:
        client = _CannedAuthor()
    else:
        client = ModelClient(EndpointConfig.from_env())
    bank, report = author_templates(client, categories, existing=existing,
                                    per_category=args.per_category)
    bank.save(args.out)
    for cat, status in report.status.items():
        print(f"{cat}: {status}")
    print(f"wrote draft bank to {args.out}; {len(report.checklist)} template(s) are "
          f"UNREVIEWED until a human flips their reviewed flag")
    failures = [s for s in report.status.values() if s != "ok"]
    return EXIT_INFRA if failures else EXIT_OK


class _CannedAuthor:
    """Offline template author used by --mock (and demos on the fixture)."""

    def complete(self, prompt: str) -> str:
        if prompt.startswith("Refine"):
            lines, seen = [], set()
            for line in prompt.splitlines()[3:]:
                line = line.strip()
                if line and line not in seen:
                    seen.add(line)
                    lines.append(line)
            return "\n".join(lines)
        category = prompt.split("grasping a ", 1)[-1].split(" with", 1)[0]
        return "\n".join([
            f"The object is a {category}; its body offers a section narrow enough "
            f"for a parallel gripper, so close on that section near the middle.",
            f"A {category} is most stable when gripped across its narrowest firm "
            f"part, keeping the load centered between the fingers.",
        ])


def cmd_export_train_config(args) -> int:
    if args.out:
        cfg = write_training_config(args.strategy, args.out)
        print(f"wrote {cfg.strategy} config to {args.out}")
    else:
        cfg = export_training_config(args.strategy)
        print(json.dumps(cfg.to_dict(), indent=2))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    if args.mock:
        gt = {}
        if args.dataset:
            gt = {r.id: r.pose for r in load_dataset_records(args.dataset)}
        model = MockServiceModel(gt_poses=gt)
    else:
        model = LiveServiceModel(ModelClient(EndpointConfig.from_env()))
    env_root = os.environ.get(ENV_IMAGE_ROOT)
    image_root = args.image_root or (Path(env_root) if env_root else None) or \
        (args.dataset.parent if args.dataset else None)
    if image_root is None:
        raise ValueError(f"pass --image-root, set {ENV_IMAGE_ROOT}, or pass --dataset "
                         f"so images can be resolved")
    state = build_state(
        image_root=image_root,
        sessions_dir=args.sessions_dir,
        model=model,
        dataset_path=args.dataset,
        folds_path=args.folds,
        overlay_w=args.overlay_w,
        overlay_plate=args.overlay_plate,
    )
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def cmd_refine(args) -> int:
    if not args.image.exists():
        raise ValueError(f"image not found: {args.image}")
    image_bytes = args.image.read_bytes()
    if args.mock:
        model = MockServiceModel()
        predict = lambda: model.initial_predict(image_bytes, args.instruction, None)
        continue_chat = model.continue_chat
    else:
        live = ModelClient(EndpointConfig.from_env())
        service_model = LiveServiceModel(live)
        predict = lambda: service_model.initial_predict(image_bytes, args.instruction, None)
        continue_chat = service_model.continue_chat

    from .client import new_session, record_reply

    session = new_session("terminal", args.image, args.instruction)
    raw = predict()
    parsed, session = record_reply(session, raw)
    _print_turn(raw, parsed.pose)
    while True:
        try:
            message = input("you> ").strip()
        except EOFError:
            break
        if not message or message in {"q", "quit", "exit"}:
            break
        raw = continue_chat(session, message)
        from .client import Turn

        session = session.extended(Turn("user", message))
        parsed, session = record_reply(session, raw)
        _print_turn(raw, parsed.pose)
    return EXIT_OK


def _print_turn(raw: str, pose) -> None:
    print(f"assistant: {raw}")
    if pose is not None:
        print(f"  -> pose x={pose.x:.3f} y={pose.y:.3f} theta={pose.theta:.3f}")
    else:
        print("  -> no pose parsed")


_COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "split": cmd_split,
    "eval": cmd_eval,
    "mock-eval": cmd_mock_eval,
    "templates": cmd_templates,
    "export-train-config": cmd_export_train_config,
    "serve": cmd_serve,
    "refine": cmd_refine,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, BankValidationError, IngestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TransportError, ApiError) as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())

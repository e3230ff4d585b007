"""Operator command line: one subcommand per pipeline stage plus the review service.

Exit codes: 0 success, 1 stage failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .annotations import ScenarioRecord
from .detection import DetectionSetting, SettingKind, run_detection_setting, scored_records
from .gateway import (
    EndpointRole,
    GatewayBudgets,
    ProviderGateway,
    RetryPolicy,
    backends_from_config,
    endpoint_from_config,
)
from .metrics import build_eval_report, render_report_table
from .pipeline import (
    PipelineContext,
    StageError,
    run_alignment_judging,
    run_gt_extraction,
    run_image_generation,
    run_sg_generation,
)
from .review import make_server
from .store import DatasetStore
from .templates_engine import verify_templates


def _default_config() -> dict:
    data = resources.files("labhazard").joinpath("data/mock_endpoints.json").read_text("utf-8")
    return json.loads(data)


def load_config(path: str | None) -> dict:
    if path is None:
        return _default_config()
    return json.loads(Path(path).read_text(encoding="utf-8"))


def build_context(args) -> PipelineContext:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed")
    backends = backends_from_config(config, seed=seed)
    budgets = GatewayBudgets(**config.get("budgets", {}))
    retry = RetryPolicy(**config.get("retry", {}))
    store = DatasetStore(args.store)
    clock = (lambda: 0.0) if args.deterministic else None
    gateway_kwargs = {}
    if clock is not None:
        gateway_kwargs = {"clock": clock, "sleep": lambda _: None}
    gateway = ProviderGateway(
        backends,
        budgets=budgets,
        retry=retry,
        image_loader=store.get_bytes,
        **gateway_kwargs,
    )
    endpoints = {
        EndpointRole(role): endpoint_from_config(role, entry)
        for role, entry in config.get("endpoints", {}).items()
    }
    ctx_kwargs = {"workers": args.workers}
    if clock is not None:
        ctx_kwargs["clock"] = clock
    return PipelineContext(store=store, gateway=gateway, endpoints=endpoints, **ctx_kwargs)


def _install_corpus(store: DatasetStore, corpus: str | None) -> None:
    if corpus is None:
        return
    lines = Path(corpus).read_text(encoding="utf-8").splitlines()
    records = [ScenarioRecord.from_json_line(line) for line in lines if line.strip()]
    store.write_scenarios(records)


def _print_manifest_summary(name: str, manifest) -> None:
    counts = manifest.counts()
    print(f"{name}: {counts['done']} done, {counts['failed']} failed, {counts['pending']} pending")


def _print_dry_run(prompts: dict) -> None:
    for item in sorted(prompts):
        print(f"--- {item} ---")
        print(prompts[item])


def _cmd_stage(args, runner, name, **kwargs) -> int:
    ctx = build_context(args)
    _install_corpus(ctx.store, getattr(args, "corpus", None))
    result = runner(ctx, dry_run=args.dry_run, **kwargs)
    if args.dry_run:
        _print_dry_run(result)
        return 0
    _print_manifest_summary(name, result)
    return 0


def cmd_extract_gt(args) -> int:
    return _cmd_stage(args, run_gt_extraction, "extract-gt")


def cmd_gen_sg(args) -> int:
    return _cmd_stage(args, run_sg_generation, "gen-sg")


def cmd_gen_images(args) -> int:
    return _cmd_stage(args, run_image_generation, "gen-images", replicates=args.replicates)


def cmd_judge(args) -> int:
    return _cmd_stage(args, run_alignment_judging, "judge")


def cmd_filter(args) -> int:
    store = DatasetStore(args.store)
    summary = store.filter_summary()
    final = store.select_final_dataset()
    summary["triples"] = [t.key for t in final]
    store.put_report("filter", summary)
    print(
        f"retained {summary['retained']} of {summary['generated']} generated triples "
        f"({summary['unique_scenarios_retained']} unique scenarios)"
    )
    return 0


def cmd_evaluate(args) -> int:
    ctx = build_context(args)
    kind = SettingKind(args.setting)
    taxonomy: tuple[str, ...] = ()
    if args.taxonomy:
        value = json.loads(Path(args.taxonomy).read_text(encoding="utf-8"))
        taxonomy = tuple(value["hazards"] if isinstance(value, dict) else value)
    elif kind is SettingKind.SG_GUIDED_THA:
        data = resources.files("labhazard").joinpath("data/default_hazard_taxonomy.json")
        taxonomy = tuple(json.loads(data.read_text("utf-8"))["hazards"])
    setting = DetectionSetting(
        kind=kind, endpoint=ctx.endpoint(EndpointRole.DETECTOR), hazard_taxonomy=taxonomy
    )
    result = run_detection_setting(ctx, setting, run_id=args.run, dry_run=args.dry_run)
    if args.dry_run:
        _print_dry_run(result)
        return 0
    _print_manifest_summary(f"evaluate/{kind.value}", result)
    return 0


def cmd_metrics(args) -> int:
    store = DatasetStore(args.store)
    settings = store.settings_for_run(args.run)
    if not settings:
        print(f"no predictions stored for run {args.run!r}", file=sys.stderr)
        return 1
    scenarios = {s.id: s for s in store.load_scenarios()}
    reports = []
    for setting_value in settings:
        records = scored_records(store, args.run, setting_value, scenarios)
        reports.append(build_eval_report(args.run, setting_value, records))
    store.put_report(args.run, {"run_id": args.run, "settings": {r.setting: r.to_value() for r in reports}})
    if args.subject:
        for report in reports:
            block = report.by_subject.get(args.subject)
            if block is None:
                print(f"unknown subject {args.subject!r}", file=sys.stderr)
                return 1
            print(f"{report.setting} {args.subject}: {json.dumps(block.to_value())}")
    else:
        print(render_report_table(reports))
    return 0


def cmd_stats(args) -> int:
    store = DatasetStore(args.store)
    stats = store.dataset_statistics()
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def cmd_serve_review(args) -> int:
    store = DatasetStore(args.store)
    server = make_server(store, port=args.port, ui_dir=args.ui)
    host, port = server.server_address[:2]
    print(f"review service listening on http://{host}:{port}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_verify_templates(args) -> int:
    problems = verify_templates()
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return 1
    print("all templates match the pinned manifest")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labhazard",
        description="Scene-graph-grounded laboratory hazard dataset builder and evaluator",
    )
    parser.add_argument("--store", default="store", help="dataset store root directory")
    parser.add_argument("--config", default=None, help="endpoint config JSON (default: mock)")
    parser.add_argument("--seed", type=int, default=None, help="mock backend seed override")
    parser.add_argument("--workers", type=int, default=4, help="concurrent items per stage")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="pin clocks for byte-reproducible runs (mock gateway)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--dry-run", action="store_true", help="render prompts, call nothing")
        p.set_defaults(fn=fn)
        return p

    p = stage("extract-gt", cmd_extract_gt, "extract ground-truth hazard annotations")
    p.add_argument("--corpus", default=None, help="scenario corpus JSONL to install first")
    p = stage("gen-sg", cmd_gen_sg, "generate scene graphs from scenario descriptions")
    p.add_argument("--corpus", default=None, help="scenario corpus JSONL to install first")
    p = stage("gen-images", cmd_gen_images, "render graph-conditioned images")
    p.add_argument("--replicates", type=int, default=5, help="images per scenario")
    stage("judge", cmd_judge, "run alignment judging over complete triples")

    p = sub.add_parser("filter", help="select the final dataset of ALIGNED triples")
    p.set_defaults(fn=cmd_filter)

    p = stage("evaluate", cmd_evaluate, "run one hazard-detection setting")
    p.add_argument("--setting", required=True, choices=[k.value for k in SettingKind])
    p.add_argument("--run", required=True, help="evaluation run id")
    p.add_argument("--taxonomy", default=None, help="hazard taxonomy JSON for sg_guided_tha")

    p = sub.add_parser("metrics", help="compute metric reports for an evaluation run")
    p.add_argument("--run", required=True)
    p.add_argument("--subject", default=None, help="print a single subject block")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("stats", help="final dataset statistics per subject")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("serve-review", help="serve the human review API (and optional UI)")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", default=None, help="frontend directory with public/ and dist/")
    p.set_defaults(fn=cmd_serve_review)

    p = sub.add_parser("verify-templates", help="check shipped templates against the manifest")
    p.set_defaults(fn=cmd_verify_templates)
    return parser


def cli_dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())

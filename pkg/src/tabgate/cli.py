"""Command line entry points: evaluation runs, the gateway server, DB checks."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datasets import SPLIT_NAMES, load_fixture_split, load_split
from .errors import TabgateError
from .evalharness import EvalReport, crossover_report, run_eval, write_crossover_csv
from .execution import SandboxExecutor, StubExecutor, load_stub_table
from .gateway import ServiceConfig, create_app, load_service_config
from .llm import HttpLlmClient, config_from_env, load_mock_script
from .pipeline import MethodConfig
from .promptdb import load_db, validate_db


def _build_llm(spec: str):
    if spec == "http":
        return HttpLlmClient(config_from_env())
    if spec.startswith("mock:"):
        return load_mock_script(spec.split(":", 1)[1])
    raise SystemExit(f"unknown --llm backend {spec!r}; use http or mock:<script.json>")


def _build_executor(spec: str, pool_size: int):
    if spec == "sandbox":
        return SandboxExecutor(pool_size=pool_size)
    if spec == "stub":
        return StubExecutor()
    if spec.startswith("stub:"):
        return load_stub_table(spec.split(":", 1)[1])
    raise SystemExit(f"unknown --executor backend {spec!r}; use sandbox, stub or stub:<table.json>")


def _load_dataset(spec: str, data_root: str | None, allow_count_mismatch: bool):
    if spec.startswith("fixture:"):
        return load_fixture_split(spec.split(":", 1)[1])
    if spec in SPLIT_NAMES:
        if not data_root:
            raise SystemExit("--data-root is required for released splits")
        return load_split(spec, data_root, allow_count_mismatch=allow_count_mismatch)
    raise SystemExit(f"unknown dataset {spec!r}")


def _method_config(label: str, args) -> MethodConfig:
    ablated = set(filter(None, (args.ablate or "").split(",")))
    unknown = ablated - {"plan", "correction", "default"}
    if unknown:
        raise SystemExit(f"unknown --ablate flags: {', '.join(sorted(unknown))}")
    return MethodConfig.parse(
        label,
        use_plan="plan" not in ablated,
        use_correction="correction" not in ablated,
        use_default="default" not in ablated,
        execution_timeout=args.exec_timeout,
    )


def _report_path(base: str, label: str, multiple: bool) -> Path:
    path = Path(base)
    if not multiple:
        return path
    return path.with_name(f"{path.stem}.{label.replace(':', '_')}{path.suffix or '.json'}")


def cmd_eval(args) -> int:
    split = _load_dataset(args.dataset, args.data_root, args.allow_count_mismatch)
    db = load_db(args.db_root)
    llm = _build_llm(args.llm)
    executor = _build_executor(args.executor, args.pool_size)

    methods = [_method_config(label, args) for label in args.method]
    if args.crossover and len(methods) < 2:
        raise SystemExit("--crossover needs two --method values evaluated on the same items")

    reports: list[EvalReport] = []
    try:
        for method in methods:
            checkpoint = None
            if args.checkpoint:
                checkpoint = _report_path(args.checkpoint, method.label, len(methods) > 1)
            report = run_eval(
                split, method, db, llm, executor,
                limit=args.limit, seed=args.seed,
                checkpoint=checkpoint, workers=args.workers,
            )
            reports.append(report)
            accuracy = report.accuracy()
            print(f"{method.label}: EM {accuracy['matches']}/{accuracy['items']}"
                  f" = {accuracy['overall']:.4f} on {split.name}")
            if args.out:
                out_path = _report_path(args.out, method.label, len(methods) > 1)
                report.save(out_path)
                print(f"  report written to {out_path}")
    finally:
        executor.shutdown()

    if args.crossover:
        table = crossover_report(
            list(reports[0].items), list(reports[1].items),
            label_a=methods[0].label, label_b=methods[1].label,
        )
        write_crossover_csv(table, args.crossover)
        print(f"crossover table written to {args.crossover}"
              + (f" ({'; '.join(table.warnings)})" if table.warnings else ""))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    config = load_service_config(args.config) if args.config else ServiceConfig()
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def cmd_validate_db(args) -> int:
    db = load_db(args.db_root, strict=False)
    report = validate_db(db)
    print(report.summary())
    print(f"digest: {db.digest}")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tabgate",
                                     description="Table-QA gateway: evaluation and serving")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="run a method over a dataset split")
    p_eval.add_argument("--dataset", required=True,
                        help="wikitableqa_test | tabfact_full | tabfact_small | fixture:<path>")
    p_eval.add_argument("--method", action="append", required=True,
                        help="direct | cot | pot | pot:stdlib | pot:stdlib_para | pot:pandas | tabpot"
                             " (repeatable)")
    p_eval.add_argument("--ablate", default="",
                        help="comma list of staged-method parts to disable: plan,correction,default")
    p_eval.add_argument("--llm", default="http", help="http | mock:<script.json>")
    p_eval.add_argument("--executor", default="stub", help="sandbox | stub | stub:<table.json>")
    p_eval.add_argument("--data-root", default=None)
    p_eval.add_argument("--db-root", default=None)
    p_eval.add_argument("--limit", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None, help="report JSON path")
    p_eval.add_argument("--crossover", default=None, help="crossover CSV path (two methods)")
    p_eval.add_argument("--checkpoint", default=None, help="JSONL checkpoint for resumable runs")
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument("--pool-size", type=int, default=2)
    p_eval.add_argument("--exec-timeout", type=float, default=30.0)
    p_eval.add_argument("--allow-count-mismatch", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="run the gateway service")
    p_serve.add_argument("--config", default=None, help="service config JSON")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_validate = sub.add_parser("validate-db", help="check prompts database coverage")
    p_validate.add_argument("--db-root", default=None)
    p_validate.set_defaults(func=cmd_validate_db)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TabgateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

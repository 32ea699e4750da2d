"""Command-line entry points: run, eval, serve, replay-record."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .assistants import AssistantPipeline, LiveBackend, MockBackend, \
    RecordingClient, ReplayBackend
from .benchmarks import (
    builtin_corpus,
    corridor_variants,
    eval_rows_to_csv,
    eval_rows_to_text,
    evaluate_corpus,
    load_corpus,
    reference_spec,
)
from .mpc import MpcConfig
from .simulate import EpisodeConfig, batch_to_csv, batch_to_text, run_batch
from .world import ScenarioError, load_scenario


def _backend_factory(args):
    kind = args.llm
    if kind == "mock":
        return lambda: MockBackend()
    if kind == "replay":
        if not args.replay_dir:
            raise SystemExit2("--replay-dir is required with --llm replay")
        return lambda: ReplayBackend(args.replay_dir)
    if kind == "live":
        if not os.environ.get("LLM_API_KEY"):
            raise SystemExit2("--llm live requires LLM_API_KEY in the "
                              "environment")
        return lambda: LiveBackend(model=args.model or None)
    raise SystemExit2(f"unknown backend {kind!r}")


class SystemExit2(SystemExit):
    def __init__(self, message: str) -> None:
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def _episode_config(args) -> EpisodeConfig:
    mpc_kwargs = {}
    if args.horizon is not None:
        mpc_kwargs["horizon"] = args.horizon
    if args.dt is not None:
        mpc_kwargs["dt"] = args.dt
    if args.max_iters is not None:
        mpc_kwargs["max_iterations"] = args.max_iters
    if args.seed_count is not None:
        mpc_kwargs["seed_count"] = args.seed_count
    if args.vmax is not None:
        mpc_kwargs["v_max"] = args.vmax
    episode_kwargs = {}
    if args.timeout is not None:
        episode_kwargs["timeout"] = args.timeout
    return EpisodeConfig(mpc=MpcConfig(**mpc_kwargs), **episode_kwargs)


def _script_entry(e: dict) -> tuple[float, str]:
    t = e.get("t", e.get("t_seconds"))
    text = e.get("query", e.get("query_text"))
    if t is None or text is None:
        raise SystemExit2(f"script entry needs t/t_seconds and "
                          f"query/query_text: {e}")
    return float(t), str(text)


def _load_variants(spec: str):
    if spec == "benchmark":
        return corridor_variants()
    path = Path(spec)
    if not path.exists():
        raise SystemExit2(f"variants file not found: {spec}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc and isinstance(doc[0], dict) and "label" not in doc[0]:
        # bare query script: a list of {t_seconds, query_text} entries
        return [("scripted", [_script_entry(e) for e in doc])]
    return [
        (item["label"], [_script_entry(e) for e in item.get("script", [])])
        for item in doc
    ]


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        raise SystemExit2(str(exc))
    factory = _backend_factory(args)
    variants = _load_variants(args.variants)
    config = _episode_config(args)
    try:
        rows = run_batch(
            scenario, variants, episodes=args.episodes, base_seed=args.seed,
            pipeline_factory=lambda: AssistantPipeline(
                factory(), v_max=config.mpc.v_max),
            config=config)
    except Exception as exc:
        print(f"error: batch failed: {exc}", file=sys.stderr)
        return 1
    print(batch_to_text(rows))
    if args.out:
        Path(args.out).write_text(batch_to_csv(rows), encoding="utf-8")
        print(f"\nwrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    factory = _backend_factory(args)
    if args.corpus == "builtin":
        entries = builtin_corpus()
    else:
        path = Path(args.corpus)
        if not path.exists():
            raise SystemExit2(f"corpus file not found: {args.corpus}")
        try:
            entries = load_corpus(path)
        except (json.JSONDecodeError, KeyError) as exc:
            raise SystemExit2(f"corpus parse error: {exc}")
    rows = evaluate_corpus(entries, factory, repetitions=args.repetitions)
    print(eval_rows_to_text(rows))
    if args.out:
        Path(args.out).write_text(eval_rows_to_csv(rows), encoding="utf-8")
        print(f"\nwrote {args.out}")
    return 0 if all(r.success_rate > 0 for r in rows) else 1


def cmd_serve(args) -> int:
    from .service import ServiceConfig, SessionService

    config = ServiceConfig(
        scenario=args.scenario,
        backend=args.llm,
        replay_dir=args.replay_dir or "",
        llm_model=args.model or "",
        mock_latency=args.mock_latency,
        episode=_episode_config(args),
        host=args.host,
        port=args.port,
        base_seed=args.seed,
    )
    if config.backend == "live" and not os.environ.get("LLM_API_KEY"):
        raise SystemExit2("--llm live requires LLM_API_KEY in the environment")
    try:
        service = SessionService(config)
    except ScenarioError as exc:
        raise SystemExit2(str(exc))
    service.start()
    print(f"session service listening on ws://{config.host}:{service.port}")
    try:
        service.run_forever()
    finally:
        service.stop()
    return 0


def cmd_replay_record(args) -> int:
    if args.source == "live" and not os.environ.get("LLM_API_KEY"):
        raise SystemExit2("recording from live requires LLM_API_KEY")
    inner = (LiveBackend(model=args.model or None) if args.source == "live"
             else MockBackend())
    out_dir = Path(args.dir)
    entries = builtin_corpus() if args.corpus == "builtin" \
        else load_corpus(args.corpus)
    recorded = 0
    for entry in entries:
        client = RecordingClient(inner, out_dir)
        pipeline = AssistantPipeline(client)
        spec = reference_spec(entry.spec)
        try:
            if entry.kind == "capability":
                pipeline.route(entry.prompt, spec)
            elif entry.kind == "generation":
                pipeline.generate_cost(entry.prompt, spec)
            elif entry.kind == "weights":
                from .assistants.pipeline import initial_ratings

                pipeline.retrieve_weights(entry.prompt, spec,
                                          initial_ratings(spec))
            recorded += 1
        except Exception as exc:
            print(f"warning: {entry.code} not recorded: {exc}",
                  file=sys.stderr)
    print(f"recorded {recorded}/{len(entries)} exchanges into {out_dir}")
    return 0 if recorded == len(entries) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langnav",
        description="MPC navigation with natural-language cost retuning")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_llm(p):
        p.add_argument("--llm", choices=("mock", "replay", "live"),
                       default="mock")
        p.add_argument("--replay-dir", default="")
        p.add_argument("--model", default="")

    def add_mpc(p):
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--seed-count", type=int, default=None)
        p.add_argument("--vmax", type=float, default=None)
        p.add_argument("--timeout", type=float, default=None)

    run = sub.add_parser("run", help="run a seeded benchmark batch")
    run.add_argument("--scenario", default="corridor",
                     help="bundled name or scenario JSON path")
    run.add_argument("--variants", default="benchmark",
                     help="'benchmark' or a variants JSON file")
    run.add_argument("--episodes", type=int, default=10)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--out", default="")
    add_llm(run)
    add_mpc(run)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="assistant corpus success rates")
    ev.add_argument("--corpus", default="builtin")
    ev.add_argument("--repetitions", type=int, default=10)
    ev.add_argument("--out", default="")
    add_llm(ev)
    ev.set_defaults(func=cmd_eval)

    serve_p = sub.add_parser("serve", help="live session service")
    serve_p.add_argument("--scenario", default="corridor")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8765)
    serve_p.add_argument("--seed", type=int, default=1)
    serve_p.add_argument("--mock-latency", type=float, default=1.5)
    add_llm(serve_p)
    add_mpc(serve_p)
    serve_p.set_defaults(func=cmd_serve)

    rec = sub.add_parser("replay-record",
                         help="record assistant responses as replay fixtures")
    rec.add_argument("--source", choices=("mock", "live"), default="mock")
    rec.add_argument("--corpus", default="builtin")
    rec.add_argument("--dir", required=True)
    rec.add_argument("--model", default="")
    rec.set_defaults(func=cmd_replay_record)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        return int(exc.code)


if __name__ == "__main__":
    sys.exit(main())

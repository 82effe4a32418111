"""Command-line client for the decoding service.

The CLI owns file I/O (datasets, reports, tree exports) and speaks JSON to
the HTTP API for all computation. By default requests are served by an
in-process instance of the app; pass ``--server URL`` to target a running
service instead. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

from .errors import StepSearchError
from .harness.dataset import load_dataset

ENDPOINT_ENV = "STEPSEARCH_ENDPOINT"
SERVER_ENV = "STEPSEARCH_SERVER"

# Config-file keys mirror CLI flag names (without the leading dashes).
_CONFIG_KEY_TYPES = {
    "mode": str,
    "branching-factor": int,
    "buffer-size": int,
    "tau": float,
    "alpha": float,
    "lambda": float,
    "max-depth": int,
    "scorer": str,
    "ngram-n": int,
    "seed": int,
    "model": str,
    "endpoint": str,
    "server": str,
    "trap-fraction": float,
    "end2end-k": int,
    "max-step-tokens": int,
    "max-end2end-tokens": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit code 1, not argparse's 2
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


class ServiceClient:
    """Minimal JSON-over-HTTP client; in-process unless a server URL is given."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            # starlette's test client warns about the httpx backend; it is the
            # supported sync transport for serving the app in-process here.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

                from .service.app import app

                self._client = TestClient(app, raise_server_exceptions=False)

    def get(self, path: str) -> dict:
        return self._handle(self._client.get(path))

    def post(self, path: str, payload: dict) -> dict:
        return self._handle(self._client.post(path, json=payload))

    @staticmethod
    def _handle(response) -> dict:
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise StepSearchError(f"service returned {response.status_code}: {detail}")
        return response.json()


def _add_common_flags(parser: argparse.ArgumentParser, grid: bool = False) -> None:
    parser.add_argument("--server", default=None, help="URL of a running service (default: in-process)")
    parser.add_argument("--mode", choices=["tree", "end2end"], default="tree")
    if grid:
        parser.add_argument("--branching-factor", "--branching-factors",
                            dest="branching_factors", type=_int_list, default=[2, 4, 8],
                            metavar="B1,B2,...")
        parser.add_argument("--buffer-size", "--buffer-sizes",
                            dest="buffer_sizes", type=_int_list, default=[8],
                            metavar="C1,C2,...")
    else:
        parser.add_argument("--branching-factor", type=int, default=4)
        parser.add_argument("--buffer-size", type=int, default=8)
    parser.add_argument("--tau", type=float, default=1.0, help="step sampling temperature")
    parser.add_argument("--alpha", type=float, default=0.5, help="temperature annealing factor")
    parser.add_argument("--lambda", dest="length_penalty", type=float, default=1.0,
                        help="length penalty exponent for step scores")
    parser.add_argument("--max-depth", type=int, default=16)
    parser.add_argument("--max-step-tokens", type=int, default=128)
    parser.add_argument("--max-end2end-tokens", type=int, default=512)
    parser.add_argument("--scorer", choices=["ngram", "selfcons", "cosine", "verifier"],
                        default="ngram")
    parser.add_argument("--ngram-n", type=int, default=3)
    parser.add_argument("--verifier-endpoint", default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--end2end-k", type=int, default=16)
    parser.add_argument("--model", choices=["toy", "remote"], default="toy")
    parser.add_argument("--endpoint", default=None,
                        help=f"completion server URL (default: ${ENDPOINT_ENV})")
    parser.add_argument("--toy-spec", default=None, help="toy grammar JSON (from toygen)")
    parser.add_argument("--config", default=None, help="flat key=value config file")


def _config_payload(args: argparse.Namespace) -> dict:
    return {
        "branching_factor": getattr(args, "branching_factor", 4),
        "buffer_size": getattr(args, "buffer_size", 8),
        "step_temperature": args.tau,
        "annealing_factor": args.alpha,
        "length_penalty": args.length_penalty,
        "max_depth": args.max_depth,
        "max_step_tokens": args.max_step_tokens,
        "max_end2end_tokens": args.max_end2end_tokens,
        "rng_seed": args.seed,
    }


def _model_payload(args: argparse.Namespace) -> dict:
    model: dict = {"kind": args.model, "toy_seed": args.seed}
    if args.model == "remote":
        endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise UsageError(f"--model remote needs --endpoint or ${ENDPOINT_ENV}")
        model["endpoint"] = endpoint
    elif args.toy_spec:
        model["toy_spec"] = json.loads(Path(args.toy_spec).read_text(encoding="utf-8"))
    return model


def _scorer_payload(args: argparse.Namespace) -> dict:
    scorer: dict = {"name": args.scorer, "ngram_n": args.ngram_n}
    if args.scorer == "verifier":
        if not args.verifier_endpoint:
            raise UsageError("--scorer verifier needs --verifier-endpoint")
        scorer["verifier_endpoint"] = args.verifier_endpoint
    return scorer


def _dump_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _int_list(value: str) -> list[int]:
    try:
        return [int(part) for part in value.split(",") if part]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {value!r}") from exc


def _cmd_decode(args: argparse.Namespace) -> int:
    if args.emit_tree and args.mode == "end2end":
        raise UsageError("--emit-tree only applies to --mode tree")
    client = ServiceClient(args.server)
    payload = {
        "mode": args.mode,
        "end2end_k": args.end2end_k,
        "model": _model_payload(args),
        "config": _config_payload(args),
        "scorer": _scorer_payload(args),
        "include_tree": bool(args.emit_tree),
    }
    if args.prompt is not None:
        payload["prompt"] = args.prompt
    if args.model == "toy" and args.prompt is not None and not args.toy_spec:
        raise UsageError("--prompt with --model toy needs --toy-spec to resolve the grammar")
    response = client.post("/decode", payload)

    if response["chain"] is None:
        print("no candidates generated")
        return 0
    for i, step in enumerate(response["chain"]["steps"], start=1):
        print(f"step {i} [score={step['score']:+.4f}] {step['text']}")
    print(f"answer: {response['answer']}")
    print(f"pool size: {len(response['pool'])}  tokens: {response['total_tokens']}"
          f"  scorer: {response['scorer_name']}")

    if args.emit_tree:
        if response.get("tree") is None:
            raise StepSearchError("no tree to export (end2end mode has none)")
        if args.tree_format == "json":
            _dump_json(response["tree"], Path(args.emit_tree))
        else:
            rendered = client.post("/tree/render", {"tree": response["tree"], "format": "dot"})
            Path(args.emit_tree).write_text(rendered["document"], encoding="utf-8")
        print(f"tree written to {args.emit_tree}")
    return 0


def _request_instances(args: argparse.Namespace) -> list[dict]:
    instances = load_dataset(args.dataset, default_template=args.template)
    return [
        {
            "id": inst.id,
            "question": inst.question,
            "prompt": inst.prompt,
            "gold_answer": inst.gold_answer,
            "task_kind": inst.task_kind.value,
        }
        for inst in instances
    ]


def _summarize(report: dict) -> str:
    return (
        f"accuracy={report['accuracy']:.4f}"
        f" upper_bound={report['upper_bound_accuracy']:.4f}"
        f" instances={len(report['instances'])}"
        f" tokens={report['total_tokens']}"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    client = ServiceClient(args.server)
    payload = {
        "instances": _request_instances(args),
        "mode": args.mode,
        "end2end_k": args.end2end_k,
        "model": _model_payload(args),
        "config": _config_payload(args),
        "scorer": _scorer_payload(args),
        "include_timing": bool(args.timing_report),
    }
    response = client.post("/run", payload)
    _dump_json(response["report"], Path(args.report))
    print(f"report written to {args.report}")
    print(_summarize(response["report"]))
    if args.timing_report:
        _dump_json(response["timing"], Path(args.timing_report))
        print(f"timing written to {args.timing_report}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    client = ServiceClient(args.server)
    payload = {
        "instances": _request_instances(args),
        "mode": args.mode,
        "end2end_k": args.end2end_k,
        "model": _model_payload(args),
        "config": _config_payload(args),
        "scorer": _scorer_payload(args),
        "branching_factors": args.branching_factors,
        "buffer_sizes": args.buffer_sizes,
    }
    response = client.post("/sweep", payload)
    out_dir = Path(args.out_dir)
    for report in response["reports"]:
        bf = report["config"]["branching_factor"]
        bs = report["config"]["buffer_size"]
        path = out_dir / f"report_branching{bf}_buffer{bs}.json"
        _dump_json(report, path)
        print(f"{path}: {_summarize(report)}")
    return 0


def _cmd_toygen(args: argparse.Namespace) -> int:
    client = ServiceClient(args.server)
    response = client.post(
        "/toygen",
        {"seed": args.seed, "count": args.count, "trap_fraction": args.trap_fraction},
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(inst, sort_keys=True) for inst in response["instances"]]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _dump_json(response["toy_spec"], Path(args.spec_out))
    print(f"wrote {len(lines)} instances to {out} and grammar to {args.spec_out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser(config_defaults: dict | None = None) -> _Parser:
    parser = _Parser(prog="stepsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: list[argparse.ArgumentParser] = []

    def add_command(name: str, help: str) -> argparse.ArgumentParser:
        command = sub.add_parser(name, help=help)
        subparsers.append(command)
        return command

    decode = add_command("decode", help="decode a single prompt")
    _add_common_flags(decode)
    decode.add_argument("--prompt", default=None)
    decode.add_argument("--emit-tree", default=None, metavar="PATH")
    decode.add_argument("--tree-format", choices=["json", "dot"], default="json")
    decode.set_defaults(func=_cmd_decode)

    run = add_command("run", help="run a dataset experiment")
    _add_common_flags(run)
    run.add_argument("--dataset", required=True)
    run.add_argument("--template", default=None, choices=["gsm8k", "strategyqa", "csqa"])
    run.add_argument("--report", default="run_report.json")
    run.add_argument("--timing-report", default=None)
    run.set_defaults(func=_cmd_run)

    swp = add_command("sweep", help="grid over branching factor x buffer size")
    _add_common_flags(swp, grid=True)
    swp.add_argument("--dataset", required=True)
    swp.add_argument("--template", default=None, choices=["gsm8k", "strategyqa", "csqa"])
    swp.add_argument("--out-dir", default="sweep_reports")
    swp.set_defaults(func=_cmd_sweep)

    toygen = add_command("toygen", help="emit a seeded toy dataset + grammar")
    toygen.add_argument("--server", default=None)
    toygen.add_argument("--seed", type=int, default=0)
    toygen.add_argument("--count", type=int, default=100)
    toygen.add_argument("--trap-fraction", type=float, default=0.6)
    toygen.add_argument("--out", default="toy_dataset.jsonl")
    toygen.add_argument("--spec-out", default="toy_spec.json")
    toygen.add_argument("--config", default=None)
    toygen.set_defaults(func=_cmd_toygen)

    serve = add_command("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=_cmd_serve)

    if config_defaults:
        # subparser defaults would otherwise clobber parent-level defaults
        for command in subparsers:
            command.set_defaults(**config_defaults)
    return parser


def _load_config_file(path: str) -> dict:
    """Flat ``key = value`` file; keys mirror flag names, flags take precedence."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEY_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key.replace("-", "_")] = _CONFIG_KEY_TYPES[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}")
    # argparse dest for --lambda is length_penalty
    if "lambda" in values:
        values["length_penalty"] = values.pop("lambda")
    return values


def cli_main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # Pre-scan for --config so file values become defaults the real flags override.
        config_defaults = None
        if "--config" in argv and argv.index("--config") + 1 < len(argv):
            config_defaults = _load_config_file(argv[argv.index("--config") + 1])
        parser = build_parser(config_defaults)
        args = parser.parse_args(argv)
        if hasattr(args, "server") and args.server is None:
            args.server = os.environ.get(SERVER_ENV) or None
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (StepSearchError, OSError, json.JSONDecodeError, httpx.HTTPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

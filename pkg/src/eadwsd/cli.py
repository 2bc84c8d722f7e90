"""Command-line client for the disambiguation service.

Every command goes through the same HTTP surface the service exposes. By
default the app runs in process against ``--config``; ``--server`` points
the same commands at a remote instance instead.

Exit codes: 0 success, 1 an expectation was missed, 2 usage or config
rejection (HTTP 400/422), 3 upstream failure (HTTP 5xx or transport).
"""

from __future__ import annotations

import json
import sys
import warnings
from typing import Any

import click
import httpx
import yaml

from . import errors
from .config import DEFAULT_CONFIG_FILENAME

EXIT_EXPECTATION = 1
EXIT_USAGE = 2
EXIT_UPSTREAM = 3


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _detail(resp) -> str:
    try:
        detail = resp.json().get("detail")
    except (ValueError, AttributeError):
        detail = None
    if detail is None:
        return f"HTTP {resp.status_code}: {resp.text[:200]}"
    if isinstance(detail, str):
        return detail
    # pydantic validation errors arrive as a list of dicts
    return "; ".join(
        f"{'.'.join(str(p) for p in item.get('loc', []))}: {item.get('msg', '')}"
        for item in detail
    )


class ApiClient:
    """In-process by default, remote when a server URL is given."""

    def __init__(self, config_path: str, server: str | None) -> None:
        if server is None:
            with warnings.catch_warnings():
                # starlette warns about its httpx version at import time
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

            from .service import create_app

            try:
                self._http = TestClient(create_app(config_path))
            except errors.EadwsdError as exc:
                _fail(str(exc), EXIT_USAGE)
        else:
            self._http = httpx.Client(base_url=server, timeout=600.0)

    def request(self, method: str, path: str, payload: dict | None = None) -> Any:
        try:
            resp = self._http.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            _fail(f"cannot reach service: {exc}", EXIT_UPSTREAM)
        if resp.status_code in (400, 422):
            _fail(_detail(resp), EXIT_USAGE)
        if resp.status_code >= 500:
            _fail(_detail(resp), EXIT_UPSTREAM)
        if resp.status_code >= 300:
            _fail(_detail(resp), EXIT_UPSTREAM)
        return resp.json()

    def get(self, path: str) -> Any:
        return self.request("GET", path)

    def post(self, path: str, payload: dict) -> Any:
        return self.request("POST", path, payload)


def _client(ctx: click.Context) -> ApiClient:
    return ApiClient(ctx.obj["config"], ctx.obj["server"])


def _echo_json(obj: Any) -> None:
    click.echo(json.dumps(obj, indent=2, ensure_ascii=False))


@click.group()
@click.option(
    "--config",
    "config_path",
    default=DEFAULT_CONFIG_FILENAME,
    show_default=True,
    help="Application config file (used when running in process).",
)
@click.option("--server", default=None, help="Remote service URL; default runs in process.")
@click.pass_context
def main(ctx: click.Context, config_path: str, server: str | None) -> None:
    """Reasoning-driven word sense disambiguation toolkit."""
    ctx.obj = {"config": config_path, "server": server}


@main.command("config-show")
@click.pass_context
def config_show(ctx: click.Context) -> None:
    """Print the active service configuration."""
    body = _client(ctx).get("/config")
    click.echo(yaml.safe_dump(body, sort_keys=False, allow_unicode=True), nl=False)


@main.command()
@click.option("--corpus", required=True, help="Configured corpus name or a file path.")
@click.option("--noun", default=0, show_default=True)
@click.option("--verb", default=0, show_default=True)
@click.option("--adj", default=0, show_default=True)
@click.option("--adv", default=0, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out", default=None, help="Write the sample as JSONL here.")
@click.pass_context
def sample(ctx, corpus, noun, verb, adj, adv, seed, out) -> None:
    """Draw a seeded per-POS sample from a corpus."""
    counts = {
        key: value
        for key, value in
        (("noun", noun), ("verb", verb), ("adjective", adj), ("adverb", adv))
        if value
    }
    if not counts:
        _fail("request at least one instance (--noun/--verb/--adj/--adv)", EXIT_USAGE)
    body = _client(ctx).post(
        "/sample", {"corpus": corpus, "counts": counts, "seed": seed, "out": out}
    )
    if out:
        click.echo(f"wrote {body['count']} instances to {out}")
    else:
        for instance in body["instances"]:
            click.echo(json.dumps(instance, ensure_ascii=False))


@main.command("build-dataset")
@click.option("--variant", required=True, help="direct | cot | advanced | verb")
@click.option("--corpus", required=True)
@click.option("--out", default=None)
@click.option("--overwrite", is_flag=True)
@click.option("--mock", "mock_responses", default=None, help="Scripted gateway JSONL file.")
@click.option("--judge", is_flag=True, help="Score generated rationales with the configured judges.")
@click.option("--model", default=None, help="Generation model override.")
@click.option("--k", "top_k", default=None, type=int, help="Neighbour count override.")
@click.option("--window", default=None, type=int, help="Context window override.")
@click.pass_context
def build_dataset(ctx, variant, corpus, out, overwrite, mock_responses, judge, model, top_k, window) -> None:
    """Build one training-data variant from a corpus."""
    body = _client(ctx).post(
        "/datasets/build",
        {
            "variant": variant,
            "corpus": corpus,
            "out": out,
            "overwrite": overwrite,
            "mock_responses": mock_responses,
            "judge": judge,
            "model": model,
            "top_k": top_k,
            "window": window,
        },
    )
    _echo_json(body)


@main.command()
@click.option("--path", required=True, help="A built training JSONL file.")
@click.pass_context
def stats(ctx, path) -> None:
    """Token statistics of an exported dataset."""
    _echo_json(_client(ctx).post("/datasets/stats", {"path": path}))


@main.command()
@click.option("--sentence", required=True, help="Sentence with one <WSD>...</WSD> span.")
@click.option("--window", default=None, type=int)
@click.option("--top-k", default=None, type=int)
@click.pass_context
def features(ctx, sentence, window, top_k) -> None:
    """Rank the context tokens around the marked span."""
    _echo_json(
        _client(ctx).post(
            "/context/features", {"sentence": sentence, "window": window, "top_k": top_k}
        )
    )


@main.command()
@click.option("--sentence", required=True)
@click.option("--lemma", required=True)
@click.option("--pos", required=True)
@click.option("--text", required=True, help="Model output to parse.")
@click.option("--strategy", default="direct", show_default=True)
@click.pass_context
def disambiguate(ctx, sentence, lemma, pos, text, strategy) -> None:
    """Parse one model answer against the inventory candidates."""
    instance = {
        "instance_id": "cli:0",
        "sentence": sentence,
        "lemma": lemma,
        "pos": pos,
    }
    _echo_json(
        _client(ctx).post(
            "/disambiguate", {"instance": instance, "text": text, "strategy": strategy}
        )
    )


@main.command()
@click.option("--strategy", required=True, help="direct | cot | advanced")
@click.option("--corpus", required=True)
@click.option("--mode", default="zero_shot", show_default=True)
@click.option("--limit", default=None, type=int)
@click.option("--mock", "mock_responses", default=None, help="Scripted gateway JSONL file.")
@click.option("--out", default=None, help="Write predictions as JSONL here.")
@click.option("--model", default=None)
@click.option("--temperature", default=None, type=float)
@click.option("--max-tokens", default=None, type=int)
@click.pass_context
def infer(ctx, strategy, corpus, mode, limit, mock_responses, out, model, temperature, max_tokens) -> None:
    """Run the explore/analyze/disambiguate pipeline over a corpus."""
    params = {"model": model, "temperature": temperature, "max_tokens": max_tokens}
    params = {k: v for k, v in params.items() if v is not None}
    body = _client(ctx).post(
        "/infer/run",
        {
            "strategy": strategy,
            "corpus": corpus,
            "mode": mode,
            "limit": limit,
            "mock_responses": mock_responses,
            "out": out,
            "params": params or None,
        },
    )
    summary = {"count": body["count"], "status_counts": body["status_counts"]}
    if body.get("written"):
        summary["written"] = body["written"]
    _echo_json(summary)


@main.command()
@click.option("--corpus", required=True)
@click.option("--predictions", "predictions_path", default=None)
@click.option(
    "--compare", "compare_paths", nargs=2, default=None,
    help="Two prediction files for a paired significance test.",
)
@click.option("--method", default=None, type=click.Choice(["exact_binomial", "chi2_cc"]))
@click.option("--dataset", default="")
@click.option("--strategy", default=None)
@click.option("--expectations", "expectations_path", default=None, help="YAML/JSON thresholds file.")
@click.option("--report", "report_out", default=None)
@click.option(
    "--format", "report_format", default="json", show_default=True,
    type=click.Choice(["json", "markdown_table"]),
)
@click.pass_context
def evaluate(ctx, corpus, predictions_path, compare_paths, method, dataset, strategy,
             expectations_path, report_out, report_format) -> None:
    """Score predictions against gold labels; exit 1 on a missed expectation.

    With --compare, run a paired McNemar test between two prediction files
    instead of scoring one.
    """
    if (predictions_path is None) == (not compare_paths):
        _fail("pass exactly one of --predictions or --compare", EXIT_USAGE)
    if compare_paths:
        body = _client(ctx).post(
            "/evaluate/compare",
            {
                "corpus": corpus,
                "predictions_a": compare_paths[0],
                "predictions_b": compare_paths[1],
                "method": method,
            },
        )
        _echo_json(body)
        return
    expectations = None
    if expectations_path:
        try:
            expectations = yaml.safe_load(open(expectations_path, encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            _fail(f"cannot read expectations: {exc}", EXIT_USAGE)
    body = _client(ctx).post(
        "/evaluate/exact",
        {
            "corpus": corpus,
            "predictions_path": predictions_path,
            "dataset": dataset,
            "strategy": strategy,
            "expectations": expectations,
            "report_out": report_out,
            "report_format": report_format,
        },
    )
    _echo_json(body["report"])
    if body["misses"]:
        for miss in body["misses"]:
            click.echo(f"expectation missed: {miss}", err=True)
        sys.exit(EXIT_EXPECTATION)


@main.command("embed-score")
@click.option("--candidate", required=True)
@click.option("--reference", required=True)
@click.pass_context
def embed_score(ctx, candidate, reference) -> None:
    """Greedy token-level embedding similarity between two texts."""
    _echo_json(
        _client(ctx).post(
            "/evaluate/embedding", {"candidate": candidate, "reference": reference}
        )
    )


@main.group()
def judge() -> None:
    """Judge-output utilities."""


@judge.command("parse")
@click.option("--text", default=None)
@click.option("--file", "file_path", default=None, type=click.Path(exists=True))
@click.pass_context
def judge_parse(ctx, text, file_path) -> None:
    """Extract the four dimension scores from a judge reply."""
    if (text is None) == (file_path is None):
        _fail("pass exactly one of --text or --file", EXIT_USAGE)
    if file_path is not None:
        text = open(file_path, encoding="utf-8").read()
    _echo_json(_client(ctx).post("/judge/parse", {"text": text}))


@judge.command("aggregate")
@click.pass_context
def judge_aggregate(ctx) -> None:
    """Per-judge mean scores over the stored reasoning records."""
    _echo_json(_client(ctx).get("/judge/aggregate"))


@main.group()
def review() -> None:
    """Human review of generated rationales."""


def _record_summary(record: dict) -> str:
    flags = "; ".join(record["flag_reasons"]) or "-"
    return (
        f"{record['example_id']}  [{record['review_status']}]\n"
        f"  gold: {record['gold_sense_id']}\n"
        f"  flags: {flags}"
    )


@review.command("queue")
@click.pass_context
def review_queue(ctx) -> None:
    """List records awaiting a decision, flagged ones first."""
    body = _client(ctx).get("/review/queue")
    for record in body["records"]:
        click.echo(_record_summary(record))
    click.echo(f"{body['pending']} pending")


@review.command("decide")
@click.argument("record_id")
@click.option("--decision", required=True, type=click.Choice(["accept", "reject"]))
@click.option("--note", default="")
@click.option("--reviewer", default="human", show_default=True)
@click.option("--force", is_flag=True, help="Override an earlier decision.")
@click.pass_context
def review_decide(ctx, record_id, decision, note, reviewer, force) -> None:
    """Accept or reject one record."""
    body = _client(ctx).post(
        "/review/decide",
        {
            "record_id": record_id,
            "decision": decision,
            "note": note,
            "reviewer": reviewer,
            "force": force,
        },
    )
    click.echo(f"{body['example_id']} -> {body['review_status']}")


@review.command("run")
@click.option("--reviewer", default="human", show_default=True)
@click.pass_context
def review_run(ctx, reviewer) -> None:
    """Walk the queue interactively."""
    client = _client(ctx)
    records = client.get("/review/queue")["records"]
    if not records:
        click.echo("queue empty")
        return
    for record in records:
        click.echo("-" * 60)
        click.echo(_record_summary(record))
        click.echo(record["generated_rationale"])
        choice = click.prompt(
            "[a]ccept / [r]eject / [s]kip / [q]uit",
            type=click.Choice(["a", "r", "s", "q"]),
        )
        if choice == "q":
            break
        if choice == "s":
            continue
        note = click.prompt("note", default="")
        decision = "accept" if choice == "a" else "reject"
        client.post(
            "/review/decide",
            {
                "record_id": record["example_id"],
                "decision": decision,
                "note": note,
                "reviewer": reviewer,
            },
        )
        click.echo(f"{record['example_id']} -> {decision}ed")


@review.command("export")
@click.option("--out", required=True)
@click.option("--overwrite", is_flag=True)
@click.pass_context
def review_export(ctx, out, overwrite) -> None:
    """Write accepted and unreviewed records as training JSONL."""
    body = _client(ctx).post("/review/export", {"out": out, "overwrite": overwrite})
    click.echo(f"wrote {body['written']} examples to {body['out']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.pass_context
def serve(ctx, host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(ctx.obj["config"])
    except errors.EadwsdError as exc:
        _fail(str(exc), EXIT_USAGE)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

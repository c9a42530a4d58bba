"""Operator CLI: a thin client over the pipeline service.

Every subcommand reads a run config (JSON), applies flag overrides, posts
the request to the service (in-process by default, --server for remote),
and prints a short summary. Exit codes: 0 success, 2 missing input or
model, 1 any other error.
"""

from __future__ import annotations

import json
import sys

import click

from .client import HcfClient, ServiceError
from .config import load_config
from .core import HcfError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING = 2


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="Run config JSON (defaults apply when omitted).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override config seed.")(fn)
    fn = click.option("--out", default="out", show_default=True,
                      help="Output directory root.")(fn)
    fn = click.option("--run-name", default=None, help="Override config run_name.")(fn)
    fn = click.option("--server", default=None,
                      help="Base URL of a running service; in-process when omitted.")(fn)
    return fn


def _load(config_path, seed, run_name, overrides=None):
    cfg = load_config(config_path)
    doc = cfg.model_dump(mode="json")
    if seed is not None:
        doc["seed"] = seed
    if run_name is not None:
        doc["run_name"] = run_name
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = doc
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node[key]
        node[leaf] = value
    return doc


def _invoke(command: str, server, payload: dict) -> dict:
    client = HcfClient(server)
    try:
        return client.post(command, payload)
    finally:
        client.close()


def _emit(result: dict) -> None:
    click.echo(f"{result['command']}: ok  run={result['run_name']}  "
               f"config_hash={result['config_hash']}")
    for key, value in result["summary"].items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value)
        click.echo(f"  {key}: {value}")
    for path in result["outputs"]:
        click.echo(f"  wrote {path}")


def _fail(exc) -> int:
    if isinstance(exc, ServiceError):
        sys.stderr.write(f"error: {exc.error}: {exc.message}\n")
        return EXIT_MISSING if exc.status_code == 404 else EXIT_ERROR
    sys.stderr.write(f"error: {exc}\n")
    return EXIT_ERROR


def _run_command(command, server, payload) -> None:
    try:
        result = _invoke(command, server, payload)
    except (ServiceError, HcfError) as exc:
        sys.exit(_fail(exc))
    _emit(result)


@click.group()
def main():
    """Hybrid collaborative filtering pipeline."""


@main.command()
@_common
@click.option("--m", type=int, default=None, help="Override synth.m.")
@click.option("--n", type=int, default=None, help="Override synth.n.")
@click.option("--noise", type=float, default=None, help="Override synth.noise.")
def synth(config_path, seed, out, run_name, server, m, n, noise):
    """Generate a synthetic dataset with planted topic structure."""
    try:
        cfg = _load(config_path, seed, run_name,
                    {"synth.m": m, "synth.n": n, "synth.noise": noise})
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("synth", server, {"config": cfg, "out": out})


@main.command("filter")
@_common
@click.option("--rho-min", type=float, default=None, help="Override filter.rho_min.")
@click.option("--rho-max", type=float, default=None, help="Override filter.rho_max.")
def filter_cmd(config_path, seed, out, run_name, server, rho_min, rho_max):
    """Report the occurrence-density filter on the interactions file."""
    try:
        cfg = _load(config_path, seed, run_name,
                    {"filter.rho_min": rho_min, "filter.rho_max": rho_max})
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("filter", server, {"config": cfg, "out": out})


@main.command()
@_common
@click.option("--provider", type=click.Choice(["hashed_bow", "external"]),
              default=None, help="Override embed.provider.")
@click.option("--dim", type=int, default=None, help="Override embed.dim.")
def embed(config_path, seed, out, run_name, server, provider, dim):
    """Produce stage-1 entity embeddings (HCFE file)."""
    try:
        cfg = _load(config_path, seed, run_name,
                    {"embed.provider": provider, "embed.dim": dim})
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("embed", server, {"config": cfg, "out": out})


@main.command()
@_common
@click.option("--init", "init_mode", type=click.Choice(["pretrained", "random"]),
              default=None, help="Override dcf.init_mode.")
@click.option("--epochs", type=int, default=None, help="Override dcf.epochs.")
def train(config_path, seed, out, run_name, server, init_mode, epochs):
    """Fine-tune the model on the interaction data; saves a checkpoint."""
    try:
        cfg = _load(config_path, seed, run_name,
                    {"dcf.init_mode": init_mode, "dcf.epochs": epochs})
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("train", server, {"config": cfg, "out": out})


@main.command("eval")
@_common
@click.option("--models", default=None,
              help="Comma-separated subset of bpdm,memcf,stage1,stage2,hcf.")
def eval_cmd(config_path, seed, out, run_name, server, models):
    """Compare the trained model against the baselines on the test split."""
    overrides = {}
    if models is not None:
        overrides["eval.models"] = [m.strip() for m in models.split(",") if m.strip()]
    try:
        cfg = _load(config_path, seed, run_name, overrides)
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("eval", server, {"config": cfg, "out": out})


@main.command()
@_common
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel ablation cell workers.")
@click.option("--caps", default=None, help="Comma-separated item caps.")
def ablate(config_path, seed, out, run_name, server, jobs, caps):
    """Run the feature-set x item-cap ablation grid."""
    overrides = {}
    if caps is not None:
        overrides["ablate.caps"] = [int(c) for c in caps.split(",") if c.strip()]
    try:
        cfg = _load(config_path, seed, run_name, overrides)
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("ablate", server, {"config": cfg, "out": out, "jobs": jobs})


@main.command()
@_common
@click.option("--threshold-percentile", type=float, default=None,
              help="Edge threshold as a percentile of pairwise similarities.")
@click.option("--threshold", "threshold_abs", type=float, default=None,
              help="Absolute edge threshold (overrides percentile).")
@click.option("--max-nodes", type=int, default=None,
              help="Subsample this many entities before building the graph.")
def communities(config_path, seed, out, run_name, server, threshold_percentile,
                threshold_abs, max_nodes):
    """Detect communities over the fine-tuned entity embeddings."""
    overrides = {"community.max_nodes": max_nodes}
    if threshold_abs is not None:
        overrides["community.threshold_kind"] = "absolute"
        overrides["community.threshold_value"] = threshold_abs
    elif threshold_percentile is not None:
        overrides["community.threshold_kind"] = "percentile"
        overrides["community.threshold_value"] = threshold_percentile
    try:
        cfg = _load(config_path, seed, run_name, overrides)
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("communities", server, {"config": cfg, "out": out})


@main.command()
@_common
@click.option("--entity", required=True, help="Entity id to query.")
@click.option("--k", type=int, default=None, help="Number of neighbors.")
def neighbors(config_path, seed, out, run_name, server, entity, k):
    """Most similar entities to a given entity."""
    try:
        cfg = _load(config_path, seed, run_name)
    except HcfError as exc:
        sys.exit(_fail(exc))
    _run_command("neighbors", server,
                 {"config": cfg, "out": out, "entity_id": entity, "k": k})


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8151, show_default=True)
def serve(host, port):
    """Run the pipeline service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()

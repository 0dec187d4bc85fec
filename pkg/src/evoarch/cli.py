"""Command-line client for the search service.

Every subcommand talks to the HTTP service: an in-process instance by
default, or a remote one via ``--server``.  Exit codes: 0 success,
1 usage/config error, 2 runtime or evaluator failure.

Genome arguments accept a literal bitstring, a path to a file whose
first line is the genome, or ``-`` for standard input.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ServiceClient:
    """Thin HTTP wrapper; in-process transport unless a server URL is given."""

    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                # starlette wants the not-yet-published httpx2 for its
                # test client; plain httpx still works.
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

            from .service import create_app

            self._client = TestClient(
                create_app(), raise_server_exceptions=False
            )

    def post(self, path: str, payload: dict) -> dict:
        return self._handle(self._client.post(path, json=payload))

    def get(self, path: str) -> dict:
        return self._handle(self._client.get(path))

    @staticmethod
    def _handle(response) -> dict:
        if response.status_code < 400:
            return response.json()
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        click.echo(f"error: {detail}", err=True)
        if 400 <= response.status_code < 500:
            sys.exit(EXIT_USAGE)
        sys.exit(EXIT_RUNTIME)


def _read_genome(argument: str) -> str:
    if argument == "-":
        return sys.stdin.readline().strip()
    path = Path(argument)
    if path.is_file():
        return path.read_text().splitlines()[0].strip()
    return argument.strip()


def _parse_shape(text: str) -> list[int]:
    try:
        dims = [int(part) for part in text.lower().split("x")]
    except ValueError:
        dims = []
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise click.UsageError(
            f"--input must look like CxHxW (e.g. 3x565x584), got {text!r}"
        )
    return dims


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise click.UsageError(f"config {path} must hold a JSON object")
    return data


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service (default: in-process).")
@click.pass_context
def cli(ctx: click.Context, server: str | None) -> None:
    """Evolve, decode, and cost U-shaped segmentation architectures."""
    ctx.obj = {"server": server}


def _client(ctx: click.Context) -> ServiceClient:
    return ServiceClient(ctx.obj["server"])


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file (evolution/space/evaluator sections).")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Run directory for the log, cache, and best genomes.")
@click.option("--evaluator", default=None, metavar="SPEC",
              help="onemax | onemax:<bits> | arch-proxy | external:<cmd>.")
@click.option("--strategy", default=None,
              type=click.Choice(["elitist_plus_tournament", "top_n",
                                 "elitist_1"]),
              help="Environmental-selection strategy override.")
@click.option("--parallelism", type=int, default=None,
              help="Max fitness requests in flight.")
@click.option("--workers", type=int, default=None,
              help="External worker process count (defaults to parallelism).")
@click.pass_context
def search(ctx: click.Context, config_path: str | None, seed: int | None,
           out_dir: str | None, evaluator: str | None, strategy: str | None,
           parallelism: int | None, workers: int | None) -> None:
    """Run the evolutionary search and report per-generation progress."""
    file_config = _load_config_file(config_path)
    payload = {
        "evolution": file_config.get("evolution", {}),
        "space": file_config.get("space", {}),
        "evaluator": evaluator or file_config.get("evaluator", "onemax"),
        "eval_config": file_config.get("eval_config", {}),
        "parallelism": parallelism or file_config.get("parallelism", 1),
        "workers": workers or file_config.get("workers"),
        "wait": True,
    }
    if seed is not None:
        payload["seed"] = seed
    if strategy is not None:
        payload["strategy"] = strategy
    if out_dir is not None:
        payload["out_dir"] = out_dir

    status = _client(ctx).post("/runs", payload)
    _print_run_summary(status)


def _print_run_summary(status: dict) -> None:
    summary = status["summary"]
    for generation, best in enumerate(summary["per_generation_best"]):
        click.echo(f"generation {generation:3d}  best fitness {best:.6f}")
    click.echo(f"evaluations: {summary['total_evaluations']} "
               f"({summary['dispatches']} dispatched)")
    click.echo("top genomes:")
    for entry in summary["top_genomes"]:
        click.echo(f"  {entry['fitness']:.6f}  {entry['genome']}")
    if summary.get("run_dir"):
        click.echo(f"run directory: {summary['run_dir']}")


@cli.command()
@click.argument("genome")
@click.pass_context
def decode(ctx: click.Context, genome: str) -> None:
    """Print the decoded block graphs and validation result."""
    data = _client(ctx).post("/decode", {"genome": _read_genome(genome)})
    for block in data["blocks"]:
        ops = " -> ".join(block["op_units"])
        click.echo(f"block {block['label']}: op {block['op_id']} ({ops})")
        if block["active_nodes"]:
            edges = ", ".join(f"{a}->{b}" for a, b in block["edges"])
            click.echo(f"  nodes {block['active_nodes']}  edges [{edges}]")
            click.echo(f"  input->{block['input_targets']}  "
                       f"{block['output_sources']}->output")
        else:
            click.echo("  degenerate: input node -> output node")
    click.echo("valid" if data["valid"] else "INVALID:")
    for violation in data["violations"]:
        click.echo(f"  {violation}")


@cli.command()
@click.argument("genome", required=False)
@click.option("--baseline", type=click.Choice(["unet"]), default=None,
              help="Cost a fixed baseline instead of a genome.")
@click.option("--channels", type=int, default=None,
              help="Width override for the decoded architecture.")
@click.option("--input", "input_shape", default="3x565x584", metavar="CxHxW",
              help="Input shape for MAC counting.")
@click.option("--format", "fmt", type=click.Choice(["json", "table"]),
              default="json")
@click.pass_context
def analyze(ctx: click.Context, genome: str | None, baseline: str | None,
            channels: int | None, input_shape: str, fmt: str) -> None:
    """Emit a parameter/MAC cost report as JSON (or a small table)."""
    if (genome is None) == (baseline is None):
        raise click.UsageError("provide exactly one of GENOME or --baseline")
    shape = _parse_shape(input_shape)
    payload: dict = {"input_shape": shape, "in_channels": shape[0]}
    if baseline is not None:
        payload["baseline"] = baseline
    else:
        payload["genome"] = _read_genome(genome)
    if channels is not None:
        if channels < 1:
            raise click.UsageError("--channels must be >= 1")
        payload["channels"] = channels
    report = _client(ctx).post("/analyze", payload)
    if fmt == "json":
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    else:
        mib = report["model_size_bytes"] / 2 ** 20
        click.echo(f"{'source':<10} {'size':>10} {'params':>12} {'macs':>10}")
        click.echo(
            f"{report['source']:<10} {mib:>8.1f}MB "
            f"{report['params'] / 1e6:>10.4f}M {report['macs'] / 1e9:>8.2f}B"
        )


@cli.command()
@click.argument("genome")
@click.option("--format", "fmt", default="json",
              help="Output format (only json).")
@click.option("--channels", type=int, default=None,
              help="Channel width recorded in the document.")
@click.pass_context
def export(ctx: click.Context, genome: str, fmt: str,
           channels: int | None) -> None:
    """Export the decoded architecture as its versioned JSON document."""
    if fmt != "json":
        raise click.UsageError(f"unknown export format {fmt!r} (only json)")
    payload: dict = {"genome": _read_genome(genome)}
    if channels is not None:
        payload["space"] = {"channels": channels}
    document = _client(ctx).post("/export", payload)
    click.echo(json.dumps(document, indent=2, sort_keys=True))


@cli.command()
@click.argument("run_dir", type=click.Path())
@click.option("--parallelism", type=int, default=1)
@click.option("--workers", type=int, default=None)
@click.pass_context
def resume(ctx: click.Context, run_dir: str, parallelism: int,
           workers: int | None) -> None:
    """Continue an interrupted run from its directory."""
    payload = {"run_dir": run_dir, "parallelism": parallelism, "wait": True}
    if workers is not None:
        payload["workers"] = workers
    status = _client(ctx).post("/runs/resume", payload)
    _print_run_summary(status)


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--max-parallel-runs", type=int, default=2)
def serve(host: str, port: int, max_parallel_runs: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(max_parallel_runs=max_parallel_runs),
                host=host, port=port)


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    main()

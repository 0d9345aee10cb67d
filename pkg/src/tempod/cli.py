"""Command line client for the detection toolkit.

Every subcommand is a thin client of the HTTP service: it assembles a
request, posts it, and writes the returned files into the output
directory.  By default the service runs in-process, so no server is
needed; ``--server URL`` targets a running one instead and behaves
identically.

Exit codes: 0 on success, 1 for validation problems (bad flags, bad
configs, malformed inputs), 2 for runtime failures (a stage crashed,
the server is unreachable).
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

import click
import httpx

__all__ = ["cli", "main"]


class ServiceFailure(RuntimeError):
    """The service failed or could not be reached."""


def _load_json(path: str, what: str) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise click.ClickException(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"{what} {path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise click.ClickException(f"{what} {path}: expected a JSON object")
    return obj


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise click.ClickException(f"cannot read {what} {path}: {exc}") from exc


def _format_error(detail) -> str:
    if isinstance(detail, list):  # request-shape errors arrive as a list
        parts = []
        for err in detail:
            loc = ".".join(str(p) for p in err.get("loc", []) if p != "body")
            msg = err.get("msg", "invalid")
            parts.append(f"{loc}: {msg}" if loc else msg)
        return "; ".join(parts)
    return str(detail)


def _post(server: str | None, path: str, payload: dict) -> dict:
    async def go():
        if server is None:
            from .service.app import create_app

            transport = httpx.ASGITransport(app=create_app(), raise_app_exceptions=False)
            client = httpx.AsyncClient(transport=transport, base_url="http://tempod",
                                       timeout=None)
        else:
            client = httpx.AsyncClient(base_url=server, timeout=None)
        async with client:
            response = await client.post(path, json=payload)
            try:
                body = response.json()
            except ValueError:
                body = {"detail": response.text.strip() or f"HTTP {response.status_code}"}
            return response.status_code, body

    try:
        status, body = asyncio.run(go())
    except httpx.HTTPError as exc:
        raise ServiceFailure(f"request to {path} failed: {exc}") from exc
    if status < 300:
        return body
    detail = _format_error(body.get("detail", body))
    if status in (400, 422):
        raise click.ClickException(detail)
    raise ServiceFailure(f"{path} returned HTTP {status}: {detail}")


def _emit(files: dict[str, str], out: str) -> None:
    root = Path(out)
    if root.exists():
        if not root.is_dir():
            raise click.ClickException(f"{out} exists and is not a directory")
        if any(root.iterdir()):
            raise click.ClickException(f"output directory {out} is not empty")
    root.mkdir(parents=True, exist_ok=True)
    for rel in sorted(files):
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(files[rel], encoding="utf-8")
        click.echo(str(target))


_config_file = click.Path(exists=True, dir_okay=False)


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Use a running service instead of the in-process one.")
@click.pass_context
def cli(ctx: click.Context, server: str | None) -> None:
    """Detect commission and omission outliers in event sequences."""
    ctx.obj = server


@cli.command()
@click.option("--config", "config_path", required=True, type=_config_file,
              help="Simulation settings (JSON).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", required=True, help="Output directory (must be empty).")
@click.pass_obj
def simulate(server, config_path, seed, out):
    """Draw a synthetic dataset of context and target events."""
    config = _load_json(config_path, "config")
    if seed is not None:
        config["seed"] = seed
    _emit(_post(server, "/simulate", {"config": config})["files"], out)


@cli.command()
@click.option("--config", "config_path", required=True, type=_config_file,
              help="Corruption settings (JSON): kind and rate schedule.")
@click.option("--data", "data_path", required=True, type=_config_file,
              help="Clean dataset (JSON-Lines).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", required=True, help="Output directory (must be empty).")
@click.pass_obj
def inject(server, config_path, data_path, seed, out):
    """Corrupt a dataset with labeled commission or omission outliers."""
    config = _load_json(config_path, "config")
    if seed is not None:
        config["seed"] = seed
    payload = {"config": config, "dataset": {"jsonl": _read_text(data_path, "dataset")}}
    _emit(_post(server, "/inject", payload)["files"], out)


@cli.command()
@click.option("--config", "config_path", default=None, type=_config_file,
              help="Training settings (JSON); defaults apply when omitted.")
@click.option("--data", "data_path", required=True, type=_config_file,
              help="Training dataset (JSON-Lines).")
@click.option("--seed", type=int, default=None,
              help="Override the trainer seed (config key train.seed).")
@click.option("--out", required=True, help="Output directory (must be empty).")
@click.pass_obj
def train(server, config_path, data_path, seed, out):
    """Fit an intensity model and emit it with its training record."""
    config = _load_json(config_path, "config") if config_path else {}
    if seed is not None:
        config.setdefault("train", {})["seed"] = seed
    payload = {"config": config, "dataset": {"jsonl": _read_text(data_path, "dataset")}}
    _emit(_post(server, "/train", payload)["files"], out)


@cli.command()
@click.option("--model", "model_path", required=True, type=_config_file,
              help="Serialized model (JSON).")
@click.option("--data", "data_path", required=True, type=_config_file,
              help="Dataset to score (JSON-Lines).")
@click.option("--train", "train_path", default=None, type=_config_file,
              help="Training dataset; its empirical rate calibrates omission checkpoints.")
@click.option("--rate", type=float, default=None,
              help="Explicit reference event rate instead of --train.")
@click.option("--items", type=click.Choice(["chain", "inter-event"]), default="chain",
              help="Omission interval layout.")
@click.option("--seed", type=int, default=0, help="Checkpoint placement seed.")
@click.option("--out", required=True, help="Output directory (must be empty).")
@click.pass_obj
def detect(server, model_path, data_path, train_path, rate, items, seed, out):
    """Score every target event and checkpoint interval in a dataset."""
    if rate is None and train_path is None:
        raise click.ClickException("detect needs --rate or --train")
    config = {"seed": seed, "items": items}
    if rate is not None:
        config["rate"] = rate
    payload = {
        "config": config,
        "model": _load_json(model_path, "model"),
        "dataset": {"jsonl": _read_text(data_path, "dataset")},
    }
    if train_path is not None:
        payload["train"] = {"jsonl": _read_text(train_path, "training dataset")}
    _emit(_post(server, "/detect", payload)["files"], out)


@cli.command()
@click.option("--items", "items_path", required=True, type=_config_file,
              help="Scored items (CSV).")
@click.option("--out", required=True, help="Output directory (must be empty).")
@click.pass_obj
def evaluate(server, items_path, out):
    """Compute AUROC and outlier ratios from scored items."""
    payload = {"items_csv": _read_text(items_path, "items")}
    _emit(_post(server, "/evaluate", payload)["files"], out)


@cli.command("verify-bounds")
@click.option("--config", "config_path", required=True, type=_config_file,
              help="Bound-check settings (JSON).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", required=True, help="Output directory (must be empty).")
@click.pass_obj
def verify_bounds(server, config_path, seed, out):
    """Check the detection guarantees empirically on ground-truth runs."""
    config = _load_json(config_path, "config")
    if seed is not None:
        config["seed"] = seed
    _emit(_post(server, "/verify-bounds", {"config": config})["files"], out)


@cli.command()
@click.option("--config", "config_path", required=True, type=_config_file,
              help="Experiment settings (JSON).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for repetitions.")
@click.option("--out", default=None,
              help="Output directory; falls back to the config's out field.")
@click.pass_obj
def run(server, config_path, seed, jobs, out):
    """Run a full experiment: simulate, corrupt, fit, score, tabulate."""
    if jobs < 1:
        raise click.ClickException("--jobs must be >= 1")
    config = _load_json(config_path, "config")
    if seed is not None:
        config["seed"] = seed
    out_dir = out or config.get("out")
    if not out_dir:
        raise click.ClickException("no output directory: pass --out or set out in the config")
    files = _post(server, "/run", {"config": config, "jobs": jobs})["files"]
    _emit(files, out_dir)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("tempod.service.app:app", host=host, port=port)


def main(argv=None) -> int:
    """Entry point mapping outcomes to the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ServiceFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0

"""Command line entry points: ground, serve, evaluate."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .bundle import BundleError
from .config import load_config
from .document import DocumentError
from .evaluation import run_protocol, write_reports
from .gateway import make_gateway
from .pipeline import ground_bundle_file


def _build_gateway(config, gateway_mode):
    if gateway_mode:
        config = config.with_gateway(mode=gateway_mode)
    return config, make_gateway(config.gateway)


@click.group()
def main() -> None:
    """Relational grounding toolkit for multi-figure scenes."""


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--gateway", "gateway_mode", type=click.Choice(["mock", "remote"]), default=None)
@click.option("--scene-id", default=None, help="Defaults to the bundle's directory name.")
def ground(bundle_path, config_path, out_dir, gateway_mode, scene_id) -> None:
    """Ground one detection bundle into a scene record."""
    config = load_config(config_path)
    config, gateway = _build_gateway(config, gateway_mode)
    try:
        record = ground_bundle_file(
            bundle_path, config, gateway, out_dir, scene_id=scene_id
        )
    except (BundleError, DocumentError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    scene_dir = Path(out_dir) / record.scene_id
    click.echo(f"scene {record.scene_id}: {len(record.profiles)} characters, "
               f"{len(record.relations)} relations, {len(record.conflicts)} ledger records")
    click.echo(f"wrote {scene_dir / 'document.md'}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "data_dir", required=True, type=click.Path())
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--gateway", "gateway_mode", type=click.Choice(["mock", "remote"]), default=None)
def serve(config_path, data_dir, port, host, gateway_mode) -> None:
    """Serve grounded scenes and evidence-linked chat over HTTP."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    config, gateway = _build_gateway(config, gateway_mode)
    app = create_app(config, gateway, data_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option(
    "--condition",
    type=click.Choice(["baseline", "grounded", "both"]),
    default="grounded",
)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--gateway", "gateway_mode", type=click.Choice(["mock", "remote"]), default=None)
def evaluate(manifest, condition, config_path, out_dir, gateway_mode) -> None:
    """Score the interaction-understanding protocol over a manifest."""
    config = load_config(config_path)
    conditions = ["baseline", "grounded"] if condition == "both" else [condition]
    reports = []
    try:
        for cond in conditions:
            _, gateway = _build_gateway(config, gateway_mode)
            reports.append(run_protocol(manifest, gateway, cond))
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    out = write_reports(reports, out_dir)
    for report in reports:
        identity, interaction, direction, grounding = report.row()
        click.echo(
            f"{report.condition}: identity={identity:.2f} interaction={interaction:.2f} "
            f"direction={direction:.2f} grounding={grounding:.2f} (N={report.n})"
        )
    click.echo(f"wrote {out / 'report.md'}")


if __name__ == "__main__":
    main()

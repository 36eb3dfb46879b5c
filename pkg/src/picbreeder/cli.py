"""Command-line entry points: run experiments, compute metrics, serve the
archive, generate traits, ingest external lineages, export grids, sweep
weights."""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path

import click

from . import cppn, metrics
from .archive import Archive
from .orchestrator import (
    ExperimentConfig,
    export_grids,
    ingest_human_lineages,
    run_experiment,
)
from .providers import (
    ChatCaptioner,
    DownsampleImageEmbedder,
    HashTextEmbedder,
    HttpChatProvider,
    HttpEmbeddingProvider,
    ToneCaptioner,
)

ENV_CHAT_ENDPOINT = "PICBREEDER_CHAT_ENDPOINT"
ENV_CHAT_API_KEY = "PICBREEDER_CHAT_API_KEY"
ENV_CHAT_MODEL = "PICBREEDER_CHAT_MODEL"
ENV_EMBED_ENDPOINT = "PICBREEDER_EMBED_ENDPOINT"
ENV_EMBED_API_KEY = "PICBREEDER_EMBED_API_KEY"
ENV_EMBED_MODEL = "PICBREEDER_EMBED_MODEL"


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Collaborative CPPN image evolution."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command(name="run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Flat key=value config file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def run_cmd(config_path: str, seed: int | None):
    """Run (or resume) an experiment."""
    config = ExperimentConfig.from_file(config_path, seed=seed)

    def progress(done, total):
        click.echo(f"published {done}/{total}")

    archive = run_experiment(config, progress=progress)
    click.echo(f"archive size {len(archive)}  hash {archive.content_hash()[:16]}")
    if config.out_dir:
        click.echo(f"stored at {config.out_dir}")
    archive.close()


def _chat_provider():
    endpoint = os.environ.get(ENV_CHAT_ENDPOINT, "")
    if not endpoint:
        raise click.ClickException(f"set {ENV_CHAT_ENDPOINT} to use a live "
                                   "chat provider")
    return HttpChatProvider(endpoint,
                            api_key=os.environ.get(ENV_CHAT_API_KEY, ""),
                            model=os.environ.get(ENV_CHAT_MODEL, ""))


def _embedding_provider():
    endpoint = os.environ.get(ENV_EMBED_ENDPOINT, "")
    if not endpoint:
        raise click.ClickException(f"set {ENV_EMBED_ENDPOINT} to use a live "
                                   "embedding provider")
    return HttpEmbeddingProvider(endpoint,
                                 api_key=os.environ.get(ENV_EMBED_API_KEY, ""),
                                 model=os.environ.get(ENV_EMBED_MODEL, ""))


METRIC_NAMES = ("recall", "fidelity", "visual-coverage", "semantic-coverage", "j1")


@main.command(name="metrics")
@click.option("--archive", "archive_dir", required=True,
              type=click.Path(exists=True))
@click.option("--metric", required=True, type=click.Choice(METRIC_NAMES))
@click.option("--k", default=100, show_default=True,
              help="Representatives for coverage metrics.")
@click.option("--step", default=None, type=int,
              help="Evaluate on archive prefixes every STEP publications.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="CSV destination (default: print).")
@click.option("--nouns", "nouns_path", default=None, type=click.Path(exists=True),
              help="Noun list file (default: packaged vocabulary).")
@click.option("--live", is_flag=True,
              help="Use live providers from the environment instead of the "
                   "offline stand-ins.")
def metrics_cmd(archive_dir, metric, k, step, out_path, nouns_path, live):
    """Evaluate an archive-quality metric, optionally over archive growth."""
    archive = Archive.open(archive_dir)
    if live:
        embedder = _embedding_provider()
        text_embedder = embedder
        captioner = ChatCaptioner(_chat_provider())
    else:
        embedder = DownsampleImageEmbedder()
        text_embedder = HashTextEmbedder()
        captioner = ToneCaptioner()

    store = metrics.ArchiveEmbeddings(archive, image_embedder=embedder,
                                      captioner=captioner,
                                      text_embedder=text_embedder)

    if metric in ("recall", "fidelity"):
        nouns = metrics.load_nouns(nouns_path)
        noun_vectors = [text_embedder.embed_text(n) for n in nouns]

    def evaluate(arch, upto):
        if metric == "recall":
            return metrics.archive_semantic_recall(arch, embedder, noun_vectors,
                                                   upto=upto, store=store)
        if metric == "fidelity":
            return metrics.archive_semantic_fidelity(arch, embedder, noun_vectors,
                                                     upto=upto, store=store)
        if metric == "visual-coverage":
            return metrics.visual_coverage(arch, embedder, k=k, upto=upto,
                                           store=store)
        if metric == "semantic-coverage":
            return metrics.semantic_coverage(arch, captioner, text_embedder,
                                             k=k, upto=upto, store=store)
        return metrics.j1_index(arch.phylogeny(upto=upto))

    result = metrics.series(archive, evaluate, step or len(archive))
    if out_path:
        result.to_csv(out_path)
        click.echo(f"wrote {out_path}")
    for size, value in result.points:
        click.echo(f"{size}\t{value:.6f}")


@main.command(name="serve")
@click.option("--archive", "archive_dir", required=True,
              type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ui", "ui_dir", default=None, type=click.Path(exists=True),
              help="Static web client directory to mount at /ui.")
def serve_cmd(archive_dir, port, host, seed, ui_dir):
    """Serve the archive and live human sessions over HTTP."""
    from .server import serve

    serve(archive_dir, port=port, seed=seed, ui_dir=ui_dir, host=host)


@main.command(name="traits")
@click.option("--total", default=1000, show_default=True)
@click.option("--batch", default=50, show_default=True)
@click.option("--history", default=10, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def traits_cmd(total, batch, history, out_path):
    """Generate a personality trait pool with a live chat provider."""
    from .agents import generate_traits

    pool = generate_traits(_chat_provider(), total=total, batch=batch,
                           history=history,
                           model=os.environ.get(ENV_CHAT_MODEL, ""))
    pool.save(out_path)
    status = "complete" if pool.complete else "PARTIAL"
    click.echo(f"wrote {len(pool.traits)} traits ({status}) to {out_path}")
    if not pool.complete:
        sys.exit(1)


@main.command(name="ingest")
@click.option("--in", "src", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def ingest_cmd(src, out_dir):
    """Normalize external lineage records into an archive directory."""
    archive = ingest_human_lineages(src, out_dir)
    click.echo(f"ingested {len(archive)} entries into {out_dir}")


@main.command(name="grids")
@click.option("--archive", "archive_dir", required=True,
              type=click.Path(exists=True))
@click.option("--kind", required=True,
              type=click.Choice(["publication-order", "fps-representatives",
                                 "top-recall"]))
@click.option("--n", default=16, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--nouns", "nouns_path", default=None, type=click.Path(exists=True))
def grids_cmd(archive_dir, kind, n, out_path, nouns_path):
    """Export a deterministic image-grid snapshot of the archive."""
    archive = Archive.open(archive_dir)
    out_path = out_path or f"grid_{kind}_{n}.png"
    embedder = DownsampleImageEmbedder()
    noun_vectors = None
    if kind == "top-recall":
        text_embedder = HashTextEmbedder()
        noun_vectors = [text_embedder.embed_text(w)
                        for w in metrics.load_nouns(nouns_path)]
    path = export_grids(archive, kind, n, out_path, image_embedder=embedder,
                        noun_vectors=noun_vectors)
    click.echo(f"wrote {path}")


@main.command(name="sweep")
@click.option("--genome", "genome_path", required=True,
              type=click.Path(exists=True))
@click.option("--steps", default=21, show_default=True)
@click.option("--width", default=128, show_default=True)
@click.option("--height", default=128, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def sweep_cmd(genome_path, steps, width, height, out_path):
    """Sweep each connection weight across [-1, 1] and rank by pixel impact."""
    genome = cppn.parse_genome(Path(genome_path).read_text())
    result = metrics.weight_sweep(genome, steps, width, height)
    payload = result.to_json()
    if out_path:
        Path(out_path).write_text(payload)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(payload)
    ranked = result.ranked()
    for entry in ranked[:10]:
        click.echo(f"innovation {entry.innovation}: extreme distance "
                   f"{entry.extreme_distance():.4f}")


if __name__ == "__main__":
    main()

"""Command-line pipeline driver.

Each stage reads and writes the shared container format so runs can be
inspected, diffed, and resumed between stages:

    ingest → track → align → dedupe → workflows → augment → dataset
    → train → evaluate → bundle → serve
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import click

from .alignment import (
    AlignmentConfig,
    AlignmentDictionary,
    apply_alignment,
    build_alignment_dictionary,
)
from .container import read_dataset, read_sessions, write_dataset, write_sessions
from .docs import (
    IngestReport,
    LabelRegistry,
    augment_vocabulary,
    ingest_documentation,
    load_meta_registry,
    save_meta_registry,
)
from .features import FinalizeConfig, compute_features, finalize_dataset
from .logio import ParseReport, group_into_sessions, parse_log_stream
from .mining import (
    CommandMapping,
    apply_mapping,
    mine_mapping,
    review_from_file,
)
from .model.checkpoint import load_model, save_model
from .model.config import BACKBONE_KINDS, ModelConfig
from .model.metrics import evaluate_model
from .model.training import TrainerConfig, train_model
from .providers import load_providers
from .tracking import FilterRules, track_corpus
from .types import Dataset
from .workflows import BpeModel, encode_with_workflows, learn_workflows

MANIFEST_NAME = "manifest.json"


@click.group()
def main() -> None:
    """Turn raw BIM command logs into a live next-command recommender."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path(), help="Session container to write.")
@click.option("--format", "fmt", default="jsonl", type=click.Choice(["jsonl", "tsv"]), show_default=True)
def ingest(inputs: tuple[str, ...], output: str, fmt: str) -> None:
    """Parse raw log files and group entries into per-session streams."""
    report = ParseReport()
    entries = []
    for path in inputs:
        with open(path, "rb") as fh:
            entries.extend(parse_log_stream(fh, fmt, report))
    sessions = group_into_sessions(entries)
    write_sessions(sessions, output, stage="raw")
    click.echo(
        f"ingested {report.accepted} entries into {len(sessions)} sessions "
        f"({report.rejected} lines rejected)"
    )


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--rules", required=True, type=click.Path(exists=True), help="Filter rules TOML.")
def track(input_path: str, output: str, rules: str) -> None:
    """Drop irrelevant entries and resolve undo/redo into the actual flow."""
    sessions = read_sessions(input_path)
    tracked, report = track_corpus(sessions, FilterRules.from_toml(rules))
    write_sessions(tracked, output, stage="tracked")
    click.echo(
        f"tracked {report.sessions} sessions: {report.entries_in} → {report.entries_out} "
        f"entries ({report.filtered_out} filtered, {report.matched_undos} undos resolved)"
    )


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--providers", "providers_path", type=click.Path(exists=True), help="Provider TOML (stub providers when omitted).")
@click.option("--dictionary", "dictionary_path", required=True, type=click.Path(), help="Where to save the name dictionary.")
@click.option("--threshold", default=0.82, show_default=True, help="Mean pairwise cosine needed to accept a group whole.")
def align(input_path: str, output: str, providers_path: str | None, dictionary_path: str, threshold: float) -> None:
    """Unify language variants of each command under one English name."""
    sessions = read_sessions(input_path)
    providers = load_providers(providers_path)
    config = AlignmentConfig(similarity_threshold=threshold)
    dictionary, report = build_alignment_dictionary(
        sessions, config, providers.make_translator(), providers.make_embedder()
    )
    dictionary.save(dictionary_path)
    aligned = apply_alignment(sessions, dictionary)
    write_sessions(aligned, output, stage="aligned")
    click.echo(
        f"aligned {report.groups} command-id groups "
        f"({report.coherent_groups} coherent, {report.clustered_groups} clustered, "
        f"{len(report.failed_groups)} failed); dictionary has {len(dictionary)} names"
    )


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--mapping", "mapping_path", required=True, type=click.Path(), help="Where to save the trigger mapping.")
@click.option("--threshold", default=0.4, show_default=True, help="Minimum confidence (strict) for a trigger pair.")
@click.option("--top-n", default=10, show_default=True, help="Most-confident pairs kept per command.")
@click.option("--window", default=10, show_default=True, help="Look-ahead window for co-occurrence.")
@click.option("--review", "review_path", type=click.Path(exists=True), help="Reviewed-pair decisions file.")
def dedupe(input_path: str, output: str, mapping_path: str, threshold: float, top_n: int, window: int, review_path: str | None) -> None:
    """Mine trigger rules, then collapse each action to its concise entry."""
    sessions = read_sessions(input_path)
    review = review_from_file(review_path) if review_path else None
    mapping = mine_mapping(sessions, threshold, top_n, review, window)
    mapping.save(mapping_path)
    deduped = apply_mapping(sessions, mapping, window)
    before = sum(len(s) for s in sessions)
    after = sum(len(s) for s in deduped)
    write_sessions(deduped, output, stage="deduped")
    click.echo(
        f"mined triggers for {len(mapping.entries)} commands; "
        f"reduced {before} → {after} entries"
    )


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path(), help="Where to save the learned merges.")
@click.option("--merges", default=10, show_default=True, help="Maximum merges to learn.")
@click.option("--encode/--no-encode", default=True, show_default=True, help="Rewrite sessions with the merged tokens, or only learn the vocabulary.")
def bpe(input_path: str, output: str, model_path: str, merges: int, encode: bool) -> None:
    """Learn frequent command workflows and rewrite sessions with them."""
    sessions = read_sessions(input_path)
    model, performed = learn_workflows(sessions, merges)
    model.save(model_path)
    unified = [encode_with_workflows(s, model) for s in sessions] if encode else sessions
    write_sessions(unified, output, stage="unified")
    click.echo(f"learned {performed} workflow merges over {len(sessions)} sessions")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True), help="Unified session container.")
@click.option("--workflows", "workflows_path", required=True, type=click.Path(exists=True), help="Learned workflow merges.")
@click.option("--docs", "docs_dir", required=True, type=click.Path(exists=True), help="Markdown documentation corpus.")
@click.option("--providers", "providers_path", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path(), help="Meta registry to write.")
def augment(input_path: str, workflows_path: str, docs_dir: str, providers_path: str | None, output: str) -> None:
    """Attach retrieved descriptions, types, and targets to every command."""
    sessions = read_sessions(input_path)
    bpe = BpeModel.load(workflows_path)
    workflow_map = bpe.workflows()
    observed = {e.message for s in sessions for e in s.entries}
    plain = sorted(
        (observed | {c for cs in workflow_map.values() for c in cs}) - set(workflow_map)
    )
    providers = load_providers(providers_path)
    embedder = providers.make_embedder()
    report = IngestReport()
    chunks = ingest_documentation(docs_dir, embedder, report=report)
    meta, types, targets = augment_vocabulary(
        plain, workflow_map, chunks, providers.make_text_generator(), embedder
    )
    save_meta_registry(meta, output)
    flagged = sum(1 for m in meta.values() if m.flagged)
    click.echo(
        f"augmented {len(plain)} commands and {len(workflow_map)} workflows "
        f"from {report.files} docs ({report.chunks} chunks); "
        f"{len(types)} types, {len(targets)} targets, {flagged} flagged for review"
    )


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True), help="Unified session container.")
@click.option("-o", "--output", required=True, type=click.Path(), help="Dataset container to write.")
@click.option("--meta", "meta_path", type=click.Path(exists=True), help="Meta registry from the augment stage.")
@click.option("--min-session", "min_session", default=5, show_default=True, help="Minimum interactions per kept session.")
@click.option("--min-count", default=10, show_default=True, help="Corpus-wide minimum occurrences per command.")
@click.option("--max-len", default=110, show_default=True)
@click.option("--split", "train_fraction", default=0.85, show_default=True, help="Training fraction of the split.")
@click.option("--seed", default=42, show_default=True)
def dataset(input_path: str, output: str, meta_path: str | None, min_session: int, min_count: int, max_len: int, train_fraction: float, seed: int) -> None:
    """Featureize unified sessions and assemble the train/validation dataset."""
    sessions = read_sessions(input_path)
    featureized = [(s.session_id, compute_features(s)) for s in sessions]
    config = FinalizeConfig(
        min_session_len=min_session,
        min_command_count=min_count,
        max_seq_len=max_len,
        train_fraction=train_fraction,
        seed=seed,
    )
    ds, report = finalize_dataset(featureized, config)
    if meta_path:
        meta = load_meta_registry(meta_path)
        ds.meta = {name: m for name, m in meta.items() if name in ds.vocabulary.index}
        types = LabelRegistry()
        targets = LabelRegistry()
        for command in ds.vocabulary.items:
            m = ds.meta.get(command.name)
            if m is not None:
                types.intern(m.type_label)
                targets.intern(m.target_label)
        ds.type_labels = list(types.labels)
        ds.target_labels = list(targets.labels)
    write_dataset(ds, output)
    n_train = len(ds.split_sequences("train"))
    n_val = len(ds.split_sequences("validation"))
    repaired = (
        len(report.moved_to_validation)
        + len(report.moved_to_train)
        + len(report.duplicated)
    )
    click.echo(
        f"dataset: {len(ds.vocabulary)} commands, {n_train} train / {n_val} validation "
        f"sequences (dropped {report.dropped_sessions_short} short sessions, "
        f"{report.dropped_steps_rare} rare steps; {repaired} split repairs)"
    )


@main.command()
@click.option("--rules", required=True, type=click.Path(exists=True))
@click.option("--dictionary", "dictionary_path", required=True, type=click.Path(exists=True))
@click.option("--mapping", "mapping_path", required=True, type=click.Path(exists=True))
@click.option("--workflows", "workflows_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", "out_dir", required=True, type=click.Path(), help="Serving assets directory.")
def bundle(rules: str, dictionary_path: str, mapping_path: str, workflows_path: str, dataset_path: str, out_dir: str) -> None:
    """Collect the preprocessing assets one deployment needs to serve."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shutil.copy(rules, out / "rules.toml")
    shutil.copy(dictionary_path, out / "dictionary.jsonl")
    shutil.copy(mapping_path, out / "mapping.jsonl")
    shutil.copy(workflows_path, out / "workflows.json")
    ds = read_dataset(dataset_path)
    manifest = {"vocabulary_hash": ds.vocabulary.content_hash(), "vocabulary_size": len(ds.vocabulary)}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    click.echo(f"bundled serving assets into {out_dir} (vocabulary {manifest['vocabulary_hash'][:12]}…)")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True), help="Dataset container.")
@click.option("-o", "--output", required=True, type=click.Path(), help="Checkpoint to write.")
@click.option("--backbone", default="decoder_only", type=click.Choice(list(BACKBONE_KINDS)), show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--dim", default=64, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--kv-groups", default=None, type=int, help="Key/value groups for grouped-query attention.")
@click.option("--epochs", default=10, show_default=True)
@click.option("--batch-size", default=128, show_default=True)
@click.option("--lr", default=3e-5, show_default=True)
@click.option("--patience", default=2, show_default=True)
@click.option("--seed", default=42, show_default=True)
def train(input_path: str, output: str, backbone: str, layers: int, dim: int, heads: int, kv_groups: int | None, epochs: int, batch_size: int, lr: float, patience: int, seed: int) -> None:
    """Train a recommender on a dataset and save the best checkpoint."""
    ds = read_dataset(input_path)
    model_config = ModelConfig(
        backbone=backbone,
        layers=layers,
        dim=dim,
        heads=heads,
        kv_groups=kv_groups,
    )
    trainer = TrainerConfig(
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=lr,
        patience=patience,
        seed=seed,
    )
    model, encoder, log = train_model(ds, model_config, trainer)
    for record in log.epochs:
        click.echo(
            f"epoch {record.epoch}: train {record.train_loss:.4f}, "
            f"validation {record.validation_loss:.4f}"
        )
    save_model(
        output, model, encoder, ds.vocabulary, ds.type_labels, ds.target_labels,
        training_log=log.to_dict(),
    )
    tail = " (early stop)" if log.stopped_early else ""
    click.echo(f"saved best epoch {log.best_epoch} to {output}{tail}")


@main.command()
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True), help="Dataset container.")
@click.option("-m", "--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="validation", type=click.Choice(["train", "validation"]), show_default=True)
@click.option("--ks", default="3,5,10", show_default=True, help="Comma-separated cutoffs.")
@click.option("--json", "json_path", type=click.Path(), help="Also write the full report as JSON.")
@click.option("--per-command", is_flag=True, help="Break metrics down by ground-truth command.")
def evaluate(input_path: str, model_path: str, split: str, ks: str, json_path: str | None, per_command: bool) -> None:
    """Score next-command prediction on a held-out split."""
    ds = read_dataset(input_path)
    model, encoder, vocabulary, header = load_model(model_path)
    if vocabulary.content_hash() != ds.vocabulary.content_hash():
        raise click.ClickException(
            "checkpoint and dataset vocabularies differ; evaluate against the "
            "dataset the model was trained on"
        )
    cutoffs = tuple(int(v) for v in ks.split(","))
    report = evaluate_model(
        model,
        encoder,
        ds.split_sequences(split),
        ks=cutoffs,
        command_names=vocabulary.names() if per_command else None,
    )
    label = header.get("model_config", {}).get("backbone", "model")
    click.echo(report.markdown_table(label))
    if json_path:
        Path(json_path).write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
        click.echo(f"wrote {json_path}")


@main.command()
@click.option("-m", "--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--assets", "assets_dir", required=True, type=click.Path(exists=True), help="Bundled serving assets directory.")
@click.option("--providers", "providers_path", type=click.Path(exists=True), help="Provider TOML for translating unseen command names.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8352, show_default=True)
@click.option("--static", "static_dir", type=click.Path(exists=True), help="Built console UI to serve at /.")
@click.option("--session-ttl", default=3600.0, show_default=True, help="Idle seconds before a live session expires.")
def serve(model_path: str, assets_dir: str, providers_path: str | None, host: str, port: int, static_dir: str | None, session_ttl: float) -> None:
    """Serve live recommendations over HTTP."""
    import uvicorn

    from .service import ServingBundle, create_app

    translator = load_providers(providers_path).make_translator()
    bundle = ServingBundle.load(model_path, assets_dir, translator=translator)
    app = create_app(bundle, static_dir=static_dir, session_ttl=session_ttl)
    click.echo(f"serving {len(bundle.vocabulary)} commands on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())

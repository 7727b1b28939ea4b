"""Command-line surface wiring the pipeline end to end.

Exit codes: 0 success, 1 validation/data-quality failure, 2 usage or I/O
error. Flags beat config-file values, which beat defaults; the effective
configuration is echoed into reports (and to stderr for record streams).
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import reports
from .classifier import (
    ModelFormatError,
    load_model,
    model_to_document,
    predict_labels,
    train_model,
)
from .config import RunConfig, load_config
from .corpus import CatalogError, LabelCatalog, TranscriptError
from .evaluate import cross_validate, rank_features_for_examples
from .featurize import vectorize
from .serve import ServeEngine, ServeServer, serve_stdio
from .synth import SynthSpec, synth_catalog, synth_corpus

_QUALITY_ERRORS = (TranscriptError, CatalogError, ModelFormatError, ValueError)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_catalog(ctx) -> LabelCatalog:
    path = ctx.obj.get("catalog_path")
    return corpus_mod.load_catalog(path) if path else LabelCatalog.default()


def _effective_config(ctx, **overrides) -> RunConfig:
    path = ctx.obj.get("config_path")
    config = load_config(path) if path else RunConfig()
    updates = {k: v for k, v in overrides.items() if v is not None}
    if ctx.obj.get("seed") is not None:
        updates["seed"] = ctx.obj["seed"]
    return dataclasses.replace(config, **updates) if updates else config


def _config_echo(ctx, config: RunConfig) -> dict:
    return {"catalog": ctx.obj.get("catalog_path") or "<default>", **config.as_dict()}


def _read_corpus(ctx, paths, catalog):
    conversations = corpus_mod.load_transcripts(paths, catalog)
    report = corpus_mod.validate(conversations)
    if not report.ok:
        for v in report.violations:
            click.echo(
                f"violation: {v.conversation_id} turn {v.turn_index}: {v.invariant}: {v.message}",
                err=True,
            )
        _fail(1, f"{len(report.violations)} validation violation(s)")
    return conversations


@click.group()
@click.option("--catalog", "catalog_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Label catalog JSON (default: bundled catalog).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Run configuration JSON.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--format", "fmt", type=click.Choice(reports.FORMATS), default=reports.TABLE,
              show_default=True, help="Report format.")
@click.pass_context
def main(ctx, catalog_path, config_path, seed, fmt):
    """Detect speech-act types in developer Q/A conversation turns."""
    ctx.obj = {"catalog_path": catalog_path, "config_path": config_path,
               "seed": seed, "format": fmt}


@main.command()
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def validate(ctx, transcripts):
    """Check transcripts against the data-model invariants."""
    try:
        catalog = _load_catalog(ctx)
        conversations = corpus_mod.load_transcripts(transcripts, catalog)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    report = corpus_mod.validate(conversations)
    for v in report.violations:
        click.echo(f"{v.conversation_id} turn {v.turn_index}: {v.invariant}: {v.message}")
    click.echo(f"{len(report.violations)} violations")
    sys.exit(0 if report.ok else 1)


@main.command()
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def stats(ctx, transcripts):
    """Corpus statistics: turns, speakers, label occurrence counts."""
    try:
        catalog = _load_catalog(ctx)
        conversations = _read_corpus(ctx, transcripts, catalog)
        result = corpus_mod.corpus_stats(conversations, catalog)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    config = _config_echo(ctx, _effective_config(ctx))
    if ctx.obj["format"] == reports.MACHINE:
        click.echo(reports.stats_machine(result, config), nl=False)
    else:
        click.echo(reports.stats_table(result, config), nl=False)


@main.command(name="synth-corpus")
@click.option("--labels", "n_labels", type=click.IntRange(min=2), default=6, show_default=True)
@click.option("--turns-per-label", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--signal", type=click.FloatRange(0.0, 1.0), default=1.0, show_default=True,
              help="Probability a keyword slot draws from the label's pool.")
@click.option("--multi-label-rate", type=click.FloatRange(0.0, 1.0), default=0.2,
              show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.option("--catalog-out", type=click.Path(dir_okay=False), default=None,
              help="Also write the matching catalog JSON.")
@click.pass_context
def synth_corpus_cmd(ctx, n_labels, turns_per_label, signal, multi_label_rate, output, catalog_out):
    """Generate a deterministic keyword-separable synthetic corpus."""
    seed = ctx.obj.get("seed") or 0
    spec = SynthSpec(n_labels=n_labels, turns_per_label=turns_per_label,
                     signal=signal, multi_label_rate=multi_label_rate, seed=seed)
    conversations = synth_corpus(spec)
    try:
        Path(output).write_text(corpus_mod.serialize_transcripts(conversations), encoding="utf-8")
        if catalog_out:
            catalog = synth_catalog(spec)
            Path(catalog_out).write_text(
                json.dumps({"labels": list(catalog.labels), "excluded": []}) + "\n",
                encoding="utf-8",
            )
    except OSError as exc:
        _fail(2, str(exc))
    click.echo(f"wrote {sum(len(c.turns) for c in conversations)} turns "
               f"({len(conversations)} conversations) to {output}", err=True)


@main.command()
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "model_path", type=click.Path(dir_okay=False), required=True,
              help="Where to write the trained model file.")
@click.option("--tune/--no-tune", default=None, help="Grid-search hyperparameters first.")
@click.option("--smote-k", type=click.IntRange(min=1), default=None)
@click.option("--threshold", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
              default=None)
@click.option("--slen-scope", type=click.Choice(["same", "any"]), default=None)
@click.pass_context
def train(ctx, transcripts, model_path, tune, smote_k, threshold, slen_scope):
    """Train the multi-label model and persist it."""
    try:
        catalog = _load_catalog(ctx)
        config = _effective_config(ctx, tune=tune, smote_k=smote_k,
                                   threshold=threshold, slen_scope=slen_scope)
        conversations = _read_corpus(ctx, transcripts, catalog)
        examples = corpus_mod.modeling_examples(conversations, catalog)
        if not examples:
            _fail(1, "no participant turns with catalog labels to train on")
        model = train_model(examples, catalog, config)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    for skip in model.skipped:
        click.echo(f"warning: skipped label {skip.label}: {skip.reason}", err=True)
    document = model_to_document(model)
    try:
        directory = os.path.dirname(os.path.abspath(model_path))
        fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(document)
            os.replace(tmp_path, model_path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise
    except OSError as exc:
        _fail(2, str(exc))
    click.echo(f"trained {len(model.classifiers)} classifiers "
               f"({len(model.skipped)} skipped) -> {model_path}", err=True)


@main.command()
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--fallback/--no-fallback", default=False, show_default=True,
              help="Emit the argmax label when nothing clears the threshold.")
@click.pass_context
def predict(ctx, transcripts, model_path, fallback):
    """Classify the participant turns of a transcript, one record per turn."""
    try:
        model = load_model(model_path)
        conversations = _read_corpus(ctx, transcripts, model.catalog)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    click.echo(f"# config: {json.dumps(model.config.as_dict(), sort_keys=True)}", err=True)
    machine = ctx.obj["format"] == reports.MACHINE
    for conv in conversations:
        for turn in conv.turns:
            if turn.speaker != corpus_mod.PARTICIPANT:
                record = {"conversation_id": conv.conversation_id, "turn_index": turn.turn_index,
                          "speaker": turn.speaker, "labels": [], "probabilities": {},
                          "low_confidence": False}
            else:
                vector = vectorize(conv, turn.turn_index, model.vocabulary, model.scaling,
                                   model.slen_scope)
                prediction = predict_labels(model, vector, fallback)
                record = {
                    "conversation_id": conv.conversation_id,
                    "turn_index": turn.turn_index,
                    "speaker": turn.speaker,
                    "labels": sorted(prediction.labels),
                    "probabilities": {k: prediction.probabilities[k]
                                      for k in model.catalog.labels},
                    "low_confidence": prediction.low_confidence,
                }
            if machine:
                click.echo(json.dumps(record, ensure_ascii=True))
            else:
                labels = ",".join(record["labels"]) or "-"
                flag = " low-confidence" if record["low_confidence"] else ""
                click.echo(f"{record['conversation_id']}#{record['turn_index']} "
                           f"[{record['speaker']}] {labels}{flag}")


@main.command()
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--folds", type=click.IntRange(min=2), default=None)
@click.option("--tune/--no-tune", default=None)
@click.option("--smote-k", type=click.IntRange(min=1), default=None)
@click.option("--threshold", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
              default=None)
@click.option("--fallback/--no-fallback", default=None)
@click.option("--slen-scope", type=click.Choice(["same", "any"]), default=None)
@click.option("--output", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the machine-readable report here.")
@click.pass_context
def evaluate(ctx, transcripts, folds, tune, smote_k, threshold, fallback, slen_scope, out_path):
    """Stratified cross-validation with per-label and weighted metrics."""
    try:
        catalog = _load_catalog(ctx)
        config = _effective_config(ctx, n_folds=folds, tune=tune, smote_k=smote_k,
                                   threshold=threshold, fallback=fallback,
                                   slen_scope=slen_scope)
        conversations = _read_corpus(ctx, transcripts, catalog)
        examples = corpus_mod.modeling_examples(conversations, catalog)
        if not examples:
            _fail(1, "no participant turns with catalog labels to evaluate on")
        report = cross_validate(examples, catalog, config)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    config_dict = _config_echo(ctx, config)
    machine_doc = reports.metrics_machine(report, config_dict)
    if ctx.obj["format"] == reports.MACHINE:
        click.echo(machine_doc, nl=False)
    else:
        click.echo(reports.metrics_table(report, config_dict), nl=False)
    if out_path:
        try:
            Path(out_path).write_text(machine_doc, encoding="utf-8")
        except OSError as exc:
            _fail(2, str(exc))


@main.command(name="rank-features")
@click.argument("transcripts", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--label", "label_name", default=None,
              help="Rank for one label (default: every catalog label with positives).")
@click.option("--top-n", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--printed-order", is_flag=True, default=False,
              help="List features least-informative first.")
@click.option("--slen-scope", type=click.Choice(["same", "any"]), default=None)
@click.pass_context
def rank_features_cmd(ctx, transcripts, label_name, top_n, printed_order, slen_scope):
    """Most informative features per speech-act type (fisher score)."""
    try:
        catalog = _load_catalog(ctx)
        config = _effective_config(ctx, slen_scope=slen_scope)
        conversations = _read_corpus(ctx, transcripts, catalog)
        examples = corpus_mod.modeling_examples(conversations, catalog)
        if not examples:
            _fail(1, "no participant turns with catalog labels to rank on")
        rankings = []
        if label_name:
            rankings.append(rank_features_for_examples(examples, catalog, label_name.lower(),
                                                       top_n, config.slen_scope))
        else:
            for name in catalog.labels:
                if any(name in ex.labels for ex in examples) and not all(
                    name in ex.labels for ex in examples
                ):
                    rankings.append(rank_features_for_examples(examples, catalog, name,
                                                               top_n, config.slen_scope))
                else:
                    click.echo(f"warning: skipping {name}: needs both positive and "
                               f"negative examples", err=True)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    config_dict = _config_echo(ctx, config)
    if ctx.obj["format"] == reports.MACHINE:
        click.echo(reports.ranking_machine(rankings, config_dict), nl=False)
    else:
        click.echo(reports.ranking_table(rankings, printed_order, config_dict), nl=False)


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--port", type=click.IntRange(0, 65535), default=None,
              help="Listen on TCP instead of stdin/stdout.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--fallback/--no-fallback", default=False, show_default=True)
@click.pass_context
def serve(ctx, model_path, port, host, fallback):
    """Long-running classify service speaking the line protocol."""
    try:
        model = load_model(model_path)
    except _QUALITY_ERRORS as exc:
        _fail(1, str(exc))
    except OSError as exc:
        _fail(2, str(exc))
    engine = ServeEngine(model, fallback=fallback)
    click.echo(f"# config: {json.dumps(model.config.as_dict(), sort_keys=True)}", err=True)
    if port is None:
        serve_stdio(engine, sys.stdin, sys.stdout)
        return
    try:
        server = ServeServer((host, port), engine)
    except OSError as exc:
        _fail(2, str(exc))
    click.echo(f"listening on {server.server_address[0]}:{server.server_address[1]}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


if __name__ == "__main__":
    main()

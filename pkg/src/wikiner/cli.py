"""Command-line entry points.

Subcommands: ingest, label-propagate, train-disambiguator, train,
annotate, evaluate, sweep, serve.  Report-producing commands write a TSV
and a rendered PNG side by side under --output-dir.
"""

from __future__ import annotations

import json
import os
import sys

import click
import yaml

from . import entitylinker as linker_mod
from . import neural as neural_mod
from . import pipeline as pipe_mod
from . import reports as reports_mod
from . import wikigraph as wiki_mod
from .corpus import parse_corpus, write_corpus


def tagger_config_from_dict(raw: dict) -> neural_mod.TaggerConfig:
    raw = dict(raw or {})
    char_raw = raw.pop("char_encoder", {})
    char_cfg = neural_mod.CharEncoderConfig(
        kind=char_raw.get("kind", "conv"),
        char_dim=char_raw.get("char_dim", 50),
        conv_filters=char_raw.get("conv_filters", 30),
        conv_width=char_raw.get("conv_width", 3),
        rnn_hidden=char_raw.get("rnn_hidden", 100),
    )
    fields = {k: raw[k] for k in ("layers", "hidden", "dropout", "epochs", "batch_size",
                                  "learning_rate", "beta1", "beta2", "scheme") if k in raw}
    features = tuple(raw.get("features", ()))
    return neural_mod.TaggerConfig(char_encoder=char_cfg, features=features, **fields)


def _load_yaml(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


@click.group()
def main():
    """Knowledge-grounded named entity recognition toolkit."""


@main.command()
@click.option("--pages", "pages_path", required=True, type=click.Path(exists=True),
              help="JSONL page records, or a MediaWiki XML export with --xml.")
@click.option("--xml", "is_xml", is_flag=True, help="Treat --pages as MediaWiki XML.")
@click.option("--seeds", "seeds_path", type=click.Path(exists=True),
              help="Optional seed labels (node-id TAB label).")
@click.option("--output", "out_path", required=True, type=click.Path())
def ingest(pages_path, is_xml, seeds_path, out_path):
    """Build the statistics snapshot from a dump."""
    if is_xml:
        with open(pages_path, "rb") as fh:
            records = list(wiki_mod.import_xml_dump(fh))
    else:
        with open(pages_path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    graph, stats, index, report = wiki_mod.import_dump(records)
    seeds = {}
    if seeds_path:
        with open(seeds_path, encoding="utf-8") as fh:
            seeds = wiki_mod.read_seeds(fh)
    wiki_mod.save_snapshot(out_path, graph, stats, index, seeds)
    click.echo(f"pages={report.pages} articles={report.articles} categories={report.categories} "
               f"redirects={report.redirects} dropped_links={report.dropped_links} "
               f"dangling_parents={report.dangling_parents}")
    click.echo(f"snapshot written to {out_path}")


@main.command("label-propagate")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--seeds", "seeds_path", type=click.Path(exists=True),
              help="Seed labels to import before propagating.")
@click.option("--export-resolved", "resolved_path", type=click.Path(),
              help="Write resolved labels as node-id TAB label.")
@click.option("--output-dir", default="reports", type=click.Path())
def label_propagate(snapshot, seeds_path, resolved_path, output_dir):
    """Propagate seed labels through the category graph and report coverage."""
    graph, stats, index, seeds, disamb = wiki_mod.load_snapshot(snapshot)
    if seeds_path:
        with open(seeds_path, encoding="utf-8") as fh:
            seeds = wiki_mod.read_seeds(fh)
        wiki_mod.save_snapshot(snapshot, graph, stats, index, seeds, disamb)
    labeling = wiki_mod.propagate_labels(graph, seeds)
    report = wiki_mod.coverage_report(graph, labeling)
    os.makedirs(output_dir, exist_ok=True)
    tsv = os.path.join(output_dir, "coverage.tsv")
    png = os.path.join(output_dir, "coverage.png")
    reports_mod.write_coverage_tsv(report, tsv)
    reports_mod.render_coverage_figure(report, png)
    if resolved_path:
        with open(resolved_path, "w", encoding="utf-8") as fh:
            for nid in sorted(labeling.resolved):
                label = labeling.resolved[nid].label
                fh.write(f"{nid}\t{label if label is not None else wiki_mod.NONE_LABEL}\n")
    click.echo(f"{report.articles_labeled}/{report.articles_total} articles labeled "
               f"({report.percent_labeled:.1f}%); reports in {output_dir}")


@main.command("train-disambiguator")
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--pages", "pages_path", required=True, type=click.Path(exists=True))
@click.option("--max-depth", default=6, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_disambiguator_cmd(snapshot, pages_path, max_depth, seed):
    """Fit the sense disambiguator from links in the dump; store it in the snapshot."""
    graph, stats, index, seeds, _ = wiki_mod.load_snapshot(snapshot)
    with open(pages_path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    train, val = linker_mod.harvest_training_samples(records, stats, index, graph, seed=seed)
    if not train:
        raise click.ClickException("no ambiguous linked anchors found; nothing to train on")
    model = linker_mod.train_disambiguator(train, max_depth=max_depth)
    correct = sum(1 for feats, y in val if (model.predict(feats) >= 0.5) == y)
    acc = correct / len(val) if val else float("nan")
    wiki_mod.save_snapshot(snapshot, graph, stats, index, seeds, model.to_json())
    click.echo(f"trained on {len(train)} samples; validation accuracy "
               f"{acc:.3f} on {len(val)} held-out samples")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--role", type=click.Choice(["main", "sub", "both"]), default="both",
              show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--output-dir", default="models", type=click.Path())
def train(config_path, corpus_path, role, seed, output_dir):
    """Train the main and/or subcategory tagger on a column-format corpus."""
    cfg = pipe_mod.PipelineConfig.load(config_path)
    tagger_cfg = tagger_config_from_dict(_load_yaml(config_path).get("tagger", {}))
    if not tagger_cfg.features:
        tagger_cfg = neural_mod.TaggerConfig(
            **{**tagger_cfg.__dict__, "features": tuple(cfg.features)})
    with open(corpus_path, encoding="utf-8") as fh:
        docs = parse_corpus(fh)
    fp = pipe_mod.load_feature_pipeline(cfg)
    embedding = None
    if cfg.embeddings:
        with open(cfg.embeddings, encoding="utf-8") as fh:
            embedding = neural_mod.EmbeddingTable.load_text(fh)
    contextual = neural_mod.ContextualTable.load(cfg.contextual) if cfg.contextual else None
    char_index = neural_mod.build_char_index(
        [s.tokens for doc in docs for s in doc.sentences])
    os.makedirs(output_dir, exist_ok=True)

    roles = ["main", "sub"] if role == "both" else [role]
    main_tags = pipe_mod.tag_vocabulary(docs, "main", tagger_cfg.scheme)
    for r in roles:
        layer_tags = main_tags if r == "main" else pipe_mod.tag_vocabulary(docs, "sub", tagger_cfg.scheme)
        instances = pipe_mod.build_instances(docs, fp, layer=r, scheme=tagger_cfg.scheme,
                                             parent_from_gold=(r == "sub"))
        model = neural_mod.init_tagger(
            tagger_cfg, layer_tags, fp.vocabularies, char_index, seed=seed,
            embedding=embedding, contextual=contextual, role=r,
            main_tags=main_tags if r == "sub" else ())
        losses = neural_mod.train_tagger(instances, model, seed=seed)
        out = os.path.join(output_dir, f"{r}.model")
        model.save(out)
        with open(os.path.join(output_dir, f"{r}_losses.tsv"), "w", encoding="utf-8") as fh:
            fh.write("epoch\tmean_nll\n")
            for i, loss in enumerate(losses, 1):
                fh.write(f"{i}\t{loss:.6f}\n")
        final = f"{losses[-1]:.4f}" if losses else "n/a"
        click.echo(f"{r} model: {len(instances)} sentences, final mean NLL {final} -> {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--text", "text", help="Annotate this literal text.")
@click.option("--input", "input_path", type=click.Path(exists=True),
              help="Raw text file, or column-format corpus with --pre-tokenized.")
@click.option("--pre-tokenized", is_flag=True,
              help="Input is column-format; reuse its tokenization verbatim.")
@click.option("--output", "out_path", type=click.Path(), help="Write column format here.")
def annotate(config_path, text, input_path, pre_tokenized, out_path):
    """Annotate text with entity spans."""
    if (text is None) == (input_path is None):
        raise click.ClickException("provide exactly one of --text or --input")
    pipeline = pipe_mod.Pipeline(pipe_mod.PipelineConfig.load(config_path))
    if text is None:
        with open(input_path, encoding="utf-8") as fh:
            if pre_tokenized:
                docs = [pipeline.annotate_document(d) for d in parse_corpus(fh)]
            else:
                docs = [pipeline.annotate_text(fh.read())]
    else:
        docs = [pipeline.annotate_text(text)]
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            write_corpus(docs, fh)
        click.echo(f"annotations written to {out_path}")
    else:
        write_corpus(docs, sys.stdout)


@main.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--output-dir", default="reports", type=click.Path())
def evaluate(pred_path, gold_path, output_dir):
    """Score predictions against gold annotations (column format both)."""
    with open(pred_path, encoding="utf-8") as fh:
        pred = parse_corpus(fh, strict=False)
    with open(gold_path, encoding="utf-8") as fh:
        gold = parse_corpus(fh, strict=False)
    report = pipe_mod.evaluate(pred, gold)
    os.makedirs(output_dir, exist_ok=True)
    tsv = os.path.join(output_dir, "eval_report.tsv")
    png = os.path.join(output_dir, "eval_report.png")
    reports_mod.write_eval_tsv(report, tsv)
    reports_mod.render_eval_figure(report, png)
    click.echo(f"exact F1 {report.exact_f1:.2f}  overlap F1 {report.overlap_f1:.2f}  "
               f"final {report.final_score:.2f}")
    click.echo(f"reports in {output_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True),
              help="YAML mapping of config name -> tagger overrides.")
@click.option("--folds", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--output-dir", default="reports", type=click.Path())
def sweep(config_path, corpus_path, grid_path, folds, seed, output_dir):
    """Cross-validate a grid of tagger configurations."""
    cfg = pipe_mod.PipelineConfig.load(config_path)
    base = _load_yaml(config_path).get("tagger", {})
    grid = _load_yaml(grid_path)
    configs = {}
    for name, overrides in grid.items():
        merged = {**base, **(overrides or {})}
        tc = tagger_config_from_dict(merged)
        if not tc.features:
            tc = neural_mod.TaggerConfig(**{**tc.__dict__, "features": tuple(cfg.features)})
        configs[name] = tc
    with open(corpus_path, encoding="utf-8") as fh:
        docs = parse_corpus(fh)
    fp = pipe_mod.load_feature_pipeline(cfg)
    embedding = None
    if cfg.embeddings:
        with open(cfg.embeddings, encoding="utf-8") as fh:
            embedding = neural_mod.EmbeddingTable.load_text(fh)
    instances = pipe_mod.build_instances(docs, fp, layer="main")
    tags = pipe_mod.tag_vocabulary(docs, "main")
    rows = pipe_mod.sweep(configs, instances, tags, fp.vocabularies, folds=folds,
                          seed=seed, embedding=embedding)
    os.makedirs(output_dir, exist_ok=True)
    reports_mod.write_sweep_tsv(rows, os.path.join(output_dir, "sweep_results.tsv"))
    reports_mod.render_sweep_figure(rows, os.path.join(output_dir, "sweep_results.png"))
    for row in rows:
        click.echo(f"{row.name}\t{row.mean_f1:.2f}")
    click.echo(f"reports in {output_dir}")


@main.command()
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Pipeline config enabling /api/annotate.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8570, show_default=True)
@click.option("--persist", is_flag=True, help="Write seed mutations back to the snapshot.")
def serve(snapshot, config_path, host, port, persist):
    """Run the HTTP service consumed by the labeling UI."""
    import uvicorn

    from .service import ServiceState, create_app

    pipeline = None
    if config_path:
        pipeline = pipe_mod.Pipeline(pipe_mod.PipelineConfig.load(config_path))
    state = ServiceState.from_snapshot(snapshot, pipeline=pipeline, persist=persist)
    uvicorn.run(create_app(state), host=host, port=port)


if __name__ == "__main__":
    main()

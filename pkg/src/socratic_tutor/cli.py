"""Command-line interface: dataset tooling, evaluation runs, and the server."""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from .dataset import (
    DatasetError,
    clean_candidates,
    compute_stats,
    DEFAULT_PREANNOTATION_TEMPLATE,
    Dataset,
    export_training,
    load_dataset,
    preannotate,
    save_dataset,
    split_dataset,
    training_example_to_json,
)
from .evaluation import (
    DEFAULT_RUBRIC,
    evaluate_turnwise,
    judge_turnwise,
    report_to_json,
    sample_turns,
)
from .llm import HttpBackend, LLMClient
from .prompting import default_prompt, load_prompt
from .validation import validate_conversation


@click.group()
def main() -> None:
    """Socratic mathematics tutoring toolkit."""


@main.group()
def dataset() -> None:
    """Dataset loading, statistics, splitting, cleaning and export."""


@dataset.command("validate")
@click.argument("path", type=click.Path(exists=True))
@click.option("--min-turns", default=2, show_default=True)
@click.option("--max-turns", default=15, show_default=True)
def dataset_validate(path: str, min_turns: int, max_turns: int) -> None:
    """Schema/reference validation plus per-conversation invariant checks."""
    try:
        ds = load_dataset(path)
    except DatasetError as exc:
        for violation in exc.violations:
            click.echo(f"ERROR {violation}")
        raise SystemExit(1)
    bad = 0
    for i, conv in enumerate(ds.conversations):
        for v in validate_conversation(
            conv, ds.problems, min_turns=min_turns, max_turns=max_turns
        ):
            click.echo(f"conversation[{i}] {v.kind.value}: {v.detail}")
            bad += 1
    click.echo(f"{len(ds.conversations)} conversations, {bad} violations")
    if bad:
        raise SystemExit(1)


@dataset.command("stats")
@click.argument("path", type=click.Path(exists=True))
def dataset_stats(path: str) -> None:
    stats = compute_stats(load_dataset(path))
    click.echo(json.dumps(dataclasses.asdict(stats), indent=2))


@dataset.command("split")
@click.argument("path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--out-dir", default=".", show_default=True)
def dataset_split(path: str, seed: int, ratios: str, out_dir: str) -> None:
    parts = tuple(float(r) for r in ratios.split(","))
    train, dev, test = split_dataset(load_dataset(path), parts, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", train), ("dev", dev), ("test", test)):
        target = out / f"{name}.json"
        save_dataset(ds, target)
        click.echo(f"{target}: {len(ds.conversations)} conversations")


@dataset.command("preannotate")
@click.option("--problems", "problems_path", required=True, type=click.Path(exists=True))
@click.option("--personas", default="naughty,self-confident,careless", show_default=True)
@click.option("--template", "template_path", type=click.Path(exists=True))
@click.option("--backend", "backend_url", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def dataset_preannotate(
    problems_path: str,
    personas: str,
    template_path: str | None,
    backend_url: str,
    seed: int,
    out_path: str,
) -> None:
    """Generate candidate dialogues for every problem in a dataset file."""
    ds = load_dataset(problems_path)
    template = (
        Path(template_path).read_text(encoding="utf-8")
        if template_path
        else DEFAULT_PREANNOTATION_TEMPLATE
    )
    llm = LLMClient(HttpBackend(backend_url))
    result = preannotate(
        list(ds.problems.values()), personas.split(","), template, llm, seed=seed
    )
    out = Dataset(
        problems=ds.problems,
        knowledge_points=ds.knowledge_points,
        conversations=result.conversations,
    )
    save_dataset(out, out_path)
    click.echo(
        f"{len(result.conversations)} conversations, {len(result.failures)} failures"
    )
    for failure in result.failures:
        click.echo(f"FAILED {failure.problem_id}: {failure.reason}", err=True)


@dataset.command("clean")
@click.argument("path", type=click.Path(exists=True))
@click.option("--min-turns", default=2, show_default=True)
@click.option("--max-turns", default=15, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def dataset_clean(path: str, min_turns: int, max_turns: int, out_path: str) -> None:
    ds = load_dataset(path)
    kept, report = clean_candidates(list(ds.conversations), min_turns, max_turns)
    save_dataset(
        Dataset(
            problems=ds.problems,
            knowledge_points=ds.knowledge_points,
            conversations=tuple(kept),
            split_tag=ds.split_tag,
        ),
        out_path,
    )
    click.echo(json.dumps(dataclasses.asdict(report), indent=2))


@dataset.command("export-training")
@click.argument("path", type=click.Path(exists=True))
@click.option("--prompt", "prompt_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def dataset_export_training(path: str, prompt_path: str | None, out_path: str) -> None:
    """Write per-turn training examples as JSONL (one example per line)."""
    ds = load_dataset(path)
    prompt = load_prompt(prompt_path) if prompt_path else default_prompt()
    examples = export_training(ds, prompt)
    with open(out_path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(training_example_to_json(example), ensure_ascii=False))
            fh.write("\n")
    click.echo(f"{len(examples)} training examples -> {out_path}")


@main.group(name="eval")
def eval_group() -> None:
    """Turn-by-turn metric runs and judge scoring."""


def _select_split(ds: Dataset, split: str, seed: int) -> Dataset:
    if split == "all":
        return ds
    if ds.split_tag == split:
        return ds
    train, dev, test = split_dataset(ds, (0.8, 0.1, 0.1), seed)
    return {"train": train, "dev": dev, "test": test}[split]


@eval_group.command("run")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", type=click.Choice(["train", "dev", "test", "all"]))
@click.option("--backend", "backend_url", default=None)
@click.option("--echo", "use_echo", is_flag=True, help="Score the gold replies against themselves (sanity run, no backend needed).")
@click.option("--seed", default=0, show_default=True)
@click.option("--prompt", "prompt_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_run(
    dataset_path: str,
    split: str,
    backend_url: str | None,
    use_echo: bool,
    seed: int,
    prompt_path: str | None,
    out_path: str,
) -> None:
    ds = _select_split(load_dataset(dataset_path), split, seed)
    prompt = load_prompt(prompt_path) if prompt_path else default_prompt()
    if use_echo:
        from .testing import gold_echo_backend

        llm = LLMClient(gold_echo_backend(ds, prompt))
    elif backend_url:
        llm = LLMClient(HttpBackend(backend_url))
    else:
        click.echo("either --backend or --echo is required", err=True)
        raise SystemExit(2)
    report = evaluate_turnwise(ds, prompt, llm)
    Path(out_path).write_text(
        json.dumps(report_to_json(report), ensure_ascii=False, indent=2),
        encoding="utf-8",
    )
    click.echo(
        f"{report.n_turns} turns scored, {report.n_failed} failed; "
        f"B-1 {report.corpus.bleu[0]:.4f} R-L {report.corpus.rouge.rl:.4f} "
        f"METEOR {report.corpus.meteor:.4f}"
    )


@eval_group.command("judge")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", type=click.Choice(["train", "dev", "test", "all"]))
@click.option("--samples", default=150, show_default=True)
@click.option("--rubric", "rubric_path", type=click.Path(exists=True))
@click.option("--backend", "backend_url", required=True)
@click.option("--seed", default=0, show_default=True)
@click.option(
    "--with-reference/--no-reference",
    default=True,
    show_default=True,
    help="Show the judge the gold reply alongside the candidate.",
)
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_judge(
    dataset_path: str,
    split: str,
    samples: int,
    rubric_path: str | None,
    backend_url: str,
    seed: int,
    with_reference: bool,
    out_path: str,
) -> None:
    """Judge gold replies from sampled turns (a calibration run for the rubric)."""
    from .evaluation import RUBRIC_VERSION

    ds = _select_split(load_dataset(dataset_path), split, seed)
    rubric = (
        Path(rubric_path).read_text(encoding="utf-8") if rubric_path else DEFAULT_RUBRIC
    )
    llm = LLMClient(HttpBackend(backend_url))
    sampled = sample_turns(ds, samples, seed)
    report = judge_turnwise(
        ds, default_prompt(), sampled, rubric, llm, with_reference=with_reference
    )
    Path(out_path).write_text(
        json.dumps(
            {
                "rubric_version": "custom" if rubric_path else RUBRIC_VERSION,
                "with_reference": with_reference,
                "n_samples": report.n_samples,
                "n_failed": report.n_failed,
                "mean_reliability": report.mean_reliability,
                "mean_socratic": report.mean_socratic,
                "scores": [dataclasses.asdict(s) for s in report.scores],
            },
            ensure_ascii=False,
            indent=2,
        ),
        encoding="utf-8",
    )
    click.echo(
        f"{report.n_samples} judged, {report.n_failed} failed; "
        f"reliability {report.mean_reliability:.2f} socratic {report.mean_socratic:.2f}"
    )


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True))
def serve(config_path: str | None) -> None:
    """Run the tutoring HTTP service."""
    import uvicorn

    from .service import create_app, load_config

    config = load_config(config_path)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)


if __name__ == "__main__":
    sys.exit(main())

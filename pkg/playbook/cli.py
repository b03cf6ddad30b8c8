#!/usr/bin/env python
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable

import pandas as pd
from rich.traceback import install

from .alignment import align_dataset, learn_template, load_template, save_template
from .codebook import build_histograms, export_playbook
from .config import PlaybookConfig, load_config
from .deeptree import (
    DeepDecisionTree,
    evaluate_logloss,
    export_training,
    load_tree,
    save_tree,
    train,
)
from .errors import PlaybookError
from .report import EvaluationReport, render
from .simulator import build_models, evaluate_schedule, export_simulation, match_results
from .strategy import export_strategy, score_plays, strategy_report
from .trajectory import (
    Dataset,
    baseline_predict,
    fit_baseline,
    generate_synthetic,
    load_plays,
    mean_log_loss,
    save_plays,
)
from .utils import console, get_logger, human_duration, new_table, set_verbose

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

PLAYS_FILE = "plays.jsonl"
ALIGNED_FILE = "aligned.jsonl"
TEMPLATE_FILE = "template.json"
TREE_FILE = "tree.json"
EVALUATION_CSV = "evaluation.csv"
MANIFEST_FILE = "run_manifest.json"
REPORT_FILE = "report.html"

install(console=console, show_locals=True, width=console.width)

log = get_logger()

# flag -> TreeConfig field
TREE_FLAGS: dict[str, tuple[str, type, str]] = {
    "--layers": ("n_layers", int, "total depth including root split and leaves"),
    "--branching": ("branching", int, "clusters per decision layer, last repeats"),
    "--codebook-size": ("target_codebook_size", int, "target number of leaves"),
    "--beta": ("beta", float, "soft routing temperature (default: estimated)"),
    "--eta-alpha": ("eta_alpha", float, "role weight step size"),
    "--eta-pi": ("eta_pi", float, "leaf classifier step size"),
    "--epochs": ("epochs", int, "epochs per layer"),
    "--batch-size": ("batch_size", int, "minibatch size"),
    "--l2": ("l2", float, "leaf weight penalty"),
    "--refine-iters": ("refine_iters", int, "weighted k-means steps per split"),
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument(
        "-s", "--save", action="store_true", help="save the output as HTML"
    )
    common.add_argument("--seed", type=int, help="override every random seed")
    common.add_argument("--config", type=Path, help="JSON config or run manifest")
    common.add_argument(
        "--out", type=Path, default=Path("out"), help="output directory"
    )
    return common


def _tree_parser() -> argparse.ArgumentParser:
    tree = argparse.ArgumentParser(add_help=False)
    for flag, (_, kind, help_text) in TREE_FLAGS.items():
        nargs = "+" if flag == "--branching" else None
        tree.add_argument(flag, type=kind, nargs=nargs, help=help_text)
    return tree


def get_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="""Learn a playbook of scoring methods from shot trajectories.
Each subcommand reads and writes files in the --out directory and records a
run manifest there.""",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    common, tree = _common_parser(), _tree_parser()
    subparsers = parser.add_subparsers(
        dest="command", title="Subcommands", required=True
    )

    subparsers.add_parser(
        "generate", parents=[common], help="generate a synthetic season"
    )

    align = subparsers.add_parser(
        "align", parents=[common], help="learn a formation template and align roles"
    )
    align.add_argument("--plays", type=Path, help=f"default: <out>/{PLAYS_FILE}")
    align.add_argument("--template", type=Path, help="use this template instead")

    train_parser = subparsers.add_parser(
        "train", parents=[common, tree], help="train the decision tree"
    )
    train_parser.add_argument(
        "--plays", type=Path, help=f"default: <out>/{ALIGNED_FILE}"
    )

    evaluate = subparsers.add_parser(
        "evaluate",
        parents=[common, tree],
        help="held-out log loss of trees and the handcrafted baseline",
    )
    evaluate.add_argument("--plays", type=Path, help=f"default: <out>/{ALIGNED_FILE}")
    evaluate.add_argument("--split-seed", type=int)
    evaluate.add_argument("--train-frac", type=float)
    evaluate.add_argument("--compare-layers", type=int, nargs="+")

    for name, help_text in [
        ("codebook", "playbook trajectories and expected-goal histograms"),
        ("strategy", "offensive and defensive strategy distributions"),
    ]:
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("--plays", type=Path, help=f"default: <out>/{ALIGNED_FILE}")
        sub.add_argument("--tree", type=Path, help=f"default: <out>/{TREE_FILE}")
        if name == "strategy":
            sub.add_argument(
                "--use-outcome",
                action="store_true",
                help="score shots by their outcome",
            )

    simulate = subparsers.add_parser(
        "simulate", parents=[common, tree], help="simulate held-out matches"
    )
    simulate.add_argument("--plays", type=Path, help=f"default: <out>/{ALIGNED_FILE}")
    simulate.add_argument(
        "--tree", type=Path, help="trained tree (default: train on the split)"
    )
    simulate.add_argument("--split-seed", type=int)
    simulate.add_argument("--train-frac", type=float)
    simulate.add_argument("--runs", type=int, help="simulations per match")
    return parser.parse_args(argv)


def _flag_values(args: argparse.Namespace, names: dict[str, str]) -> dict[str, Any]:
    """Config field -> value for every flag given on the command line."""
    values: dict[str, Any] = {}
    for dest, name in names.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[name] = tuple(value) if isinstance(value, list) else value
    return values


def apply_overrides(config: PlaybookConfig, args: argparse.Namespace) -> PlaybookConfig:
    """Fold command line flags into the config so the manifest records them."""
    if args.seed is not None:
        config = config.with_seed(args.seed)
    tree_flags = {f[2:].replace("-", "_"): name for f, (name, *_) in TREE_FLAGS.items()}
    evaluation_flags = {
        "train_frac": "train_frac",
        "split_seed": "split_seed",
        "compare_layers": "compare_layers",
    }
    return replace(
        config,
        tree=replace(config.tree, **_flag_values(args, tree_flags)),
        evaluation=replace(
            config.evaluation, **_flag_values(args, evaluation_flags)
        ),
        simulation=replace(
            config.simulation, **_flag_values(args, {"runs": "n_runs"})
        ),
    )


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class Run:
    """One subcommand invocation: its configuration and the files it touched."""

    command: str
    args: argparse.Namespace
    config: PlaybookConfig
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)

    @property
    def out(self) -> Path:
        return Path(self.args.out)

    def input(self, path: Path | None, default: str) -> Path:
        resolved = Path(path) if path else self.out / default
        self.inputs.append(resolved)
        return resolved

    def wrote(self, *paths: Path) -> None:
        self.outputs.extend(paths)

    def plays(self, default: str = ALIGNED_FILE) -> Dataset:
        return load_plays(self.input(self.args.plays, default))

    def tree(self) -> DeepDecisionTree:
        return load_tree(self.input(self.args.tree, TREE_FILE))

    def split(self, dataset: Dataset) -> tuple[Dataset, Dataset]:
        evaluation = self.config.evaluation
        train_set, test_set = dataset.split_by_match(
            evaluation.train_frac, evaluation.split_seed
        )
        log.info("Split %d / %d plays by match", len(train_set), len(test_set))
        return train_set, test_set


def cmd_generate(run: Run) -> None:
    dataset = generate_synthetic(run.config.synthetic)
    run.wrote(save_plays(dataset, run.out / PLAYS_FILE))
    counts = dataset.by_play_type()
    table = new_table(
        "plays", "matches", "teams", "goal rate", *(t.value for t in counts)
    )
    table.add_row(
        str(len(dataset)),
        str(len(dataset.match_ids)),
        str(len(dataset.team_ids)),
        f"{dataset.labels.mean():.3f}" if len(dataset) else "-",
        *(str(len(idx)) for idx in counts.values()),
    )
    console.print(table)


def cmd_align(run: Run) -> None:
    dataset = run.plays(PLAYS_FILE)
    if run.args.template:
        template = load_template(run.input(run.args.template, TEMPLATE_FILE))
    else:
        settings = run.config.alignment
        template = learn_template(dataset, settings.max_iters, settings.tol)
    aligned = align_dataset(dataset, template)
    run.wrote(
        save_template(template, run.out / TEMPLATE_FILE),
        save_plays(aligned, run.out / ALIGNED_FILE),
    )
    cost = f"{template.final_cost:.2f}"
    row = [str(len(aligned)), str(template.iterations_run), cost]
    console.print(new_table("plays", "iterations", "final cost", rows=[row]))


def cmd_train(run: Run) -> None:
    tree = train(run.plays(), run.config.tree)
    run.wrote(save_tree(tree, run.out / TREE_FILE), *export_training(tree, run.out))
    console.print(render(tree))


def cmd_evaluate(run: Run) -> None:
    train_set, test_set = run.split(run.plays())
    tree_config = run.config.tree
    layers = run.config.evaluation.compare_layers

    baseline = baseline_predict(fit_baseline(train_set), test_set)
    baseline_loss = mean_log_loss(test_set.labels, baseline)
    rows = [("logistic regression (handcrafted)", 0, baseline_loss)]
    for n_layers in layers:
        tree = train(train_set, replace(tree_config, n_layers=n_layers))
        loss = evaluate_logloss(tree, test_set)
        rows.append((f"decision tree with {n_layers} layers", n_layers, loss))
        log.info("%d layers: log loss %.4f", n_layers, loss)

    frame = pd.DataFrame(rows, columns=["experiment", "n_layers", "mean_log_loss"])
    frame["n_train"] = len(train_set)
    frame["n_test"] = len(test_set)
    path = run.out / EVALUATION_CSV
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    run.wrote(path)
    report = EvaluationReport(
        tuple((name, loss) for name, _, loss in rows), len(train_set), len(test_set)
    )
    console.print(render(report))


def cmd_codebook(run: Run) -> None:
    dataset, tree = run.plays(), run.tree()
    playbook = build_histograms(tree, dataset, run.config.histogram)
    run.wrote(*export_playbook(playbook.elements, run.out))
    console.print(render(playbook))


def cmd_strategy(run: Run) -> None:
    dataset, tree = run.plays(), run.tree()
    scored = score_plays(tree, dataset, use_outcome=run.args.use_outcome)
    report = strategy_report(scored, tree.n_leaves)
    run.wrote(export_strategy(report.distributions, run.out))
    console.print(render(report))


def cmd_simulate(run: Run) -> None:
    train_set, test_set = run.split(run.plays())
    tree = run.tree() if run.args.tree else train(train_set, run.config.tree)
    config = run.config.simulation
    models = build_models(train_set, tree, config)
    report = evaluate_schedule(models, match_results(test_set), config)
    run.wrote(*export_simulation(report, run.out))
    console.print(render(report))


COMMANDS: dict[str, Callable[[Run], None]] = {
    "generate": cmd_generate,
    "align": cmd_align,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "codebook": cmd_codebook,
    "strategy": cmd_strategy,
    "simulate": cmd_simulate,
}


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    arguments: dict[str, Any]
    config: dict[str, Any]
    seed: int | None
    inputs: dict[str, str]
    outputs: dict[str, str]
    started_at: str
    duration_s: float
    duration: str
    status: str = "ok"

    def write(self, out: Path) -> Path:
        out.mkdir(parents=True, exist_ok=True)
        path = out / MANIFEST_FILE
        path.write_text(json.dumps(asdict(self), indent=2))
        return path


def _checksums(paths: Sequence[Path]) -> dict[str, str]:
    return {str(p): sha256(p) for p in paths if p.is_file()}


@contextmanager
def handle_save(save: bool, out: Path) -> Iterator[None]:
    yield
    if save:
        out.mkdir(parents=True, exist_ok=True)
        console.save_html(str(out / REPORT_FILE))
        print(f"Saved output as {out / REPORT_FILE}", file=sys.stderr)


def error_line(exc: PlaybookError) -> str:
    message = " ".join(str(exc).split())
    return f"playbook: error kind={exc.kind} code={exc.exit_code} message={message}"


def main(argv: Sequence[str] | None = None) -> int:
    args = get_args(argv)
    set_verbose(args.verbose)
    started_at = datetime.now(timezone.utc).isoformat()
    start = time.perf_counter()
    run: Run | None = None
    status = "error"
    try:
        config = apply_overrides(load_config(args.config), args)
        run = Run(args.command, args, config)
        with handle_save(args.save, args.out):
            COMMANDS[args.command](run)
        status = "ok"
    except PlaybookError as exc:
        print(error_line(exc), file=sys.stderr)
        status = f"error:{exc.kind}"
        return exc.exit_code
    finally:
        if run is not None:
            duration = time.perf_counter() - start
            manifest = RunManifest(
                subcommand=args.command,
                arguments={
                    k: str(v) if isinstance(v, Path) else v
                    for k, v in vars(args).items()
                },
                config=run.config.to_dict(),
                seed=args.seed,
                inputs=_checksums(run.inputs),
                outputs=_checksums(run.outputs),
                started_at=started_at,
                duration_s=duration,
                duration=human_duration(duration),
                status=status,
            )
            manifest.write(run.out)
            log.info("%s finished in %s", args.command, manifest.duration)
    return 0


if __name__ == "__main__":
    sys.exit(main())

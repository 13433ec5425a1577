"""Command-line entry point: ``judgecal {synth,judge,calibrate,rank,correlate}``.

Every command writes ``<output>.manifest.json`` next to its main output,
recording inputs (with SHA-256 digests), options, seed, tool version and an
output digest.

Exit codes: 0 ok, 2 bad input, 3 infeasible constraints, 4 solver did not
converge, 5 endpoint failure, 6 undefined metric.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelSet, RankingResult, WeightVector
from .errors import (
    EmptyInput,
    EndpointError,
    Infeasible,
    JudgecalError,
    NonConvergence,
    ParseError,
    Undefined,
    UnknownModel,
)
from .ingest import (
    TiePolicy,
    aggregate_preferences,
    human_reference_ranking,
    load_judgments,
    load_scores,
    save_judgments,
    save_scores,
)
from .judge import HttpChatClient, JudgeConfig, StubChatClient, load_tasks, run_matrix, save_transcripts
from .maxent import RelaxMode, SolverOptions, fit_weights
from .metrics import RankVector, kendall, pairwise_accuracy, spearman
from .ranking import calibrated_outcome, rank
from .synth import gen_world, sample_human, sample_scores

logger = logging.getLogger("judgecal")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGENCE = 4
EXIT_ENDPOINT = 5
EXIT_UNDEFINED = 6


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    outputs: dict = field(default_factory=dict)
    digest: str = ""

    def add_input(self, name: str, path) -> None:
        if path is not None:
            self.inputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def add_output(self, name: str, path) -> None:
        self.outputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def write(self, path: Path) -> None:
        h = hashlib.sha256()
        for name in sorted(self.outputs):
            h.update(f"{name}:{self.outputs[name]['sha256']}\n".encode())
        self.digest = h.hexdigest()
        _write_json(asdict(self), path)


def manifest_path(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.json")


def _write_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _load_weights(path: Path) -> WeightVector:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        models = ModelSet(obj["models"])
        by_id = dict(zip(obj["models"], obj["p"]))
        return WeightVector(models, [by_id[m] for m in models.ids], epsilon=obj.get("epsilon", 1e-8))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad weights file: {exc}", str(path)) from None


def _load_ranking(path: Path) -> RankingResult:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        rates = obj["win_rate"]
        models = ModelSet(rates)
        missing = [tuple(pair) for pair in obj.get("missing_pairs", [])]
        return RankingResult.from_win_rates(models, [rates[m] for m in models.ids], missing)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad ranking file: {exc}", str(path)) from None


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # one child seed per stream so streams never share random state
    scores_seed, human_seed = (int(s) for s in np.random.SeedSequence(args.seed).generate_state(2))
    world = gen_world(args.n, args.seed, args.ratio, args.length_bias, args.noise_sd)
    scores_path, judgments_path = out / "scores.jsonl", out / "judgments.jsonl"
    save_scores(sample_scores(world, args.prompts, scores_seed), scores_path)
    save_judgments(sample_human(world, args.judgments_per_pair, human_seed, args.tie_rate), judgments_path)
    truth_path = out / "truth.json"
    _write_json({"models": list(world.models.ids), "strength": list(world.strength)}, truth_path)
    manifest = RunManifest("synth", seed=args.seed, options={
        "n": args.n, "prompts": args.prompts, "judgments_per_pair": args.judgments_per_pair,
        "ratio": args.ratio, "length_bias": args.length_bias, "noise_sd": args.noise_sd,
        "tie_rate": args.tie_rate,
    })
    manifest.add_output("scores", scores_path)
    manifest.add_output("judgments", judgments_path)
    manifest.add_output("truth", truth_path)
    manifest.write(out / "manifest.json")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    models = load_scores(args.scores).models if args.scores else None
    js = load_judgments(args.judgments, models)
    pm = aggregate_preferences(js, TiePolicy(args.tie_policy))
    opts = SolverOptions(epsilon=args.epsilon, constraint_tolerance=args.tol, max_iterations=args.max_iter)
    relax = args.relax_mode if args.relax else None
    try:
        report = fit_weights(pm, opts, relax=relax)
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("hint: pass --relax to relax the constraints automatically", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(args.out)
    payload = report.to_json()
    payload["epsilon"] = opts.epsilon
    _write_json(payload, out)
    for c in report.dropped_constraints:
        logger.warning("dropped cyclic constraint %s", report.constraints.describe(c))
    manifest = RunManifest("calibrate", options={
        "tie_policy": args.tie_policy, "relax": args.relax, "relax_mode": args.relax_mode,
        "epsilon": args.epsilon, "tol": args.tol, "max_iter": args.max_iter,
    })
    manifest.add_input("scores", args.scores)
    manifest.add_input("judgments", args.judgments)
    manifest.add_output("weights", out)
    manifest.write(manifest_path(out))
    return EXIT_OK


def cmd_rank(args) -> int:
    table = load_scores(args.scores)
    if args.weights:
        weights = _load_weights(args.weights)
        for m in table.models:
            if m not in weights.models:
                raise UnknownModel(m, f"absent from {args.weights}")
    else:
        weights = WeightVector.uniform(table.models)
    result = rank(table, weights)
    for i, j in result.missing_pairs:
        print(f"warning: no contests between {i} and {j}", file=sys.stderr)
    out = Path(args.out)
    _write_json(result.to_json(), out)
    manifest = RunManifest("rank", options={"uniform_weights": not args.weights})
    manifest.add_input("scores", args.scores)
    manifest.add_input("weights", args.weights)
    manifest.add_output("ranking", out)
    manifest.write(manifest_path(out))
    return EXIT_OK


def cmd_correlate(args) -> int:
    ranking = _load_ranking(args.ranking)
    js = load_judgments(args.judgments, ranking.models)
    policy = TiePolicy(args.tie_policy)
    human = human_reference_ranking(js, policy)
    for m in human.flagged:
        print(f"warning: no human judgments involve {m}", file=sys.stderr)
    auto_rv, human_rv = RankVector.from_ranking(ranking), RankVector.from_ranking(human)
    report = {
        "spearman": spearman(auto_rv, human_rv),
        "kendall": kendall(auto_rv, human_rv),
        "accuracy": None,
        "n": ranking.models.n,
    }
    if args.scores:
        table = load_scores(args.scores, ranking.models)
        weights = _load_weights(args.weights) if args.weights else WeightVector.uniform(table.models)
        outcomes = [calibrated_outcome(r, weights) for r in table.records]
        report["accuracy"] = pairwise_accuracy(outcomes, js)
    out = Path(args.out)
    _write_json(report, out)
    manifest = RunManifest("correlate", options={"tie_policy": args.tie_policy})
    manifest.add_input("ranking", args.ranking)
    manifest.add_input("judgments", args.judgments)
    manifest.add_input("scores", args.scores)
    manifest.add_input("weights", args.weights)
    manifest.add_output("report", out)
    manifest.write(manifest_path(out))
    return EXIT_OK


def cmd_judge(args) -> int:
    tasks = load_tasks(args.tasks)
    cfg = JudgeConfig(
        endpoint_url=args.endpoint,
        judge_model_name=args.judge_model,
        temperature=args.temperature,
        max_parallel=args.max_parallel,
        swap_orders=args.swap_orders,
        retries=args.retries,
        timeout=args.timeout,
        backoff=args.backoff,
    )
    client = StubChatClient() if args.stub else HttpChatClient(cfg)
    try:
        result = run_matrix(tasks, cfg, client)
    finally:
        if not args.stub:
            client.close()
    out = Path(args.out)
    out.write_text("".join(json.dumps(r.to_json()) + "\n" for r in result.records), encoding="utf-8")
    transcripts_path = out.with_name(out.name + ".transcripts.jsonl")
    skips_path = out.with_name(out.name + ".skips.json")
    save_transcripts(result.transcripts, transcripts_path)
    _write_json({"skipped": [s.to_json() for s in result.skipped],
                 "failed_tasks": list(result.failed_tasks)}, skips_path)
    for s in result.skipped:
        print(f"warning: skipped {s.prompt_id} ({s.model_a} vs {s.model_b}): {s.reason}", file=sys.stderr)
    manifest = RunManifest("judge", options={
        "endpoint": "stub" if args.stub else args.endpoint, "judge_model": args.judge_model,
        "temperature": args.temperature, "swap_orders": args.swap_orders,
        "max_parallel": args.max_parallel, "retries": args.retries,
    })
    manifest.add_input("tasks", args.tasks)
    manifest.add_output("scores", out)
    manifest.add_output("transcripts", transcripts_path)
    manifest.add_output("skips", skips_path)
    manifest.write(manifest_path(out))
    if tasks and len(result.failed_tasks) == len(tasks):
        print("error: every task failed", file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="judgecal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world (scores + human judgments)")
    p.add_argument("--n", type=int, default=8, help="number of models")
    p.add_argument("--prompts", type=int, default=40, help="judged prompts per model pair")
    p.add_argument("--judgments-per-pair", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=1.3, help="strength ratio between neighbours")
    p.add_argument("--length-bias", type=float, default=0.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--tie-rate", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit maximum-entropy strength weights")
    p.add_argument("--judgments", required=True)
    p.add_argument("--scores", help="score table; fixes the model set so unjudged models get weights")
    p.add_argument("--tie-policy", choices=[t.value for t in TiePolicy], default="split")
    p.add_argument("--relax", action="store_true", help="relax infeasible constraints instead of failing")
    p.add_argument("--relax-mode", choices=[m.value for m in RelaxMode], default="scale")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rank", help="rank models by calibrated win rate")
    p.add_argument("--scores", required=True)
    p.add_argument("--weights", help="weights JSON; uniform weights (raw ranking) when omitted")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("correlate", help="compare a ranking with the human reference")
    p.add_argument("--ranking", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--scores", help="also report pairwise accuracy of these contests")
    p.add_argument("--weights")
    p.add_argument("--tie-policy", choices=[t.value for t in TiePolicy], default="split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("judge", help="score tasks with a judge endpoint")
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--endpoint", default=JudgeConfig.endpoint_url)
    p.add_argument("--judge-model", default=JudgeConfig.judge_model_name)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--swap-orders", action="store_true")
    p.add_argument("--max-parallel", type=int, default=4)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--backoff", type=float, default=1.0)
    p.add_argument("--stub", action="store_true", help="use the offline deterministic judge")
    p.set_defaults(func=cmd_judge)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        print(f"error: {exc} {exc.residuals}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except EndpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except Undefined as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (ParseError, EmptyInput, UnknownModel, JudgecalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: solve, gen-data, gen-vocab, eval, serve-baseline."""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .formal import FormalSystem, Problem, TermTree, parse_problem, parse_system, render_term, tokenize
from .hypergraph import (
    EdgeRow,
    SerializedGraph,
    SolutionHypergraph,
    build_hypergraph,
    difficulty_level,
    generate_step_samples,
    sample_to_json,
)
from .protocol import PredictorServer
from .reasoner import DEFAULT_GOAL_BUDGET_MS, DEFAULT_MATCH_BUDGET_MS
from .search import (
    FrequencyPredictor,
    OraclePredictor,
    Predictor,
    RandomPredictor,
    RemotePredictor,
    SearchStatus,
    pac_solve,
)
from .store import GIVEN, SOLVE_EQ

EXIT_OK = 0
EXIT_UNSOLVED = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[SOS]", "[EOS]", "[EMPTY]"]


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

def load_corpus(path: str | Path) -> tuple[FormalSystem, list[Problem]]:
    """A corpus directory holds system.json plus one JSON file per problem."""
    root = Path(path)
    system = parse_system((root / "system.json").read_text())
    problems = []
    for pfile in sorted(root.glob("*.json")):
        if pfile.name == "system.json":
            continue
        problems.append(parse_problem(pfile.read_text(), system))
    problems.sort(key=lambda p: p.problem_id)
    return system, problems


def load_samples(path: str | Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def row_to_graph(row: dict) -> SerializedGraph:
    return SerializedGraph(
        node_tokens=[list(toks) for toks in row["nodes"]],
        edge_rows=[EdgeRow(list(e["values"]), list(e["pe"]), list(e["se"])) for e in row["edges"]],
        goal_tokens=list(row["goal"]),
    )


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

def make_predictor(
    spec: str,
    system: FormalSystem,
    problem: Problem | None = None,
    corpus_problems: list[Problem] | None = None,
    seed: int = 0,
) -> Predictor:
    if spec == "random":
        return RandomPredictor(system.num_theorems, seed)
    if spec == "freq":
        return FrequencyPredictor.from_corpus(corpus_problems or [], system)
    if spec == "oracle":
        return OraclePredictor(problem, system)
    if spec.startswith("remote:"):
        return RemotePredictor(spec[len("remote:"):], [t.name for t in system.theorems])
    raise ValueError(f"unknown predictor {spec!r}")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    tpa: float | None = None
    pssr: float | None = None
    per_level: dict[str, float] = field(default_factory=dict)
    counts: dict[str, tuple[int, int]] = field(default_factory=dict)
    wall_time: float = 0.0

    def lines(self) -> list[str]:
        out = []
        if self.tpa is not None:
            out.append(f"TPA {self.tpa:.2f}%")
        if self.pssr is not None:
            solved, total = self.counts.get("total", (0, 0))
            out.append(f"PSSR {self.pssr:.2f}% ({solved}/{total})")
            for level in sorted(self.per_level):
                s, t = self.counts[level]
                out.append(f"  {level} {self.per_level[level]:.2f}% ({s}/{t})")
        out.append(f"wall time {self.wall_time:.2f}s")
        return out


def top_k_indices(scores: list[float], k: int) -> list[int]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


def eval_tpa(samples: list[dict], predictor: Predictor, k: int, theorems: list[str]) -> float:
    """A sample is correct iff the top-k scored theorems intersect its truth."""
    if not samples:
        raise ValueError("empty sample set")
    correct = 0
    for row in samples:
        truth = set(row["truth"])
        if isinstance(predictor, OraclePredictor):
            scores = predictor.score_sample(truth)
        else:
            scores = predictor.score(row_to_graph(row))
        if any(theorems[i] in truth for i in top_k_indices(scores, k)):
            correct += 1
    return 100.0 * correct / len(samples)


def eval_pssr(
    problems: list[Problem],
    system: FormalSystem,
    predictor_spec: str,
    strategy: str,
    k: int,
    timeout_s: float,
    seed: int = 0,
    match_budget_ms: float = DEFAULT_MATCH_BUDGET_MS,
    goal_budget_ms: float = DEFAULT_GOAL_BUDGET_MS,
) -> EvalReport:
    start = time.monotonic()
    shared: Predictor | None = None
    if predictor_spec != "oracle":
        shared = make_predictor(predictor_spec, system, corpus_problems=problems, seed=seed)
    solved_by_level: dict[str, int] = {}
    total_by_level: dict[str, int] = {}
    solved_total = 0
    try:
        for problem in problems:
            predictor = shared or make_predictor("oracle", system, problem=problem)
            result = pac_solve(
                problem, system, predictor,
                strategy=strategy, k=k, timeout_s=timeout_s, seed=seed,
                match_budget_ms=match_budget_ms, goal_budget_ms=goal_budget_ms,
            )
            level = difficulty_level(max(problem.annotated_length, 1))
            total_by_level[level] = total_by_level.get(level, 0) + 1
            if result.status is SearchStatus.SOLVED:
                solved_total += 1
                solved_by_level[level] = solved_by_level.get(level, 0) + 1
    finally:
        if shared is not None:
            shared.close()
    report = EvalReport(wall_time=time.monotonic() - start)
    total = len(problems)
    report.pssr = 100.0 * solved_total / total if total else 0.0
    report.counts["total"] = (solved_total, total)
    for level, t in total_by_level.items():
        s = solved_by_level.get(level, 0)
        report.per_level[level] = 100.0 * s / t
        report.counts[level] = (s, t)
    return report


# ---------------------------------------------------------------------------
# Solution rendering
# ---------------------------------------------------------------------------

def format_value(value) -> str:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    return repr(float(value))


def render_solution(hypergraph: SolutionHypergraph, system: FormalSystem, value=None) -> str:
    """Human-readable numbered steps, pruned to goal ancestors."""
    if hypergraph.goal_condition_id is None:
        raise ValueError("goal not reached; nothing to render")
    producer = {}
    for edge in hypergraph.edges:
        for cid in edge.conclusions:
            producer[cid] = edge
    queue = [hypergraph.goal_condition_id]
    needed = []
    seen = set()
    while queue:
        cid = queue.pop()
        edge = producer.get(cid)
        if edge is None or edge.label in seen:
            continue
        seen.add(edge.label)
        if edge.label.theorem not in (GIVEN, SOLVE_EQ):
            needed.append(edge)
        queue.extend(edge.premises)
    needed.sort(key=lambda e: (e.label.step, min(e.conclusions)))
    nodes = {c.cid: c for c in hypergraph.nodes}
    lines = []
    for i, edge in enumerate(needed, start=1):
        binding = ", ".join(f"{v}={p}" for v, p in edge.label.binding)
        premises = ", ".join(render_term(nodes[p].body, system) for p in sorted(edge.premises))
        conclusions = ", ".join(render_term(nodes[c].body, system) for c in sorted(edge.conclusions))
        lines.append(
            f"{i}. By {edge.label.theorem} [{binding}], from ({premises}) we get ({conclusions})."
        )
    target = render_term(hypergraph.goal.target, system)
    if hypergraph.goal.kind == "Value":
        lines.append(f"Therefore {target} = {format_value(value)}.")
    else:
        lines.append(f"Therefore {target} holds.")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Vocabulary generation
# ---------------------------------------------------------------------------

def build_vocabulary(system: FormalSystem, problems: list[Problem]) -> list[str]:
    """Every token the corpus (or replay over it) can emit, plus specials."""
    tokens: set[str] = set()
    tokens.update(chr(ord("A") + i) for i in range(26))
    tokens.update(str(d) for d in range(10))
    tokens.update({".", "+", "-", "*", "/", "^"})
    tokens.update({"Equal", "Value", "Relation", GIVEN, SOLVE_EQ})
    tokens.update(system.predicates)
    for theorem in system.theorems:
        tokens.add(theorem.name)
        for pattern in theorem.premises + theorem.conclusions:
            tokens.update(tokenize(pattern))
    for problem in problems:
        for body in problem.conditions:
            tokens.update(tokenize(body))
        tokens.update(tokenize(TermTree(problem.goal.kind, (problem.goal.target,))))
    return SPECIAL_TOKENS + sorted(tokens)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_solve(args) -> int:
    system = parse_system(Path(args.system).read_text())
    problem = parse_problem(Path(args.problem).read_text(), system)
    corpus_problems = [problem]
    if args.predictor == "freq" and args.corpus:
        _, corpus_problems = load_corpus(args.corpus)
    predictor = make_predictor(args.predictor, system, problem=problem,
                               corpus_problems=corpus_problems, seed=args.seed)
    try:
        result = pac_solve(
            problem, system, predictor,
            strategy=args.strategy, k=args.beam_size, timeout_s=args.timeout,
            seed=args.seed, match_budget_ms=args.match_budget_ms,
            goal_budget_ms=args.goal_budget_ms,
        )
    finally:
        predictor.close()
    print(f"status: {result.status.value}")
    if result.status is SearchStatus.SOLVED:
        print("theorems: " + " -> ".join(result.theorem_seqs or ["(none needed)"]))
        if problem.goal.kind == "Value":
            print(f"value: {format_value(result.value)}")
    print(f"wall time: {result.wall_time:.2f}s, expanded: {result.nodes_expanded}")
    if result.status is SearchStatus.SOLVED and (args.render or args.dump_hypergraph):
        # rebuild the solved state by replaying the pruned sequence
        from .reasoner import ProblemState, apply_theorem, check_goal
        state = ProblemState.from_problem(problem, system,
                                          match_budget_ms=args.match_budget_ms,
                                          goal_budget_ms=args.goal_budget_ms)
        for name in result.theorem_seqs:
            apply_theorem(system.theorem(name), state)
        check_goal(state)
        hypergraph = build_hypergraph(state)
        if args.render:
            print(render_solution(hypergraph, system, state.solved_value))
        if args.dump_hypergraph:
            Path(args.dump_hypergraph).write_text(state.store.dump_ndjson())
    return EXIT_OK if result.status is SearchStatus.SOLVED else EXIT_UNSOLVED


def _cmd_gen_data(args) -> int:
    system, problems = load_corpus(args.corpus)
    lines = []
    for i, problem in enumerate(problems):
        for sample in generate_step_samples(problem, system, seed=args.seed + i):
            lines.append(sample_to_json(sample))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} samples from {len(problems)} problems to {args.out}")
    return EXIT_OK


def _cmd_gen_vocab(args) -> int:
    system, problems = load_corpus(args.corpus)
    vocab = build_vocabulary(system, problems)
    Path(args.out).write_text(json.dumps({"tokens": vocab}, indent=1) + "\n")
    print(f"wrote {len(vocab)} tokens to {args.out}")
    return EXIT_OK


def _cmd_eval_tpa(args) -> int:
    system, problems = load_corpus(args.corpus) if args.corpus else (parse_system(Path(args.system).read_text()), [])
    samples = load_samples(args.samples)
    predictor = make_predictor(args.predictor, system, corpus_problems=problems, seed=args.seed)
    try:
        tpa = eval_tpa(samples, predictor, args.k, [t.name for t in system.theorems])
    finally:
        predictor.close()
    print(f"TPA@{args.k} {tpa:.2f}% over {len(samples)} samples")
    return EXIT_OK


def _cmd_eval_pssr(args) -> int:
    system, problems = load_corpus(args.corpus)
    report = eval_pssr(
        problems, system, args.predictor,
        strategy=args.strategy, k=args.beam_size, timeout_s=args.timeout,
        seed=args.seed, match_budget_ms=args.match_budget_ms,
        goal_budget_ms=args.goal_budget_ms,
    )
    for line in report.lines():
        print(line)
    return EXIT_OK


def _cmd_serve_baseline(args) -> int:
    if args.kind == "freq" and args.corpus:
        system, problems = load_corpus(args.corpus)
        freq = FrequencyPredictor.from_corpus(problems, system)
        weights = freq.weights
    else:
        weights = None
    rng = random.Random(args.seed)

    def score_fn(theorems: list[str], payload: dict) -> list[float]:
        if args.kind == "random":
            return [rng.random() for _ in theorems]
        if weights is not None and len(weights) == len(theorems):
            return list(weights)
        return [1.0 / len(theorems)] * len(theorems)

    server = PredictorServer(args.addr, score_fn)
    print(f"listening on {server.bound_addr}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_budget_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--match-budget-ms", type=float, default=DEFAULT_MATCH_BUDGET_MS)
    p.add_argument("--goal-budget-ms", type=float, default=DEFAULT_GOAL_BUDGET_MS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geosolver",
                                     description="hypergraph-state geometry solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem file")
    p.add_argument("problem")
    p.add_argument("--system", required=True)
    p.add_argument("--strategy", choices=["rs", "bfs", "dfs", "bs", "gb"], default="gb")
    p.add_argument("--beam-size", type=int, default=1)
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--render", action="store_true")
    p.add_argument("--dump-hypergraph")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus")
    _add_budget_args(p)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("gen-data", help="generate theorem-prediction training pairs")
    p.add_argument("corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("gen-vocab", help="emit the token vocabulary for a corpus")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_vocab)

    ev = sub.add_parser("eval", help="evaluate TPA or PSSR")
    evsub = ev.add_subparsers(dest="metric", required=True)

    p = evsub.add_parser("tpa")
    p.add_argument("samples")
    p.add_argument("--system")
    p.add_argument("--corpus")
    p.add_argument("--predictor", default="random")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval_tpa)

    p = evsub.add_parser("pssr")
    p.add_argument("corpus")
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--strategy", choices=["rs", "bfs", "dfs", "bs", "gb"], default="gb")
    p.add_argument("--beam-size", type=int, default=1)
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--seed", type=int, default=0)
    _add_budget_args(p)
    p.set_defaults(fn=_cmd_eval_pssr)

    p = sub.add_parser("serve-baseline", help="serve a baseline predictor over the wire protocol")
    p.add_argument("kind", choices=["random", "freq"])
    p.add_argument("--addr", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus")
    p.set_defaults(fn=_cmd_serve_baseline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

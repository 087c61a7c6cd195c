"""Command-line front door for batch simulation, question answering and calibration.

Exit codes: 0 success, 1 input error (including unanswerable questions),
2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import calib
from .engine import EngineError, ParseError
from .facts import reconstruct
from .physics import Thresholds, load_thresholds
from .pipeline import reason
from .query import answer_all, answer_whatif, read_answers, write_answers
from .question import MULTIPLE_CHOICE, QuestionParseError, parse_question, read_questions, render_question, write_questions
from .scene import Frame, SceneTrace, TraceFormatError, dumps_trace, load_trace
from .sim import (
    SimError,
    dumps_truth,
    generate_questions,
    generate_whatif_questions,
    loads_config,
    loads_truth,
    oracle_answer,
    oracle_whatif,
    random_config,
    simulate,
)

log = logging.getLogger("eventqa")


class InputError(Exception):
    pass


INPUT_ERRORS = (InputError, TraceFormatError, ParseError, QuestionParseError, SimError, OSError, ValueError)


# --- reports ---------------------------------------------------------------


@dataclass
class RunReport:
    rows: list = field(default_factory=list)  # dicts: id, qtype, predicted, oracle, match

    def add(self, qid, qtype, predicted, oracle):
        self.rows.append({"id": qid, "qtype": qtype, "predicted": predicted, "oracle": oracle,
                          "match": predicted == oracle})

    @staticmethod
    def _family(qtype) -> str:
        return "descriptive" if qtype not in MULTIPLE_CHOICE else qtype

    def aggregates(self) -> dict:
        out: dict = {}
        for row in self.rows:
            fam = self._family(row["qtype"])
            agg = out.setdefault(fam, {"questions": 0, "correct": 0, "options": 0, "options_correct": 0})
            agg["questions"] += 1
            agg["correct"] += row["match"]
            pred, orc = row["predicted"].split(","), row["oracle"].split(",")
            if fam != "descriptive":
                agg["options"] += len(orc)
                agg["options_correct"] += sum(p == o for p, o in zip(pred, orc)) if len(pred) == len(orc) else 0
        for agg in out.values():
            agg["per_ques"] = agg["correct"] / agg["questions"]
            if agg["options"]:
                agg["per_opt"] = agg["options_correct"] / agg["options"]
        total = len(self.rows)
        out["overall"] = {"questions": total, "correct": sum(r["match"] for r in self.rows),
                          "per_ques": sum(r["match"] for r in self.rows) / total if total else 1.0}
        return out

    def to_json(self) -> str:
        return json.dumps({"questions": self.rows, "accuracy": self.aggregates()}, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = []
        for fam, agg in self.aggregates().items():
            line = f"{fam:15s} n={agg['questions']:5d}  per ques. {100 * agg['per_ques']:6.2f}%"
            if "per_opt" in agg:
                line += f"  per opt. {100 * agg['per_opt']:6.2f}%"
            lines.append(line)
        return "\n".join(lines) + "\n"


def compare_table(reports: dict) -> str:
    """Variant comparison: one row per question family, one column per report."""
    names = list(reports)
    fams = []
    for rep in reports.values():
        for fam in rep.aggregates():
            if fam not in fams:
                fams.append(fam)
    lines = ["family".ljust(24) + "".join(n.rjust(10) for n in names)]
    for fam in fams:
        for metric in ("per_ques", "per_opt"):
            cells = []
            for n in names:
                agg = reports[n].aggregates().get(fam, {})
                cells.append(f"{100 * agg[metric]:.1f}".rjust(10) if metric in agg else "-".rjust(10))
            if any(c.strip() != "-" for c in cells):
                label = f"{fam} {'per ques.' if metric == 'per_ques' else 'per opt.'}"
                lines.append(label.ljust(24) + "".join(cells))
    return "\n".join(lines) + "\n"


# --- helpers ---------------------------------------------------------------


def _write(path: Path, text: str, force: bool):
    if path.exists() and not force:
        raise InputError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def project(trace: SceneTrace, dims: int) -> SceneTrace:
    """Drop the depth coordinate of a 3D trace (dims=2); 2D traces cannot be lifted."""
    if dims == trace.dims:
        return trace
    if dims == 3:
        raise InputError("a 2D trace cannot be reasoned about in 3D")
    frames = tuple(
        Frame(f.t, tuple(replace(d, position=tuple(d.position[:2])) for d in f.detections)) for f in trace.frames
    )
    return SceneTrace(trace.video_id, 2, trace.frame_count, frames)


def _thresholds(args) -> Thresholds:
    return load_thresholds(args.thresholds) if args.thresholds else Thresholds()


def _scene_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _simulate_one(job):
    k, seed, params = job
    config = random_config(_scene_seed(seed, k), **params)
    config = replace(config, video_id=f"scene_{k:05d}")
    trace, gt = simulate(config)
    return config.video_id, dumps_trace(trace), dumps_truth(config, gt)


# --- commands --------------------------------------------------------------


def cmd_simulate(args) -> int:
    out = Path(args.out)
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        doc = json.loads(text)
        if "objects" in doc:
            config = loads_config(text)
            trace, gt = simulate(config)
            _write(out / f"{config.video_id}.trace.json", dumps_trace(trace), args.force)
            _write(out / f"{config.video_id}.truth.json", dumps_truth(config, gt), args.force)
            return 0
        params = doc
    else:
        params = {}
    if args.dims:
        params["dims"] = args.dims
    if args.frames:
        params["frame_count"] = args.frames
    jobs = [(k, args.seed, params) for k in range(args.count)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, jobs, chunksize=16))
    else:
        results = [_simulate_one(j) for j in jobs]
    for video, trace_text, truth_text in results:
        _write(out / f"{video}.trace.json", trace_text, args.force)
        _write(out / f"{video}.truth.json", truth_text, args.force)
    return 0


def cmd_questions(args) -> int:
    config, gt = loads_truth(Path(args.truth).read_text(encoding="utf-8"))
    rng = np.random.default_rng(args.seed)
    kinds = tuple(args.kinds.split(","))
    asts = []
    if {"descriptive", "explanatory"} & set(kinds):
        asts += generate_questions(gt, rng, args.count, tuple(k for k in kinds if k in ("descriptive", "explanatory")))
    observed = args.observed if args.observed is not None else config.frame_count
    for qtype in ("predictive", "counterfactual"):
        if qtype in kinds:
            asts += generate_whatif_questions(config, gt, rng, args.whatif_count, qtype)
    items, answers = [], []
    for i, ast in enumerate(asts):
        qid = f"q{i:03d}"
        items.append((qid, render_question(ast)))
        if ast.qtype in ("predictive", "counterfactual"):
            answers.append((qid, oracle_whatif(ast, config, observed)))
        else:
            answers.append((qid, oracle_answer(ast, gt)))
    _write(Path(args.out), write_questions(items), args.force)
    if args.oracle_out:
        _write(Path(args.oracle_out), write_answers(answers), args.force)
    return 0


def answer_file(trace, questions, th, variant, *, config=None, observed=None):
    """Answer (id, text) pairs over one trace; returns (id, answer or exception) pairs."""
    parsed, out = [], {}
    for qid, text in questions:
        try:
            parsed.append((qid, parse_question(text)))
        except QuestionParseError as exc:
            out[qid] = exc
    if not parsed and not out:
        return []
    world = reason(reconstruct(trace), th, variant)
    static = [(qid, ast) for qid, ast in parsed if ast.qtype not in ("predictive", "counterfactual")]
    for (qid, _), value in zip(static, answer_all([a for _, a in static], world)):
        out[qid] = value
    for qid, ast in parsed:
        if ast.qtype in ("predictive", "counterfactual"):
            try:
                out[qid] = answer_whatif(ast, config, th, variant, observed=observed, factual=world)
            except ValueError as exc:
                out[qid] = exc
    return [(qid, out[qid]) for qid, _ in questions]


def cmd_answer(args) -> int:
    trace = project(load_trace(args.trace), args.dims) if args.dims else load_trace(args.trace)
    questions = read_questions(Path(args.questions).read_text(encoding="utf-8"))
    config = None
    if args.truth:
        config, _ = loads_truth(Path(args.truth).read_text(encoding="utf-8"))
    results = answer_file(trace, questions, _thresholds(args), args.variant, config=config, observed=args.observed)
    text = write_answers(results)
    if args.out:
        _write(Path(args.out), text, args.force)
    else:
        sys.stdout.write(text)
    failed = [qid for qid, v in results if isinstance(v, Exception)]
    for qid, v in results:
        if isinstance(v, Exception):
            log.error("question %s: %s", qid, v)
    return 1 if failed else 0


def build_report(answers, oracle, questions=None) -> RunReport:
    pred = dict(answers)
    orc = dict(oracle)
    if set(pred) != set(orc):
        missing = sorted(set(pred) ^ set(orc))
        raise InputError(f"answer ids do not match oracle ids: {', '.join(missing[:5])}")
    qtypes = {}
    if questions is not None:
        qtypes = {qid: parse_question(text).qtype for qid, text in questions}
    report = RunReport()
    for qid, _ in oracle:
        value = orc[qid]
        qtype = qtypes.get(qid, "multiple_choice" if "," in value else "descriptive")
        if qtype == "multiple_choice":
            qtype = "explanatory"
        report.add(qid, qtype, pred[qid], value)
    return report


def cmd_eval(args) -> int:
    oracle = read_answers(Path(args.oracle).read_text(encoding="utf-8"))
    questions = read_questions(Path(args.questions).read_text(encoding="utf-8")) if args.questions else None
    reports = {}
    labels = args.labels.split(",") if args.labels else [Path(p).name for p in args.answers]
    if len(labels) != len(args.answers):
        raise InputError("--labels must name every answers file")
    for label, path in zip(labels, args.answers):
        reports[label] = build_report(read_answers(Path(path).read_text(encoding="utf-8")), oracle, questions)
    if len(reports) == 1:
        rep = next(iter(reports.values()))
        sys.stdout.write(rep.summary())
        if args.report:
            _write(Path(args.report), rep.to_json(), args.force)
    else:
        sys.stdout.write(compare_table(reports))
    return 0


def _scene_pairs(directory: Path):
    truths = sorted(directory.glob("*.truth.json"))
    if not truths:
        raise InputError(f"no *.truth.json files in {directory}")
    for truth in truths:
        video = truth.name[: -len(".truth.json")]
        trace_path = directory / f"{video}.trace.json"
        yield video, load_trace(trace_path), truth


def cmd_calibrate(args) -> int:
    grid = calib.Grid(**json.loads(Path(args.grid).read_text(encoding="utf-8"))) if args.grid else calib.Grid()
    scenes = []
    for k, (video, trace, truth) in enumerate(_scene_pairs(Path(args.scenes))):
        _, gt = loads_truth(truth.read_text(encoding="utf-8"))
        qs = generate_questions(gt, np.random.default_rng([args.seed, k]), args.questions_per_scene)
        scenes.append(calib.CalibScene(reconstruct(trace), qs, [oracle_answer(q, gt) for q in qs]))
    result = calib.grid_search(scenes, grid, args.variant, jobs=args.jobs)
    _write(Path(args.out), result.best.dumps(), args.force)
    if args.table:
        _write(Path(args.table), result.to_csv(), args.force)
    print(f"best accuracy {100 * result.best_accuracy:.2f}% at {result.best}")
    return 0


def cmd_analyze(args) -> int:
    def scenes():
        for video, trace, truth in _scene_pairs(Path(args.scenes)):
            _, gt = loads_truth(truth.read_text(encoding="utf-8"))
            yield video, reconstruct(trace), gt

    analysis = calib.analyze_collisions(scenes())
    out = Path(args.out)
    _write(out / "distances.csv", analysis.distances_csv(), args.force)
    _write(out / "velocity_changes.csv", analysis.velocity_csv(), args.force)
    return 0


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eventqa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=False, force=True):
        if force:
            sp.add_argument("--force", action="store_true", help="overwrite existing output files")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("simulate", help="simulate scenes into trace and ground-truth files")
    s.add_argument("--config", help="scene config JSON, or generator parameters JSON")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dims", type=int, choices=(2, 3))
    s.add_argument("--frames", type=int)
    s.add_argument("--out", required=True)
    common(s, jobs=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("questions", help="generate questions and oracle answers for a simulated scene")
    s.add_argument("truth")
    s.add_argument("--count", type=int, default=50)
    s.add_argument("--whatif-count", type=int, default=5)
    s.add_argument("--kinds", default="descriptive,explanatory")
    s.add_argument("--observed", type=int, help="first hidden frame for predictive questions")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--oracle-out")
    common(s)
    s.set_defaults(func=cmd_questions)

    s = sub.add_parser("answer", help="answer a question file over one trace")
    s.add_argument("trace")
    s.add_argument("questions")
    s.add_argument("--thresholds")
    s.add_argument("--variant", choices=("H0", "H1", "H2"), default="H2")
    s.add_argument("--dims", type=int, choices=(2, 3))
    s.add_argument("--truth", help="ground-truth sidecar, needed for predictive and counterfactual questions")
    s.add_argument("--observed", type=int)
    s.add_argument("--out")
    common(s)
    s.set_defaults(func=cmd_answer)

    s = sub.add_parser("eval", help="score answer files against oracle answers")
    s.add_argument("oracle")
    s.add_argument("answers", nargs="+")
    s.add_argument("--questions")
    s.add_argument("--labels")
    s.add_argument("--report")
    common(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("calibrate", help="grid-search thresholds over simulated scenes")
    s.add_argument("scenes")
    s.add_argument("--grid")
    s.add_argument("--variant", choices=("H0", "H1", "H2"), default="H2")
    s.add_argument("--questions-per-scene", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--table")
    common(s, jobs=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("analyze", help="export collision distance and velocity-change tables")
    s.add_argument("scenes")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        log.error("%s", exc)
        return 1
    except (EngineError, AssertionError, KeyError, RuntimeError) as exc:
        log.error("internal error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

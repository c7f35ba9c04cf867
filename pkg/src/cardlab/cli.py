"""``cardlab`` command line.

Every subcommand accepts ``--seed``, ``--out-dir`` and ``--config`` (a JSON
object whose keys mirror the long flag names). Failures print one
``ERROR_CODE: message`` line to stderr and remove any partial outputs.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def sub_seed(seed: int, name: str) -> int:
    """Named stream derived from the single ``--seed``."""
    return int(np.random.SeedSequence([seed, *name.encode()]).generate_state(1)[0])


class Outputs:
    """Tracks files and directories a command creates so failures can clean up."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.created: list[Path] = []
        if not self.root.exists():
            self.root.mkdir(parents=True)
            self.created.append(self.root)

    def path(self, name: str) -> Path:
        p = self.root / name
        if not p.exists():
            self.created.append(p)
        return p

    def track(self, paths) -> None:
        self.created += [Path(p) for p in paths if Path(p) not in self.created]

    def cleanup(self) -> None:
        for p in reversed(self.created):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _complexities(text: str, n_relations: int) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip().lower()
        if part == "mixed":
            out += [c for c in (2, 4, 6) if c <= n_relations]
            continue
        if part.endswith("join"):
            part = part[:-4]
        try:
            out.append(int(part))
        except ValueError:
            raise CliError("E_USAGE", f"bad complexity {text!r}", EXIT_USAGE) from None
    return out


def _parse_rows(text, defaults: dict) -> dict:
    rows = dict(defaults)
    if text:
        for part in str(text).split(","):
            name, _, n = part.partition("=")
            try:
                rows[name.strip()] = int(n)
            except ValueError:
                raise CliError("E_USAGE", f"bad row spec {part!r}", EXIT_USAGE) from None
    return rows


def _load_db(path):
    from .relstore import load_database
    if path is None:
        raise CliError("E_USAGE", "--db is required", EXIT_USAGE)
    if not Path(path, "schema.json").is_file():
        raise CliError("E_DB_NOT_FOUND", f"no database at {path}")
    return load_database(path)


def _read_workload(path, require_labels: bool = False):
    from .workload import read_jsonl
    if path is None or not Path(path).is_file():
        raise CliError("E_WORKLOAD_NOT_FOUND", f"workload file {path} not found")
    examples = read_jsonl(path)
    if require_labels and any(not ex.is_labeled for ex in examples):
        raise CliError("E_UNLABELED", f"{path} contains unlabeled queries; run `label` first")
    return examples


# --- subcommands -------------------------------------------------------------

def cmd_gen_data(args, out: Outputs):
    from .relstore import load_schema_config, load_preset, PRESETS, generate_synthetic, save_database
    if args.schema in PRESETS:
        schema, defaults = load_preset(args.schema)
    elif args.schema and Path(args.schema).is_file():
        schema, defaults = load_schema_config(args.schema)
    else:
        raise CliError("E_SCHEMA_NOT_FOUND", f"schema {args.schema} is neither a preset nor a file")
    db = generate_synthetic(schema, _parse_rows(args.rows, defaults), sub_seed(args.seed, "data"))
    save_database(db, out.path("db"))
    print(out.root / "db")


def cmd_gen_workload(args, out: Outputs):
    from . import workload
    db = _load_db(args.db)
    queries = []
    for j, c in enumerate(_complexities(args.complexity, len(db.schema.relations))):
        queries += workload.generate(db, c, args.n, sub_seed(args.seed, f"workload{j}"))
    examples = workload.sequences_for(queries, sub_seed(args.seed, "order"))
    path = out.path("workload.jsonl")
    workload.write_jsonl(path, examples)
    print(path)


def cmd_label(args, out: Outputs):
    from . import workload
    db = _load_db(args.db)
    examples = _read_workload(args.workload)
    labeled = workload.label(db, examples, with_prefixes=args.prefixes, jobs=args.jobs)
    path = out.path("labeled.jsonl")
    workload.write_jsonl(path, labeled)
    print(path)


def cmd_train(args, out: Outputs):
    from .featurize import build_spec
    from .models import train_estimator
    from .neural import TrainingDivergence
    from .lab import GridDivergence
    db = _load_db(args.db)
    examples = _read_workload(args.train, require_labels=True)
    spec = build_spec(db)
    try:
        est, report = train_estimator(
            args.model, examples, db, spec, args.seed, arch=args.arch, lr=args.lr, batch=args.batch,
            epochs=args.epochs, patience=args.patience, trees=args.trees, depth=args.depth,
            shrinkage=args.shrinkage, bins=args.bins, grid=args.grid, mode=args.mode, jobs=args.jobs, p=args.p)
    except (TrainingDivergence, GridDivergence) as exc:
        raise CliError("E_DIVERGED", str(exc), EXIT_DIVERGED) from None
    name = args.name or args.model
    est.name = name
    seconds = report.pop("train_seconds", 0.0)
    est.save(out.path(f"{name}.model.json"))
    _write_json(out.path(f"{name}.report.json"), report)
    _write_json(out.path(f"{name}.timing.json"), {"train_seconds": seconds})
    print(f"{out.root / (name + '.model.json')} parameter_count={report['parameter_count']}")


def _evaluate_models(args, db, spec, examples):
    from . import evaluation
    from .models import ModelNotFoundError, load_estimator
    truths = np.array([ex.cardinality for ex in examples], dtype=np.float64)
    comps = [len(ex.query.relations) for ex in examples]
    results = []
    for item in [m for m in str(args.models).split(",") if m]:
        try:
            est = load_estimator(item, db, spec)
        except ModelNotFoundError as exc:
            raise CliError("E_MODEL_NOT_FOUND", str(exc)) from None
        timing = Path(str(item).replace(".model.json", ".timing.json"))
        seconds = json.loads(timing.read_text())["train_seconds"] if timing.is_file() else 0.0
        records = evaluation.errors(truths, est.estimate_examples(examples), est.name, comps)
        results.append(evaluation.EstimatorResult(est.name, records, est.parameter_count(), seconds))
    return results


def cmd_evaluate(args, out: Outputs):
    from . import evaluation, lab
    from .featurize import build_spec
    db = _load_db(args.db)
    spec = build_spec(db)
    examples = _read_workload(args.test, require_labels=True)
    results = _evaluate_models(args, db, spec, examples)
    if not results:
        raise CliError("E_USAGE", "no models given", EXIT_USAGE)
    out.track(evaluation.tradeoff_report(results, out.root, include_time=False))
    with open(out.path("timings.csv"), "w") as fh:
        fh.write("estimator,train_seconds\n")
        for r in results:
            fh.write(f"{r.name},{r.train_seconds!r}\n")
    baseline = next((r for r in results if r.name == args.baseline), results[0])
    base_errors = evaluation.absolute_errors(baseline.records)
    rows = []
    try:
        k = evaluation.knee(base_errors, halve=args.knee_halve)
    except evaluation.DegenerateErrorsError:
        k = None
    if k is not None:
        split = evaluation.split_easy_hard(baseline.records, k, args.knee_halve)
        easy_ids = [r.query_id for r in split.easy]
        hard_ids = [r.query_id for r in split.hard]
        for res in results:
            errs = evaluation.absolute_errors(res.records)
            try:
                mk = evaluation.knee(errs)
            except evaluation.DegenerateErrorsError:
                mk = float(errs.max())
            row = {"estimator": res.name, "model_knee": mk}
            for label, ids in (("easy", easy_ids), ("hard", hard_ids)):
                subset = evaluation.restrict(res.records, ids)
                row[f"{label}_fraction_easy_for_model"] = evaluation.easy_fraction(subset, mk) if subset else None
                row[f"{label}_median_abs"] = float(np.median(evaluation.absolute_errors(subset))) if subset else None
            rows.append(row)
        summary = {"baseline": baseline.name, "knee": k, "halved": args.knee_halve,
                   "easy": len(split.easy), "hard": len(split.hard), "estimators": rows}
    else:
        summary = {"baseline": baseline.name, "knee": None, "estimators": []}
    if args.budget is not None:
        cands = [lab.Candidate(r.name, r.parameter_count, evaluation.absolute_errors(r.records)) for r in results
                 if r.name != baseline.name]
        best = lab.select_within_budget(cands, args.budget)
        summary["budget"] = {"limit": args.budget, "selected": None if best is None else best.name}
    _write_json(out.path("easy_hard.json"), summary)
    print(out.root / "tradeoff.csv")


def cmd_robustness(args, out: Outputs):
    from . import lab
    from .featurize import build_spec
    db = _load_db(args.db)
    examples = _read_workload(args.workload, require_labels=True)
    try:
        rows, kept, held = lab.robustness(db, build_spec(db), examples, args.scenario, args.seed,
                                          arch=args.arch, epochs=args.epochs, trees=args.trees,
                                          depth=args.depth, shrinkage=args.shrinkage, jobs=args.jobs)
    except ValueError as exc:
        raise CliError("E_SCENARIO", str(exc)) from None
    from .workload import write_jsonl
    write_jsonl(out.path("kept.jsonl"), kept)
    write_jsonl(out.path("held_out.jsonl"), held)
    path = out.path("robustness.csv")
    cols = list(rows[0])
    with open(path, "w") as fh:
        fh.write(f"# scenario {args.scenario}\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
    print(path)


def cmd_active_learn(args, out: Outputs):
    from . import lab, workload
    from .featurize import build_spec
    from .neural import Hyper
    db = _load_db(args.db)
    examples = _read_workload(args.workload)
    rng = np.random.default_rng(sub_seed(args.seed, "pool"))
    order = rng.permutation(len(examples))
    need = args.seed_size + args.validation_size + args.k * args.iters
    if len(examples) < need:
        raise CliError("E_POOL_TOO_SMALL", f"workload has {len(examples)} queries, need {need}")
    seed_ex = workload.label(db, [examples[i] for i in order[:args.seed_size]])
    val_ex = workload.label(db, [examples[i] for i in order[args.seed_size:args.seed_size + args.validation_size]])
    pool = [examples[i] for i in order[args.seed_size + args.validation_size:]]
    config = lab.ActiveConfig(
        arch=args.arch, committee_size=args.committee,
        committee_hyper=Hyper(lr=1e-3, batch=32, max_epochs=args.epochs, patience=10),
        report_hyper=Hyper(lr=1e-3, batch=32, max_epochs=args.epochs, patience=20, weight_decay=lab.WEIGHT_DECAY),
        jobs=args.jobs)
    method = args.method.replace("-", "_")
    run = lab.active_learn(seed_ex, pool, method, args.k, args.iters, lambda items: workload.label(db, items),
                           build_spec(db), val_ex, sub_seed(args.seed, "active"), config)
    path = out.path("active_run.jsonl")
    with open(path, "w") as fh:
        for line in run.log_lines():
            fh.write(line + "\n")
    if run.error:
        raise CliError("E_LABELER", run.error)
    print(path)


def cmd_plan_impact(args, out: Outputs):
    from . import planner
    from .featurize import build_spec
    from .models import ModelNotFoundError, TruthEstimator, load_estimator
    db = _load_db(args.db)
    spec = build_spec(db)
    examples = _read_workload(args.workload)
    truth = TruthEstimator(db)
    records = []
    for item in [m for m in str(args.estimators).split(",") if m]:
        try:
            est = load_estimator(item, db, spec)
        except ModelNotFoundError as exc:
            raise CliError("E_MODEL_NOT_FOUND", str(exc)) from None
        for i, ex in enumerate(examples):
            records.append(planner.impact(ex.query, est, truth, query_id=i, name=est.name))
    path = out.path("impact.csv")
    planner.write_impact_csv(path, records)
    print(path)


def cmd_demo(args, out: Outputs):
    """gen-data -> gen-workload -> label -> train -> evaluate on the running-example schema."""
    steps = [
        ["gen-data", "--schema", args.schema],
        ["gen-workload", "--db", str(out.root / "db"), "--complexity", args.complexity, "--n", str(args.n)],
        ["label", "--db", str(out.root / "db"), "--workload", str(out.root / "workload.jsonl"), "--prefixes"],
    ]
    for model in ("nn", "rnn", "rf", "gbt", "memo"):
        steps.append(["train", "--model", model, "--db", str(out.root / "db"), "--train",
                      str(out.root / "labeled.jsonl"), "--epochs", str(args.epochs), "--arch", args.arch,
                      "--trees", "5"])
    models = ",".join(str(out.root / f"{m}.model.json") for m in ("nn", "rnn", "rf", "gbt", "memo"))
    steps.append(["evaluate", "--db", str(out.root / "db"), "--test", str(out.root / "labeled.jsonl"),
                  "--models", f"hist:{args.bins}," + models, "--baseline", f"hist{args.bins}"])
    for step in steps:
        code = main(step + ["--seed", str(args.seed), "--out-dir", str(out.root)])
        if code:
            raise CliError("E_DEMO", f"step {step[0]} failed", code)


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardlab", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, func, help_text):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--config", default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)
        return p

    p = sub("gen-data", cmd_gen_data, "generate a synthetic database")
    p.add_argument("--schema", default="running", help="preset name or schema JSON file")
    p.add_argument("--rows", default=None, help="e.g. A=400,B=100 (defaults from the schema file)")

    p = sub("gen-workload", cmd_gen_workload, "generate unlabeled queries")
    p.add_argument("--db")
    p.add_argument("--complexity", default="2join")
    p.add_argument("--n", type=int, default=1000)

    p = sub("label", cmd_label, "label queries with exact cardinalities")
    p.add_argument("--db")
    p.add_argument("--workload")
    p.add_argument("--prefixes", action="store_true")

    def model_flags(p):
        p.add_argument("--arch", default="100w,1d")
        p.add_argument("--epochs", type=int, default=500)
        p.add_argument("--trees", type=int, default=50)
        p.add_argument("--depth", type=int, default=None)
        p.add_argument("--shrinkage", type=float, default=1.0)

    p = sub("train", cmd_train, "train an estimator")
    p.add_argument("--model", choices=["nn", "rnn", "rf", "gbt", "memo", "hist"], required=False, default="nn")
    p.add_argument("--db")
    p.add_argument("--p", type=float, default=2.0, help="Minkowski order for memo fallback")
    p.add_argument("--train")
    p.add_argument("--grid", action="store_true")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--bins", type=int, default=1000)
    p.add_argument("--mode", choices=["many_to_many", "many_to_one"], default="many_to_many")
    p.add_argument("--name", default=None)
    model_flags(p)

    p = sub("evaluate", cmd_evaluate, "error, CDF and trade-off reports")
    p.add_argument("--db")
    p.add_argument("--models", default="")
    p.add_argument("--test")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--knee-halve", action="store_true")
    p.add_argument("--baseline", default=None, help="estimator name defining Easy/Hard (default: first)")

    p = sub("robustness", cmd_robustness, "held-out selection values or joins")
    p.add_argument("--db")
    p.add_argument("--workload")
    p.add_argument("--scenario", required=False, default=None)
    model_flags(p)

    p = sub("active-learn", cmd_active_learn, "batch-mode active learning")
    p.add_argument("--db")
    p.add_argument("--workload")
    p.add_argument("--method", choices=["qbc", "qbc-cluster", "random"], default="qbc")
    p.add_argument("--seed-size", type=int, default=100)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--validation-size", type=int, default=200)
    p.add_argument("--committee", type=int, default=5)
    p.add_argument("--arch", default="100w,1d")
    p.add_argument("--epochs", type=int, default=50)

    p = sub("plan-impact", cmd_plan_impact, "plan cost ratios under C_out")
    p.add_argument("--db")
    p.add_argument("--estimators", default="truth")
    p.add_argument("--workload")

    p = sub("demo", cmd_demo, "run the small end-to-end pipeline")
    p.add_argument("--schema", default="running")
    p.add_argument("--complexity", default="1join,2join,3join")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--arch", default="100w,1d")
    p.add_argument("--bins", type=int, default=10)
    return parser


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            raise CliError("E_CONFIG", f"cannot read config {args.config}: {exc}", EXIT_USAGE) from None
        known = vars(args)
        unknown = [k for k in cfg if k.replace("-", "_") not in known]
        if unknown:
            raise CliError("E_CONFIG", f"unknown config keys {unknown}", EXIT_USAGE)
        sub_parsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub_parsers.choices[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    except CliError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    if args.command == "robustness" and not args.scenario:
        print("E_USAGE: --scenario is required", file=sys.stderr)
        return EXIT_USAGE
    out = Outputs(args.out_dir)
    try:
        args.func(args, out)
    except CliError as exc:
        out.cleanup()
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # data problems surface as one machine-parsable line
        out.cleanup()
        code = "E_DIVERGED" if type(exc).__name__ == "TrainingDivergence" else "E_DATA"
        print(f"{code}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED if code == "E_DIVERGED" else EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())

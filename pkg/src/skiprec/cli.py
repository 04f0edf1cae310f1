"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import checkpoint, pipeline
from .checkpoint import CheckpointError
from .evaluation import NoEligibleUsers, evaluate
from .graph import GRAPH_MODES, build_graphs
from .ingest import H, L, DataError, split_per_user
from .model import FIXED, MODES
from .optim import BPR_MODES, NumericalError, TrainConfig, train
from .stats import paired_t_test
from .synth import SynthConfig, generate

log = logging.getLogger("skiprec")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig(TrainConfig):
    interactions: str | None = None
    features: str | None = None
    split: str | None = None
    out: str = "runs"
    repeats: int = 10
    ks: list[int] = field(default_factory=lambda: [3, 5])
    include_less_positive: bool = False
    variants: list[str] = field(default_factory=lambda: ["dual", "total", "highly_only"])
    jobs: int = 1
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        if self.feature_mode not in MODES:
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")
        if self.graph_mode not in GRAPH_MODES:
            raise ValueError(f"unknown graph mode {self.graph_mode!r}")
        if self.repeats < 1 or not self.ks or min(self.ks) < 1:
            raise ValueError("repeats and every k must be >= 1")

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(asdict(self))

    @property
    def relevant(self):
        return frozenset({H, L}) if self.include_less_positive else frozenset({H})


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float, help="quick-skip threshold in seconds (default 5.0)")
    p.add_argument("--graph-mode", dest="graph_mode", choices=GRAPH_MODES)
    p.add_argument("--bpr-mode", dest="bpr_mode", choices=BPR_MODES)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", dest="ks", type=_int_list, help="metric cutoffs (default 3,5)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--out")
    p.add_argument("--feature-mode", dest="feature_mode", choices=MODES)
    p.add_argument("--d", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--include-less-positive", dest="include_less_positive",
                   action="store_const", const=True)
    p.add_argument("--interactions")
    p.add_argument("--features")
    p.add_argument("--split", help="split manifest written by `prepare`")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skiprec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="label, deduplicate and split an interaction log")
    _common(p)

    p = sub.add_parser("train", help="train one model from a prepared split")
    _common(p)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    _common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("experiment", help="compare variants across paired seeds")
    _common(p)
    p.add_argument("--variants", type=_str_list)
    p.add_argument("--jobs", type=int)
    p.add_argument("--synth-config", dest="synth_config",
                   help="JSON SynthConfig used when no --interactions is given")

    p = sub.add_parser("synth", help="write a synthetic interactions/features pair")
    p.add_argument("--config", help="JSON file with SynthConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="synth")
    p.add_argument("--tau-high", dest="tau_high", type=float)
    p.add_argument("--tau-low", dest="tau_low", type=float)
    p.add_argument("--users", dest="n_users", type=int)
    p.add_argument("--videos", dest="n_videos", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("ttest", help="paired t-test between two variants or score lists")
    p.add_argument("--metrics", help="metrics CSV (variant,seed,metric,k,value)")
    p.add_argument("--a", required=True, help="variant name, or comma-separated scores")
    p.add_argument("--b", required=True, help="variant name, or comma-separated scores")
    p.add_argument("--metric")
    p.add_argument("--k", dest="ks", type=_int_list)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = _load_json(args.config)
    # the config file may spell lambda and k the way the flags do
    if "lambda" in values:
        values["lam"] = values.pop("lambda")
    if "k" in values:
        values["ks"] = values.pop("k")
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command", "verbose", "checkpoint",
                                             "synth_config"):
            values[key] = value
    if getattr(args, "synth_config", None):
        values["synth"] = _load_json(args.synth_config)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_prepare(cfg: RunConfig) -> int:
    if not cfg.interactions:
        raise UsageError("prepare needs --interactions")
    if cfg.feature_mode == FIXED and not cfg.features:
        raise DataError("fixed-feature mode needs --features")
    data = pipeline.load_dataset(cfg.interactions, cfg.features, cfg.threshold, cfg.d)
    split = split_per_user(data.pairs, seed=cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_manifest(out / "split.csv", split, data.id_maps)
    stats = pipeline.split_stats(split)
    _write_json(out / "stats.json", stats)
    _write_json(out / "config.json", asdict(cfg))
    log.info("wrote %s (%d pairs)", out / "split.csv", len(data.pairs))
    print(json.dumps(stats["pairs"]))
    return 0


def _prepared(cfg: RunConfig):
    if not cfg.split:
        raise UsageError("--split (a manifest from `prepare`) is required")
    split, id_maps = pipeline.read_manifest(cfg.split, cfg.seed)
    features = None
    if cfg.feature_mode == FIXED:
        if not cfg.features:
            raise DataError("fixed-feature mode needs --features")
        from .ingest import load_features
        features = load_features(Path(cfg.features).read_bytes(), id_maps, cfg.d)
    return split, id_maps, features


def cmd_train(cfg: RunConfig) -> int:
    split, id_maps, features = _prepared(cfg)
    tc = cfg.train_config()
    graphs = build_graphs(split.train, id_maps.n_users, id_maps.n_videos, tc.graph_mode)
    from .model import init_params
    params = init_params(tc.d, id_maps.n_users, id_maps.n_videos, tc.seed, tc.feature_mode,
                         features, tc.activation)
    result = train(tc, split, graphs, params)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out / "checkpoint.json", result.params, tc.to_dict())
    pipeline.write_history(out / "history.jsonl", result.history)
    _write_json(out / "config.json", asdict(cfg))
    print(json.dumps({"best_epoch": result.best_epoch, "epochs": len(result.history),
                      "stopped_early": result.stopped_early}))
    return 0


def cmd_evaluate(cfg: RunConfig, checkpoint_path: str) -> int:
    params, saved = checkpoint.load(checkpoint_path)
    if not cfg.split:
        raise UsageError("--split is required")
    split, id_maps = pipeline.read_manifest(cfg.split, cfg.seed)
    if params.h_v0.shape[0] != id_maps.n_videos:
        raise CheckpointError("checkpoint does not match the split's video catalog")
    graph_mode = saved.get("graph_mode", cfg.graph_mode)
    graphs = build_graphs(split.train, id_maps.n_users, id_maps.n_videos, graph_mode)
    variant = graph_mode if saved.get("bpr_mode", "hierarchical") == "hierarchical" else saved["bpr_mode"]
    report = evaluate(params, graphs, split.test, cfg.ks, cfg.relevant,
                      saved.get("seed", cfg.seed), variant)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(pipeline.metrics_csv([report]))
    _write_json(out / "metrics.json", pipeline.report_json(report))
    sys.stdout.write(pipeline.metrics_csv([report]))
    return 0


def cmd_experiment(cfg: RunConfig) -> int:
    if cfg.repeats < 2:
        raise UsageError("experiment needs --repeats >= 2 for paired t-tests")
    if cfg.interactions:
        if cfg.feature_mode == FIXED and not cfg.features:
            raise DataError("fixed-feature mode needs --features")
        data = pipeline.load_dataset(cfg.interactions, cfg.features, cfg.threshold, cfg.d)
    else:
        synth_cfg = SynthConfig.from_dict({"d": cfg.d, **cfg.synth})
        ds = generate(synth_cfg)
        data = pipeline.load_dataset(ds.interactions_csv.encode(), ds.features_csv.encode(),
                                     cfg.threshold, cfg.d)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", asdict(cfg))
    seeds = [cfg.seed + i for i in range(cfg.repeats)]
    try:
        result = pipeline.run_experiment(cfg.train_config(), data, cfg.variants, seeds,
                                         cfg.ks, cfg.relevant, out, cfg.jobs)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from None
    (out / "metrics.csv").write_text(result["csv"])
    _write_json(out / "summary.json", result["summary"])
    print(_format_summary(result["summary"]))
    return 0


def _format_summary(summary: dict) -> str:
    lines = []
    names = list(next(iter(summary["metrics"].values())))
    lines.append("variant".ljust(16) + "".join(n.rjust(20) for n in names))
    for v, metrics in summary["metrics"].items():
        lines.append(v.ljust(16) + "".join(
            f"{metrics[n]['mean']:.4f}+-{metrics[n]['std']:.4f}".rjust(20) for n in names))
    for pair, tests in summary["ttests"].items():
        lines.append(pair.ljust(16) + "".join(f"p={tests[n]['p']:.3g}".rjust(20) for n in names))
    return "\n".join(lines)


def cmd_synth(args: argparse.Namespace) -> int:
    values = _load_json(args.config)
    for key in ("seed", "tau_high", "tau_low", "n_users", "n_videos", "d"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    try:
        config = SynthConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    ds = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "interactions.csv").write_text(ds.interactions_csv)
    (out / "features.csv").write_text(ds.features_csv)
    _write_json(out / "synth_config.json", config.to_dict())
    print(str(out / "interactions.csv"))
    return 0


def _scores(text: str) -> list[float] | None:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        return None


def cmd_ttest(args: argparse.Namespace) -> int:
    a, b = _scores(args.a), _scores(args.b)
    rows = []
    if a is not None and b is not None:
        rows.append(("scores", paired_t_test(a, b)))
    else:
        if not args.metrics:
            raise UsageError("variant names need --metrics")
        table: dict = {}
        with open(args.metrics, newline="") as fh:
            for rec in csv.DictReader(fh):
                key = (rec["metric"], int(rec["k"]))
                table.setdefault(key, {}).setdefault(rec["variant"], {})[int(rec["seed"])] = float(rec["value"])
        for (metric, k), by_variant in sorted(table.items()):
            if args.metric and metric != args.metric or args.ks and k not in args.ks:
                continue
            if args.a not in by_variant or args.b not in by_variant:
                raise DataError(f"variants {args.a!r}/{args.b!r} not found in {args.metrics}")
            seeds = sorted(set(by_variant[args.a]) & set(by_variant[args.b]))
            rows.append((f"{metric}@{k}", paired_t_test([by_variant[args.a][s] for s in seeds],
                                                        [by_variant[args.b][s] for s in seeds])))
    for name, res in rows:
        flag = " (degenerate)" if res.degenerate else ""
        print(f"{name}\tt={res.t:.6g}\tdf={res.df}\tp={res.p:.6g}{flag}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "ttest":
            return cmd_ttest(args)
        cfg = resolve_config(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint)
        return cmd_experiment(cfg)
    except UsageError as exc:
        print(f"skiprec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"skiprec: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, NoEligibleUsers, OSError) as exc:
        print(f"skiprec: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # remaining ValueErrors come from arguments that parsed but do not fit the data
        print(f"skiprec: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

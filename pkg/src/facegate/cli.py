"""``facegate`` command line.

Exit codes: 0 success, 1 invalid arguments or parameters, 2 unreadable or
unusable input / output failure. Every run writes a manifest (``key=value``)
recording the full resolved configuration; its ``status`` line reads
``running`` until the run completes, so interrupted output is flagged.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, DEFAULT_SAMPLE_RATE, FacegateError, check_seed
from .kvfile import dump_kv, format_value, read_kv, to_bool, to_optional_int, write_kv

log = logging.getLogger("facegate")

FOREST_DEFAULTS = {
    "n_trees": 150, "max_depth": 10, "min_samples_leaf": 5, "min_samples_split": 20,
    "bootstrap": False, "max_features": "sqrt",
}
MANIFEST_META = {"command", "status", "version", "error", "config"}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _opt(p, flag, default, help_, **kw):
    shown = format_value(default) if default is not None else "none"
    p.add_argument(flag, default=default, help=f"{help_} (default: {shown})", **kw)


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("FACEGATE_THREADS", "1")))
    except ValueError:
        return 1


def _add_forest_flags(p, with_model_config=True):
    g = p.add_argument_group("random forest")
    if with_model_config:
        g.add_argument("--model-config", default=None,
                       help="key=value file of forest parameters; explicit flags override it (default: none)")
    # default None so a --model-config file can supply values; shown defaults are the real ones
    g.add_argument("--n-trees", type=int, default=None, help="trees in the forest (default: 150)")
    g.add_argument("--max-depth", default=None, help="maximum tree depth, or 'none' (default: 10)")
    g.add_argument("--min-samples-leaf", type=int, default=None, help="minimum rows per leaf (default: 5)")
    g.add_argument("--min-samples-split", type=int, default=None,
                   help="minimum rows to split a node; must be >= 2 * min-samples-leaf (default: 20)")
    g.add_argument("--bootstrap", default=None, help="bootstrap rows per tree, true/false (default: false)")
    g.add_argument("--max-features", default=None,
                   help="features tried per split: sqrt, log2, all, a count or a fraction (default: sqrt)")


def _add_gate_flags(p):
    g = p.add_argument_group("STA/LTA gate")
    g.add_argument("--t-sta", type=float, default=None, help="short window in seconds (default: 0.5)")
    g.add_argument("--t-lta", type=float, default=None, help="long window in seconds (default: 30.0)")
    g.add_argument("--threshold", type=float, default=None, help="STA/LTA trigger ratio (default: 1.5)")


def _add_common(p):
    _opt(p, "--seed", 0, "global random seed", type=int)
    _opt(p, "--threads", _threads_default(), "worker threads (env FACEGATE_THREADS)", type=int)
    p.add_argument("--config", default=None, help="key=value file of flag values; flags override it (default: none)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (default: 0)")


def build_parser() -> Parser:
    parser = Parser(prog="facegate", description="Face-touch detection: gating, features, forest, evaluation.")
    parser.add_argument("--version", action="version", version=f"facegate {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="parse sensor CSVs + annotations into session files")
    p.add_argument("--sensors", required=True, help="directory of sensor CSV files named <session_id>.*")
    p.add_argument("--annotations", required=True, help="annotation CSV (session_id,participant,activity,stance,phase,start,end)")
    p.add_argument("--mapping", default=None, help="column mapping key=value file (default: none, i.e. t,ax,ay,az,gx,gy,gz header)")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("extract", help="window transitions and compute features")
    p.add_argument("--sessions", required=True, help="directory of .session.csv files")
    _opt(p, "--window", 0.4, "window length in seconds", type=float)
    _opt(p, "--margin", 2.5, "seconds trimmed from each session end", type=float)
    _opt(p, "--include-stance", False, "use whole stance sessions as NoFaceTouch slices", action="store_true")
    _opt(p, "--poly", False, "write all 1540 expanded columns instead of the 54 base features", action="store_true")
    p.add_argument("--out", required=True, help="output feature CSV")
    _add_common(p)

    p = sub.add_parser("train", help="train a random forest model")
    p.add_argument("--features", required=True, help="feature CSV")
    _opt(p, "--top-k", 0, "keep only the k most important features (0 = all)", type=int)
    _opt(p, "--no-poly", False, "train on the base features without expansion", action="store_true")
    p.add_argument("--out", required=True, help="output model file")
    _add_forest_flags(p)
    _add_common(p)

    p = sub.add_parser("search", help="randomized hyperparameter search with k-fold CV")
    p.add_argument("--features", required=True, help="feature CSV")
    _opt(p, "--draws", 25, "configurations drawn", type=int)
    _opt(p, "--folds", 5, "cross-validation folds", type=int)
    _opt(p, "--no-poly", False, "search on base features without expansion", action="store_true")
    p.add_argument("--grid", default=None,
                   help="key=value file of comma-separated candidate lists (default: n_trees=50,100,150,200 "
                        "max_depth=5,10,15,none min_samples_leaf=1,5,10 min_samples_split=2,10,20,40 "
                        "bootstrap=true,false)")
    p.add_argument("--out", required=True, help="output directory")
    _add_forest_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="train-test-split or leave-one-participant-out evaluation")
    _opt(p, "--mode", "split", "evaluation protocol", choices=["split", "loo"])
    p.add_argument("--features", required=True, help="feature CSV")
    _opt(p, "--top-k", 340, "evaluate on the k most important features (0 = all)", type=int)
    _opt(p, "--test-fraction", 0.2, "held-out fraction for split mode", type=float)
    _opt(p, "--no-poly", False, "evaluate on base features without expansion", action="store_true")
    p.add_argument("--report", "--out", dest="report", required=True, help="report directory")
    _add_forest_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep-window", help="accuracy as a function of window size")
    p.add_argument("--sessions", required=True, help="directory of .session.csv files")
    _opt(p, "--sizes", "0.2,0.3,0.4,0.5,0.6,0.7,0.8", "comma-separated window sizes (s)")
    _opt(p, "--margin", 2.5, "seconds trimmed from each session end", type=float)
    _opt(p, "--include-stance", False, "use whole stance sessions as NoFaceTouch slices", action="store_true")
    _opt(p, "--test-fraction", 0.2, "held-out fraction", type=float)
    p.add_argument("--report", "--out", dest="report", required=True, help="report directory")
    _add_forest_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep-features", help="accuracy over importance-ranked feature prefixes")
    p.add_argument("--features", required=True, help="feature CSV")
    _opt(p, "--step", 10, "prefix size increment", type=int)
    _opt(p, "--test-fraction", 0.2, "held-out fraction", type=float)
    _opt(p, "--no-poly", False, "sweep base features without expansion", action="store_true")
    p.add_argument("--report", "--out", dest="report", required=True, help="report directory")
    _add_forest_flags(p)
    _add_common(p)

    p = sub.add_parser("pca-study", help="first-component variance share vs participants combined")
    p.add_argument("--features", required=True, help="feature CSV")
    _opt(p, "--top-k", 340, "use the k most important features (0 = all)", type=int)
    _opt(p, "--no-poly", False, "use base features without expansion", action="store_true")
    p.add_argument("--report", "--out", dest="report", required=True, help="report directory")
    _add_forest_flags(p)
    _add_common(p)

    p = sub.add_parser("gate-stats", help="duty-cycle statistics of the STA/LTA gate on one recording")
    p.add_argument("--session", required=True, help=".session.csv file, or a t,ax,ay,az,gx,gy,gz CSV trace")
    _add_gate_flags(p)
    _opt(p, "--sample-rate", DEFAULT_SAMPLE_RATE, "sample rate for plain traces (Hz)", type=float)
    p.add_argument("--report", "--out", dest="report", default="gate-report", help="report directory (default: gate-report)")
    _add_common(p)

    p = sub.add_parser("simulate", help="stream a trace through gate, features and model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help=".session.csv file or t,ax,ay,az,gx,gy,gz CSV trace")
    src.add_argument("--synth", help="synthetic trace spec: lines of 'duration kind amplitude [frequency]'")
    p.add_argument("--model", required=True, help="model file from 'facegate train'")
    p.add_argument("--gate-config", default=None, help="key=value file with t_sta, t_lta, threshold (default: none)")
    _add_gate_flags(p)
    _opt(p, "--window", 0.4, "classification window (s)", type=float)
    _opt(p, "--sample-rate", DEFAULT_SAMPLE_RATE, "sample rate (Hz)", type=float)
    _opt(p, "--noise", 0.02, "relative noise for --synth traces", type=float)
    _opt(p, "--gravity", 0.0, "constant az offset for --synth traces", type=float)
    _opt(p, "--plot", False, "also render the gate trace figure", action="store_true")
    p.add_argument("--report", "--out", dest="report", required=True, help="report directory")
    _add_common(p)
    return parser


# ------------------------------------------------------------------ helpers

def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def forest_config(args) -> "ForestConfig":
    from .forest import ForestConfig

    values: dict[str, object] = dict(FOREST_DEFAULTS)
    path = getattr(args, "model_config", None)
    if path:
        file_values = read_kv(path)
        file_values.pop("seed", None)
        values.update(file_values)
    for key in FOREST_DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values["seed"] = args.seed
    return ForestConfig.from_kv({k: format_value(v) if not isinstance(v, str) else v for k, v in values.items()})


def gate_config(args):
    from .gate import GateConfig

    values = {"t_sta": 0.5, "t_lta": 30.0, "threshold": 1.5}
    path = getattr(args, "gate_config", None)
    if path:
        for k, v in read_kv(path).items():
            if k == "sample_rate":
                continue
            if k not in values:
                raise ConfigError(f"unknown gate parameter {k!r} in {path}", "gate_config")
            try:
                values[k] = float(v)
            except ValueError:
                raise ConfigError(f"bad value for {k} in {path}: {v!r}", "gate_config") from None
    for k in values:
        if getattr(args, k) is not None:
            values[k] = getattr(args, k)
    return GateConfig(sample_rate=args.sample_rate, **values)


def _load_table(path, no_poly: bool):
    from .features import read_feature_csv

    table = read_feature_csv(path)
    return table if no_poly else table.poly()


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(format_value(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _read_trace(path, sample_rate):
    """A normalized session file or a plain CSV with t + 6 channels."""
    from .ingest import SESSION_MAGIC, read_session

    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    if first == SESSION_MAGIC:
        s = read_session(path)
        return s.t, s.imu, s.sample_rate
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 7:
        raise FacegateError(f"{path}: expected 7 columns t,ax,ay,az,gx,gy,gz")
    return data[:, 0], data[:, 1:], sample_rate


# ----------------------------------------------------------------- commands

def cmd_ingest(args, out: Path):
    from .ingest import ColumnMapping, find_sensor_file, load_annotations, load_session, write_session

    mapping = ColumnMapping.load(args.mapping) if args.mapping else ColumnMapping()
    records = load_annotations(args.annotations)
    out.mkdir(parents=True, exist_ok=True)
    written, missing = [], []
    for sid, rec in records.items():
        f = find_sensor_file(args.sensors, sid)
        if f is None:
            log.warning("no sensor file for session %s", sid)
            missing.append(sid)
            continue
        write_session(load_session(f, rec, mapping), out / f"{sid}.session.csv")
        written.append(sid)
    print(f"wrote {len(written)} sessions to {out}" + (f"; {len(missing)} without sensor file" if missing else ""))
    return {"sessions_written": len(written), "sessions_missing": ",".join(missing)}


def cmd_extract(args, out: Path):
    from .features import featurize_slices, window_length, write_feature_csv
    from .ingest import load_session_dir, transition_slices

    sessions = load_session_dir(args.sessions)
    if not sessions:
        raise FacegateError(f"no .session.csv files in {args.sessions}")
    rate = sessions[0].sample_rate
    window_length(args.window, rate)
    slices = transition_slices(sessions, args.margin, args.include_stance)
    table = featurize_slices(slices, args.window, rate)
    write_feature_csv(table, out, poly=args.poly)
    print(f"{len(table)} windows ({int(table.y.sum())} face-touch) from {len(sessions)} sessions -> {out}")
    return {"windows": len(table), "face_windows": int(table.y.sum()), "sessions": len(sessions)}


def cmd_train(args, out: Path):
    from .evaluate import top_k_features
    from .forest import save_model, train_forest

    cfg = forest_config(args)
    table = _load_table(args.features, args.no_poly)
    index = None
    if args.top_k and args.top_k < table.X.shape[1]:
        ranker = train_forest(table.X, table.y, cfg, table.feature_names, threads=args.threads)
        index = top_k_features(ranker, args.top_k)
        table = table.columns(index)
    forest = train_forest(table.X, table.y, cfg, table.feature_names, threads=args.threads)
    forest.feature_index = index
    save_model(forest, out)
    acc = float(np.mean(forest.predict(table.X) == table.y))
    print(f"trained {cfg.n_trees} trees on {len(table)} rows x {table.X.shape[1]} features; "
          f"training accuracy {acc:.4f} -> {out}")
    return {"rows": len(table), "features": table.X.shape[1], "training_accuracy": acc}


def _grid_from_file(path):
    from .forest import DEFAULT_GRID, parse_max_features

    if not path:
        return dict(DEFAULT_GRID)
    parsers = {"n_trees": int, "min_samples_leaf": int, "min_samples_split": int,
               "max_depth": to_optional_int, "bootstrap": to_bool, "max_features": parse_max_features}
    grid = {}
    for key, raw in read_kv(path).items():
        if key not in parsers:
            raise ConfigError(f"unknown grid parameter {key!r} in {path}", "grid")
        try:
            grid[key] = [parsers[key](item.strip()) for item in raw.split(",") if item.strip()]
        except (TypeError, ValueError):
            raise ConfigError(f"bad candidate list for {key} in {path}: {raw!r}", "grid") from None
    return grid


def cmd_search(args, out: Path):
    from .forest import SearchSpace, randomized_search

    base = forest_config(args)
    space = SearchSpace(_grid_from_file(args.grid), args.draws, args.folds, args.seed, base)
    table = _load_table(args.features, args.no_poly)
    best, rows = randomized_search(table.X, table.y, space, threads=args.threads)
    keys = list(space.grid)
    _write_csv(out / "cv_table.csv", ["draw", *keys, "mean_accuracy", "std_accuracy"],
               [[i, *(getattr(r.config, k) for k in keys), r.mean, r.std] for i, r in enumerate(rows)])
    best_kv = {k: v for k, v in best.to_kv().items() if k != "seed"}
    write_kv(out / "best_config.kv", best_kv)
    best_row = next(r for r in rows if r.config == best)
    summary = {"best_mean_accuracy": best_row.mean, "best_std_accuracy": best_row.std, **best_kv}
    write_kv(out / "report.kv", summary)
    print(f"best of {len(rows)} draws: mean CV accuracy {best_row.mean:.4f}")
    print(dump_kv(best_kv), end="")
    return summary


def cmd_eval(args, out: Path):
    from .evaluate import evaluate_loo, evaluate_split
    from .plotting import plot_confusion

    cfg = forest_config(args)
    table = _load_table(args.features, args.no_poly)
    top_k = args.top_k or None
    if args.mode == "split":
        report = evaluate_split(table, cfg, top_k, args.test_fraction, args.seed, args.threads)
    else:
        report = evaluate_loo(table, cfg, top_k, args.threads)
        _write_csv(out / "per_participant.csv", ["participant", "rows", "accuracy", "fpr", "fnr", "tp", "fp", "tn", "fn"],
                   [[p, m.total, m.accuracy, m.fpr, m.fnr, m.tp, m.fp, m.tn, m.fn] for p, m in report.per_participant])
    write_kv(out / "report.kv", report.to_kv())
    (out / "report.txt").write_text(report.text(), encoding="utf-8")
    (out / "features.txt").write_text("\n".join(report.features) + "\n", encoding="utf-8")
    plot_confusion(report.matrix, out / "confusion.png",
                   f"{'train-test split' if args.mode == 'split' else 'leave-one-out'}, {len(report.features)} features")
    print(report.text(), end="")
    return {"accuracy": report.accuracy, "fpr": report.fpr, "fnr": report.fnr}


def cmd_sweep_window(args, out: Path):
    from .evaluate import sweep_window_size
    from .ingest import load_session_dir
    from .plotting import plot_window_sweep

    try:
        sizes = [float(s) for s in str(args.sizes).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated numbers, got {args.sizes!r}", "sizes") from None
    if not sizes or any(s <= 0 for s in sizes):
        raise ConfigError("--sizes must list positive window lengths", "sizes")
    cfg = forest_config(args)
    sessions = load_session_dir(args.sessions)
    if not sessions:
        raise FacegateError(f"no .session.csv files in {args.sessions}")
    rows = sweep_window_size(sessions, sizes, cfg, args.seed, args.test_fraction, args.margin,
                             args.include_stance, threads=args.threads)
    _write_csv(out / "window_sweep.csv", ["window_s", "accuracy", "windows"], rows)
    plot_window_sweep(rows, out / "window_sweep.png")
    best = max(rows, key=lambda r: r[1])
    for size, acc, n in rows:
        print(f"{size:4.2f}s  {acc:.4f}  ({n} windows)")
    return {"best_window_s": best[0], "best_accuracy": best[1]}


def cmd_sweep_features(args, out: Path):
    from .evaluate import split_train_test, sweep_feature_count
    from .plotting import plot_feature_sweep

    if args.step < 1:
        raise ConfigError("--step must be >= 1", "step")
    cfg = forest_config(args)
    table = _load_table(args.features, args.no_poly)
    train, test = split_train_test(table, args.test_fraction, args.seed)
    sweep = sweep_feature_count(train, test, cfg, args.step, threads=args.threads,
                                progress=lambda k, a: log.info("k=%d accuracy=%.4f", k, a))
    _write_csv(out / "feature_sweep.csv", ["k", "accuracy"], sweep.table())
    _write_csv(out / "ranking.csv", ["rank", "index", "feature"],
               [[r, int(i), table.feature_names[i]] for r, i in enumerate(sweep.ranking)])
    plot_feature_sweep(sweep.ks, sweep.accuracies, sweep.elbow_k, out / "feature_sweep.png")
    summary = {"elbow_k": sweep.elbow_k, "elbow_accuracy": sweep.elbow_accuracy,
               "full_accuracy": sweep.full_accuracy, "max_accuracy": max(sweep.accuracies)}
    print(dump_kv(summary), end="")
    return summary


def cmd_pca_study(args, out: Path):
    from .evaluate import pca_first_component_variance, top_k_features
    from .forest import train_forest
    from .plotting import plot_pca_curve

    cfg = forest_config(args)
    table = _load_table(args.features, args.no_poly)
    cols = None
    if args.top_k and args.top_k < table.X.shape[1]:
        cols = top_k_features(train_forest(table.X, table.y, cfg, table.feature_names, threads=args.threads), args.top_k)
    rows = pca_first_component_variance(table, cols)
    _write_csv(out / "pca_first_component.csv", ["participants", "variance_pct"], rows)
    plot_pca_curve(rows, out / "pca_first_component.png")
    for n, v in rows:
        print(f"{n:3d}  {v:6.2f}%")
    return {"participants": len(rows)}


def cmd_gate_stats(args, out: Path):
    from .core import resultant_array
    from .gate import gate_stream
    from .plotting import plot_gate_trace

    t, imu, rate = _read_trace(args.session, args.sample_rate)
    args.sample_rate = rate
    cfg = gate_config(args)
    passed, report = gate_stream(np.column_stack([t, imu]), cfg)
    write_kv(out / "gate.kv", report.to_kv())
    (out / "gate.txt").write_text(report.text(), encoding="utf-8")
    plot_gate_trace(t, resultant_array(imu), passed, out / "gate.png")
    print(report.text(), end="")
    return {"pass_fraction": report.pass_fraction}


def cmd_simulate(args, out: Path):
    from .forest import load_model
    from .pipeline import parse_trace_spec, run_stream, synth_trace

    if args.synth:
        spec = parse_trace_spec(Path(args.synth).read_text(encoding="utf-8"))
        trace = synth_trace(spec, args.seed, args.sample_rate, args.noise, args.gravity)
        t, imu, rate = trace[:, 0], trace[:, 1:], args.sample_rate
    else:
        t, imu, rate = _read_trace(args.trace, args.sample_rate)
    args.sample_rate = rate
    cfg = gate_config(args)
    model = load_model(args.model)
    events, report = run_stream(np.column_stack([t, imu]), cfg, model, args.window, rate)
    lines = ["t,verdict,votes,gate_pass_fraction"] + [e.csv_row() for e in events]
    (out / "alerts.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    kv = report.to_kv()
    kv.update({f"gate_{k}": v for k, v in cfg.to_kv().items()})
    kv["window_seconds"] = args.window
    write_kv(out / "report.kv", kv)
    (out / "report.txt").write_text(report.text(), encoding="utf-8")
    # wall-clock figures vary run to run; kept apart from the deterministic report
    write_kv(out / "timing.kv", report.timing_kv())
    if args.plot:
        from .core import resultant_array
        from .gate import gate_stream
        from .plotting import plot_gate_trace

        passed, _ = gate_stream(np.column_stack([t, imu]), cfg)
        plot_gate_trace(t, resultant_array(imu), passed, out / "gate.png")
    for e in events:
        print(e.csv_row())
    print(report.text(), end="", file=sys.stderr)
    return {"alerts": report.alerts, "windows_classified": report.windows_classified}


COMMANDS = {
    "ingest": (cmd_ingest, "out", True),
    "extract": (cmd_extract, "out", False),
    "train": (cmd_train, "out", False),
    "search": (cmd_search, "out", True),
    "eval": (cmd_eval, "report", True),
    "sweep-window": (cmd_sweep_window, "report", True),
    "sweep-features": (cmd_sweep_features, "report", True),
    "pca-study": (cmd_pca_study, "report", True),
    "gate-stats": (cmd_gate_stats, "report", True),
    "simulate": (cmd_simulate, "report", True),
}


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config_file(parser: Parser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` act as defaults that flags override."""
    path = _config_path(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in read_kv(path).items():
        if key in MANIFEST_META or key.startswith("result_"):
            continue
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise ConfigError(f"unknown key {key!r} in {path} for '{command}'", "config")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = to_bool(raw)
        elif raw.lower() == "none":
            defaults[key] = None
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (TypeError, ValueError):
                raise ConfigError(f"bad value {raw!r} for {key} in {path}", "config") from None
        if defaults[key] is not None:
            action.required = False
            for group in sub._mutually_exclusive_groups:
                if action in group._group_actions:
                    group.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _manifest(args, status: str, extra=None) -> dict:
    d = {"command": args.command, "version": __version__, "status": status}
    for key, value in sorted(vars(args).items()):
        if key in ("command", "config", "verbose"):
            continue
        d[key] = value
    # record resolved parameters so the manifest alone reproduces the run
    if "n_trees" in d:
        d.update({k: v for k, v in forest_config(args).to_kv().items() if k != "seed"})
    if "t_sta" in d:
        d.update({k: v for k, v in gate_config(args).to_kv().items() if k in ("t_sta", "t_lta", "threshold")})
    if extra:
        d.update(extra)
    return d


def _validate(args):
    check_seed(args.seed)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1", "threads")
    if getattr(args, "top_k", 0) is not None and getattr(args, "top_k", 0) < 0:
        raise ConfigError("--top-k must be >= 0", "top_k")
    if hasattr(args, "n_trees"):
        forest_config(args)
    if args.command in ("gate-stats", "simulate"):
        gate_config(args)
    if hasattr(args, "test_fraction") and not 0 < args.test_fraction < 1:
        raise ConfigError("--test-fraction must lie strictly between 0 and 1", "test_fraction")
    if args.command == "search" and (args.draws < 1 or args.folds < 2):
        raise ConfigError("--draws must be >= 1 and --folds >= 2", "draws", "folds")
    if hasattr(args, "window"):
        if not args.window > 0:
            raise ConfigError("--window must be positive", "window")


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"facegate: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"facegate: error: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    func, out_attr, out_is_dir = COMMANDS[args.command]
    out = Path(getattr(args, out_attr))
    try:
        _validate(args)
    except ConfigError as exc:
        flags = ", ".join(_flag(n) for n in exc.names) or "?"
        print(f"facegate {args.command}: invalid parameters ({flags}): {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"facegate {args.command}: {exc}", file=sys.stderr)
        return 2

    manifest_path = out / "manifest.kv" if out_is_dir else out.with_name(out.name + ".manifest.kv")
    try:
        if out_is_dir:
            out.mkdir(parents=True, exist_ok=True)
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
        write_kv(manifest_path, _manifest(args, "running"))
        results = func(args, out) or {}
        write_kv(manifest_path, _manifest(args, "ok", {f"result_{k}": v for k, v in results.items()}))
        return 0
    except ConfigError as exc:
        code, msg = 1, f"invalid parameters ({', '.join(_flag(n) for n in exc.names) or '?'}): {exc}"
    except (OSError, FacegateError) as exc:
        code, msg = 2, str(exc)
    print(f"facegate {args.command}: error: {msg}", file=sys.stderr)
    try:
        write_kv(manifest_path, _manifest(args, "failed", {"error": msg.replace("\n", " ")}))
    except OSError:
        pass
    return code


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

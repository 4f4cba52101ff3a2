"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 finished with failed
runs, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from math import comb
from pathlib import Path

from . import __version__
from .aggregate import AggMethod, BtlConfig
from .dataset import (SynthConfig, generate_synthetic, load_csv, load_truth_csv, normalize, save_csv,
                      save_truth_csv, split_holdout, system_truth)
from .errors import PrefSQAError, ValidationError
from .metrics import paired_t_test
from .pairgen import PairMethod, generate_plan, realize_plan, validate_k
from .preference import ThresholdMethod, Thresholds, fit_eer_thresholds
from .report import write_chart
from .simulate import (SimConfig, SimResult, dev_preferences, load_results_csv, run_bound_simulation,
                       run_model_eval, write_summary_csv)
from .trainer import ScoreModel, TrainConfig, train

log = logging.getLogger("prefsqa")

EXIT_OK, EXIT_USAGE, EXIT_RUN_ERRORS, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("k values must be positive")
    return vals


def _choice_list(enum_cls):
    def parse(text: str):
        try:
            return [enum_cls(x.strip().lower()) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"choose from {','.join(e.value for e in enum_cls)}, got {text!r}") from None
    return parse


def _quality(text: str) -> tuple[str, float, float]:
    parts = text.split(":")
    if len(parts) != 3 or parts[0] not in ("uniform", "normal"):
        raise argparse.ArgumentTypeError("expected uniform:LOW:HIGH or normal:MEAN:SD")
    return parts[0], float(parts[1]), float(parts[2])


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("-o", "--out", type=Path, required=True, help="output directory")
    # outputs never depend on --jobs; only simulate and eval use more than one process
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (simulate, eval)")


def _btl_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--btl-max-iter", type=_positive_int, default=200)
    p.add_argument("--btl-tol", type=float, default=1e-4)
    p.add_argument("--btl-prior", type=_nonneg_float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prefsqa", description="Preference-based ranking of systems from MOS ratings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic rating dataset")
    p.add_argument("--systems", type=_positive_int, default=175)
    p.add_argument("--utterances", type=_positive_int, default=28, help="utterances per system")
    p.add_argument("--ratings-per-utterance", type=_positive_int, default=8)
    p.add_argument("--listeners", type=_positive_int, default=288)
    p.add_argument("--quality", type=_quality, default=("uniform", 1.0, 5.0))
    p.add_argument("--bias-sd", type=_nonneg_float, default=0.3)
    p.add_argument("--noise-sd", type=_nonneg_float, default=0.5)
    p.add_argument("--no-quantize", action="store_true")
    p.add_argument("--fresh-listeners", action="store_true")
    p.add_argument("--dev-per-utterance", type=int, default=0,
                   help="also write train.csv/dev.csv holding out this many ratings per utterance")
    _common(p)

    p = sub.add_parser("plan", help="generate a pair plan and optionally realize it")
    p.add_argument("--method", type=PairMethod, choices=list(PairMethod), required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--systems", type=_positive_int, help="number of systems (plan only)")
    src.add_argument("--data", type=Path, help="dataset CSV; the plan is also realized on it")
    p.add_argument("--same-listener", action="store_true")
    p.add_argument("--strict", action="store_true")
    _common(p)

    p = sub.add_parser("simulate", help="Monte-Carlo ranking bound from ground-truth ratings")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="system score CSV (default: per-system mean rating)")
    p.add_argument("--method", type=PairMethod, choices=list(PairMethod), required=True)
    p.add_argument("--agg", type=_choice_list(AggMethod), default=[AggMethod.DC],
                   help="comma list of dc,btl,wc")
    p.add_argument("--k", type=_int_list, required=True, help="comma-separated pair counts")
    p.add_argument("--runs", type=_positive_int, default=100)
    p.add_argument("--same-listener", action="store_true")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--svg", action="store_true", help="also write chart.svg")
    _btl_flags(p)
    _common(p)

    p = sub.add_parser("train", help="train a score table")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--objective", choices=["preference", "direct"], default="preference")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--pairs-per-epoch", type=_positive_int)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    _common(p)

    p = sub.add_parser("eval", help="evaluate a trained model on regenerated test pairs")
    p.add_argument("--model", type=Path, required=True, help="directory with theta.csv and bias.csv")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--truth", type=Path)
    p.add_argument("--method", type=PairMethod, choices=list(PairMethod), default=PairMethod.BS)
    p.add_argument("--k", type=_positive_int, help="pair count (default: two BS rounds)")
    p.add_argument("--threshold", type=ThresholdMethod, choices=list(ThresholdMethod))
    p.add_argument("--agg", type=AggMethod, choices=list(AggMethod), required=True)
    p.add_argument("--repeats", type=_positive_int, default=20)
    p.add_argument("--dev", type=Path, help="dev ratings CSV for EER thresholds")
    p.add_argument("--dev-pairs", type=_positive_int, default=20000)
    p.add_argument("--thresholds", type=Path, help="thresholds JSON (instead of --dev)")
    p.add_argument("--same-listener", action="store_true")
    _btl_flags(p)
    _common(p)

    p = sub.add_parser("ttest", help="paired t-test between two eval result files")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("-o", "--out", type=Path, help="optional JSON output file")

    p = sub.add_parser("rerun", help="re-execute the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    return parser


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "value"):
        return v.value
    if isinstance(v, Path):
        return str(v)
    return v


def _write_manifest(args, argv: list[str], outputs: list[Path], inputs: list[Path], started: float) -> None:
    config = {k: _plain(v) for k, v in vars(args).items()}
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _truth(args, ds):
    return load_truth_csv(args.truth) if args.truth else system_truth(ds)


def cmd_synth(args) -> tuple[int, list[Path], list[Path]]:
    cfg = SynthConfig(args.systems, args.utterances, args.ratings_per_utterance, args.listeners,
                      args.quality, args.bias_sd, args.noise_sd, not args.no_quantize, args.seed,
                      args.fresh_listeners)
    try:
        cfg.validate()
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    ds, latent = generate_synthetic(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    outs = [args.out / "dataset.csv", args.out / "latent.csv"]
    save_csv(ds, outs[0])
    save_truth_csv(latent, outs[1])
    if args.dev_per_utterance:
        tr, dev = split_holdout(ds, args.dev_per_utterance, args.seed)
        outs += [args.out / "train.csv", args.out / "dev.csv"]
        save_csv(tr, outs[2])
        save_csv(dev, outs[3])
    log.info("wrote %d ratings over %d systems", len(ds), len(ds.systems))
    return EXIT_OK, outs, []


def cmd_plan(args):
    ds = load_csv(args.data) if args.data else None
    n = len(ds.systems) if ds is not None else args.systems
    try:
        validate_k(args.method, n, args.k)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    import numpy as np
    rng = np.random.default_rng(args.seed)
    plan = generate_plan(args.method, n, args.k, rng)
    args.out.mkdir(parents=True, exist_ok=True)
    outs = [args.out / "plan.csv"]
    plan.to_csv(outs[0], ds.systems if ds is not None else None)
    if ds is not None:
        real = realize_plan(plan, ds, args.same_listener, args.strict, rng)
        outs.append(args.out / "pairs.csv")
        real.to_csv(outs[1])
        print(f"realized {len(real)} pairs, {real.fallbacks} same-listener fallbacks")
    return EXIT_OK, outs, [args.data] if args.data else []


def cmd_simulate(args):
    ds = load_csv(args.data)
    truth = _truth(args, ds)
    for agg in args.agg:
        if agg not in (AggMethod.DC, AggMethod.BTL, AggMethod.WC):
            raise UsageError(f"simulate aggregates with dc, btl or wc, not {agg.value}")
    for k in args.k:
        try:
            validate_k(args.method, len(ds.systems), k)
        except ValidationError as exc:
            raise UsageError(str(exc)) from None
    btl = BtlConfig(args.btl_max_iter, args.btl_tol, args.btl_prior)
    results = []
    for agg in args.agg:
        cfg = SimConfig(args.method, tuple(args.k), args.same_listener, agg, args.runs, args.seed, args.strict, btl)
        results.append(run_bound_simulation(ds, truth, cfg, jobs=args.jobs))
    args.out.mkdir(parents=True, exist_ok=True)
    combined = SimResult([])
    combined.rows = [r for res in results for r in res.rows]
    outs = [args.out / "results.csv", args.out / "summary.csv"]
    combined.to_csv(outs[0])
    summary = [s for res in results for s in res.summary()]
    write_summary_csv(summary, outs[1])
    for s in summary:
        print(f"{s.method} {s.aggregator} same_listener={int(s.same_listener)} k={s.k}: "
              f"mean SRCC {s.mean_srcc:.4f} (sd {s.sd_srcc:.4f}, {s.n_ok} ok)")
    if args.svg:
        series = {}
        for res in results:
            for s in res.summary():
                label = f"{s.method.upper()}+{s.aggregator.upper()}{' SL' if s.same_listener else ''}"
                series.setdefault(label, []).append((s.k, s.mean_srcc))
        if any(not math.isnan(y) for pts in series.values() for _, y in pts):
            outs.append(args.out / "chart.svg")
            write_chart(series, outs[-1], title="Mean SRCC vs number of comparisons")
    n_err = sum(res.n_errors for res in results)
    if n_err:
        log.warning("%d run(s) failed; see status column", n_err)
    return (EXIT_RUN_ERRORS if n_err else EXIT_OK), outs, [args.data] + ([args.truth] if args.truth else [])


def cmd_train(args):
    ds = normalize(load_csv(args.data))
    cfg = TrainConfig(args.lr, args.epochs, args.pairs_per_epoch, args.batch_size, args.seed, args.objective)
    history: list[float] = []
    model = train(ds, cfg, history)
    args.out.mkdir(parents=True, exist_ok=True)
    outs = [args.out / "theta.csv", args.out / "bias.csv"]
    model.save(*outs)
    if history:
        print(f"final epoch loss {history[-1]:.6f}")
    return EXIT_OK, outs, [args.data]


def cmd_eval(args):
    if args.agg is AggMethod.PS and args.threshold is not None:
        raise UsageError("--agg ps aggregates raw preferences; drop --threshold")
    if args.agg in (AggMethod.DC, AggMethod.WC, AggMethod.BTL) and args.threshold is None:
        raise UsageError(f"--agg {args.agg.value} needs --threshold er|eer|nd")
    if args.threshold is ThresholdMethod.EER and not (args.dev or args.thresholds):
        raise UsageError("--threshold eer needs --dev or --thresholds")
    ds = load_csv(args.data)
    truth = _truth(args, ds)
    model = ScoreModel.load(args.model / "theta.csv", args.model / "bias.csv")
    n = len(ds.systems)
    k = args.k if args.k is not None else 2 * comb(n, 2)
    if args.agg is not AggMethod.MEAN:
        try:
            validate_k(args.method, n, k)
        except ValidationError as exc:
            raise UsageError(str(exc)) from None
    pred = model.predict_dataset(ds)
    args.out.mkdir(parents=True, exist_ok=True)
    outs, inputs = [], [args.data, args.model / "theta.csv", args.model / "bias.csv"]
    th = None
    if args.threshold is ThresholdMethod.EER:
        if args.thresholds:
            th = Thresholds.from_json(args.thresholds)
            inputs.append(args.thresholds)
        else:
            dev = load_csv(args.dev)
            p, gt = dev_preferences(model.predict_dataset(dev), dev, args.dev_pairs, args.seed,
                                    same_listener=False)
            th = fit_eer_thresholds(p, gt)
            inputs.append(args.dev)
        outs.append(args.out / "thresholds.json")
        th.to_json(outs[-1])
    res = run_model_eval(pred, ds, truth, args.method, k, args.threshold, args.agg, args.repeats, args.seed,
                         thresholds=th, same_listener=args.same_listener,
                         btl=BtlConfig(args.btl_max_iter, args.btl_tol, args.btl_prior), jobs=args.jobs)
    outs += [args.out / "results.csv", args.out / "summary.csv"]
    res.to_csv(outs[-2])
    res.summary_to_csv(outs[-1])
    s = res.summary()[0]
    name = "UTP_SC" if args.agg is AggMethod.MEAN else "_".join(
        x.upper() for x in ("utp", args.method.value, args.threshold.value if args.threshold else None,
                            args.agg.value) if x)
    print(f"{name}: mean SRCC {s.mean_srcc:.4f} over {s.n_ok}/{len(res.rows)} repeats")
    return (EXIT_RUN_ERRORS if res.n_errors else EXIT_OK), outs, inputs


def cmd_ttest(args):
    a, b = load_results_csv(args.a), load_results_csv(args.b)
    if len(a) != len(b):
        raise ValidationError(f"result files have {len(a)} and {len(b)} rows")
    xa = [float(r["srcc"]) for r in a]
    xb = [float(r["srcc"]) for r in b]
    if any(math.isnan(v) for v in xa + xb):
        raise ValidationError("result files contain failed runs")
    t, p = paired_t_test(xa, xb)
    print(f"t = {t:.6f}, p = {p:.6g} (two-sided, df = {len(xa) - 1})")
    if args.out:
        args.out.write_text(json.dumps({"t": t, "p": p, "df": len(xa) - 1, "n": len(xa)}) + "\n", encoding="utf-8")
    return EXIT_OK, [], []


COMMANDS = {"synth": cmd_synth, "plan": cmd_plan, "simulate": cmd_simulate, "train": cmd_train,
            "eval": cmd_eval, "ttest": cmd_ttest}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "rerun":
        try:
            recorded = json.loads(args.manifest.read_text(encoding="utf-8"))["argv"]
        except OSError as exc:
            print(f"prefsqa: {exc}", file=sys.stderr)
            return EXIT_IO
        except (ValueError, KeyError):
            print(f"prefsqa: {args.manifest} is not a manifest", file=sys.stderr)
            return EXIT_USAGE
        return main(recorded)
    started = time.time()
    try:
        code, outs, inputs = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"prefsqa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PrefSQAError, ValueError) as exc:
        print(f"prefsqa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"prefsqa {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    if outs and getattr(args, "out", None) is not None and args.out.is_dir():
        _write_manifest(args, argv, outs, inputs, started)
    return code


if __name__ == "__main__":
    sys.exit(main())

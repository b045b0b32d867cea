"""Command-line entry point.

Subcommands: synth, train, forecast, eval, ablate, gradcheck.  Every command
that produces files writes them under ``--out-dir`` together with a
``run.json`` holding the resolved configuration, seeds and library versions.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, atomic_write, load_checkpoint, read_manifest, save_checkpoint
from .data import CsvFormatError, SeriesRecord, SplitSpec, SynthSpec, dataset_scale, load_csv, synth_linear_trend, write_csv
from .experiments import compare_variants, holdout_windows, synthetic_extrapolation, training_pairs
from .forecasting import QUANTILE_LEVELS, forecast_point, forecast_samples
from .gradcheck import run_suite
from .metrics import crps, nmae, per_series
from .model import BinConvConfig, VariantKind, build_variant
from .training import TrainConfig, fit

SCALING_MODES = ("per_sample", "dataset")
FORECAST_MODES = ("argmax", "sampling")
QUANTILE_COLUMNS = [f"q{round(a * 100):02d}" for a in QUANTILE_LEVELS]


class ConfigError(ValueError):
    pass


def _only_keys(section: dict, allowed, where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")
    return section


def _variant(name) -> VariantKind:
    try:
        return VariantKind(name)
    except ValueError:
        raise ConfigError(f"unknown variant {name!r}; choose from {[k.value for k in VariantKind]}") from None


@dataclass
class RunConfig:
    """Everything a run needs, validated before any work starts.

    ``data_path`` and ``synthetic`` are mutually exclusive; with
    ``synthetic`` the linear-trend series is generated from the run seed.
    """

    model: BinConvConfig
    train: TrainConfig
    split: SplitSpec
    data_path: str | None = None
    synthetic: SynthSpec | None = None
    variant: VariantKind = VariantKind.STANDARD
    scaling: str = "per_sample"
    mode: str = "argmax"
    n_samples: int = 100
    seed: int = 0
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".", seed=None, variant=None, scaling=None, mode=None, n_samples=None):
        _only_keys(d, {"data", "model", "train", "variant", "scaling", "forecast", "seed"}, "config")
        data = _only_keys(d.get("data", {}), {"path", "synthetic", "horizon", "context_length"}, "data")
        model_kw = _only_keys(d.get("model", {}), {f.name for f in fields(BinConvConfig)} - {"context_length"}, "model")
        train_kw = _only_keys(d.get("train", {}), {f.name for f in fields(TrainConfig)} - {"seed"}, "train")
        fc = _only_keys(d.get("forecast", {}), {"mode", "n_samples"}, "forecast")

        seed = int(d.get("seed", 0) if seed is None else seed)
        synthetic = path = None
        if "synthetic" in data:
            if "path" in data:
                raise ConfigError("data.path and data.synthetic are mutually exclusive")
            sd = data["synthetic"] if isinstance(data["synthetic"], dict) else {}
            synthetic = SynthSpec(**_only_keys(sd, {f.name for f in fields(SynthSpec)}, "data.synthetic"))
            if synthetic.train_length + synthetic.horizon != synthetic.length:
                raise ConfigError("data.synthetic: train_length + horizon must equal length")
            split = SplitSpec(synthetic.horizon, synthetic.context_length)
        else:
            if "path" not in data:
                raise ConfigError("data.path is required (or data.synthetic)")
            path = str((Path(base_dir) / data["path"]).resolve())
            if "horizon" not in data:
                raise ConfigError("data.horizon is required")
            split = SplitSpec(int(data["horizon"]), data.get("context_length"))

        default_scaling = "dataset" if synthetic else "per_sample"
        try:
            cfg = cls(
                model=BinConvConfig(split.context_length, **model_kw),
                train=TrainConfig(**train_kw, seed=seed),
                split=split,
                data_path=path,
                synthetic=synthetic,
                variant=_variant(variant or d.get("variant", "standard")),
                scaling=scaling or d.get("scaling", default_scaling),
                mode=mode or fc.get("mode", "argmax"),
                n_samples=int(n_samples if n_samples is not None else fc.get("n_samples", 100)),
                seed=seed,
                raw=d,
            )
        except TypeError as e:
            raise ConfigError(f"invalid config value: {e}") from None
        if cfg.scaling not in SCALING_MODES:
            raise ConfigError(f"scaling must be one of {SCALING_MODES}, got {cfg.scaling!r}")
        if cfg.mode not in FORECAST_MODES:
            raise ConfigError(f"forecast mode must be one of {FORECAST_MODES}, got {cfg.mode!r}")
        if cfg.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if path is not None and not Path(path).is_file():
            raise ConfigError(f"data file not found: {path}")
        return cfg

    @classmethod
    def load(cls, path, **overrides):
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        return cls.from_dict(d, Path(path).parent, **overrides)

    def records(self) -> list[SeriesRecord]:
        if self.synthetic is not None:
            return [synth_linear_trend(self.synthetic, seed=self.seed)]
        return load_csv(self.data_path)

    def snapshot(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "train": asdict(self.train),
            "split": asdict(self.split),
            "data_path": self.data_path,
            "synthetic": asdict(self.synthetic) if self.synthetic else None,
            "variant": self.variant.value,
            "scaling": self.scaling,
            "mode": self.mode,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


# -- artifact helpers ---------------------------------------------------------

def versions() -> dict:
    return {"binconv": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def _fmt(v) -> str:
    return repr(float(v))


def write_run_record(out_dir: Path, command: str, argv, extra=None) -> None:
    rec = {"command": command, "argv": list(argv), "versions": versions()}
    rec.update(extra or {})
    write_json(out_dir / "run.json", rec)


def _train_scale(cfg: RunConfig, records) -> float | None:
    if cfg.scaling == "per_sample":
        return None
    return dataset_scale([r.values[:-cfg.split.horizon] for r in records])


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SynthSpec()
    if args.config:
        cfg = RunConfig.load(args.config, seed=args.seed)
        if cfg.synthetic is None:
            raise ConfigError("synth needs a config with data.synthetic")
        spec = cfg.synthetic
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv([synth_linear_trend(spec, seed=seed)], out / "synthetic.csv")
    write_run_record(out, "synth", args.argv, {"seed": seed, "synthetic": asdict(spec)})
    print(f"wrote {out / 'synthetic.csv'}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, seed=args.seed, variant=args.variant, scaling=args.scaling)
    out = Path(args.out_dir)
    records = cfg.records()
    scale = _train_scale(cfg, records)
    pairs = training_pairs(records, cfg.split)
    model = build_variant(cfg.variant, cfg.model, cfg.seed)
    hist = fit(model, pairs, cfg.train, scale=scale)
    extra = {"scaling": cfg.scaling, "scale": scale, "horizon": cfg.split.horizon}
    save_checkpoint(model, out / "checkpoint", seed=cfg.seed, epoch=cfg.train.epochs, extra=extra)
    write_json(out / "history.json", hist.to_dict())
    write_run_record(out, "train", args.argv, {"config": cfg.snapshot(), "seed": cfg.seed, "n_pairs": len(pairs)})
    print(f"trained {cfg.variant.value} on {len(pairs)} pairs, final loss {hist.losses[-1]:.6f}")
    return 0


def _forecast_windows(records, split: SplitSpec, origin: str):
    if origin == "holdout":
        return [(sid, ctx) for sid, ctx, _ in holdout_windows(records, split)]
    return [(r.series_id, r.values[-split.context_length:]) for r in records if r.values.size >= split.context_length]


def cmd_forecast(args) -> int:
    manifest = read_manifest(args.checkpoint)
    model = load_checkpoint(args.checkpoint)
    extra = manifest.get("extra", {})
    horizon = args.horizon or extra.get("horizon")
    if not horizon:
        raise ConfigError("--horizon is required when the checkpoint does not record one")
    split = SplitSpec(int(horizon), model.config.context_length)
    mode = args.mode or "argmax"
    n_samples = args.n_samples or 100
    seed = 0 if args.seed is None else args.seed
    if n_samples < 1:
        raise ConfigError("--n-samples must be >= 1")
    scale = extra.get("scale") if extra.get("scaling") == "dataset" else None
    windows = _forecast_windows(load_csv(args.data), split, args.origin)
    if not windows:
        raise ConfigError("no series is long enough to forecast from")
    out = Path(args.out_dir)
    rows, sample_rows = [], []
    for sid, ctx in windows:
        if mode == "argmax":
            path = forecast_point(model, ctx, split.horizon, scale=scale)
            rows.extend([sid, h + 1, _fmt(v)] for h, v in enumerate(path))
        else:
            res = forecast_samples(model, ctx, split.horizon, n_samples, seed, scale=scale)
            for h in range(split.horizon):
                rows.append([sid, h + 1, *map(_fmt, res.quantiles[:, h])])
            for i, p in enumerate(res.sample_paths):
                sample_rows.extend([sid, i, h + 1, _fmt(v)] for h, v in enumerate(p))
    header = ["series_id", "step"] + (["point"] if mode == "argmax" else QUANTILE_COLUMNS)
    write_rows(out / "forecast.csv", header, rows)
    if sample_rows:
        write_rows(out / "samples.csv", ["series_id", "sample", "step", "value"], sample_rows)
    write_run_record(out, "forecast", args.argv, {
        "checkpoint": str(Path(args.checkpoint).resolve()), "data": str(Path(args.data).resolve()),
        "mode": mode, "n_samples": n_samples, "seed": seed, "origin": args.origin, "horizon": split.horizon,
    })
    print(f"wrote {out / 'forecast.csv'}")
    return 0


def read_forecast_csv(path) -> tuple[dict, str]:
    """Returns ({series_id: (H,) point or (L, H) quantile array}, kind)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if cols[:2] != ["series_id", "step"]:
            raise CsvFormatError(f"{path}: expected columns series_id,step,...")
        kind = "point" if cols[2:] == ["point"] else "quantiles"
        if kind == "quantiles" and cols[2:] != QUANTILE_COLUMNS:
            raise CsvFormatError(f"{path}: expected 'point' or {','.join(QUANTILE_COLUMNS)}")
        by: dict[str, list] = {}
        for row in reader:
            vals = [float(row[c]) for c in cols[2:]]
            by.setdefault(row["series_id"], []).append((int(row["step"]), vals))
    out = {}
    for sid, items in by.items():
        items.sort()
        arr = np.array([v for _, v in items]).T
        out[sid] = arr[0] if kind == "point" else arr
    return out, kind


def cmd_eval(args) -> int:
    out = Path(args.out_dir)
    if args.aggregate:
        runs = [json.loads(Path(p).read_text()) for p in args.aggregate]
        agg = {}
        for key in ("nmae", "crps"):
            v = np.array([r[key] for r in runs], dtype=np.float64)
            agg[key] = {"avg": v.mean(), "min": v.min(), "max": v.max(), "std": v.std(ddof=1) if v.size > 1 else 0.0}
        agg["n_runs"] = len(runs)
        agg["sources"] = [str(p) for p in args.aggregate]
        write_json(out / "aggregate.json", agg)
        write_run_record(out, "eval", args.argv)
        print(json.dumps({k: agg[k] for k in ("nmae", "crps")}))
        return 0
    if not (args.forecasts and args.data):
        raise ConfigError("eval needs --forecasts and --data (or --aggregate)")
    fc, kind = read_forecast_csv(args.forecasts)
    records = {r.series_id: r.values for r in load_csv(args.data)}
    missing = set(fc) - set(records)
    if missing:
        raise ConfigError(f"forecast series not in data: {', '.join(sorted(missing))}")
    ids = list(fc)
    H = {fc[s].shape[-1] for s in ids}
    if len(H) != 1:
        raise ConfigError("all series must share one horizon")
    H = H.pop()
    actuals = np.array([records[s][-H:] for s in ids])
    if kind == "point":
        point = np.array([fc[s] for s in ids])
        quant = np.repeat(point[:, None, :], QUANTILE_LEVELS.size, axis=1)
    else:
        quant = np.array([fc[s] for s in ids])
        point = quant[:, list(QUANTILE_LEVELS).index(0.5)]
    rows = per_series(actuals, point, quant)
    for sid, r in zip(ids, rows):
        r["series_id"] = sid
    metrics = {"nmae": nmae(actuals, point), "crps": crps(actuals, quant), "horizon": H,
               "forecast_kind": kind, "per_series": rows}
    write_json(out / "metrics.json", metrics)
    write_run_record(out, "eval", args.argv, {"forecasts": str(args.forecasts), "data": str(args.data)})
    print(json.dumps({"nmae": metrics["nmae"], "crps": metrics["crps"]}))
    return 0


def cmd_ablate(args) -> int:
    cfg = RunConfig.load(args.config, seed=args.seed, scaling=args.scaling)
    variants = [VariantKind(v) for v in (args.variant or [k.value for k in VariantKind])]
    out = Path(args.out_dir)
    if cfg.synthetic is not None:
        res = synthetic_extrapolation(cfg.seed, cfg.synthetic, cfg.train, variants, cfg.model)
        header = ["variant", "params", "test_nmae", "max_forecast", "train_max", "capped", "final_loss"]
        rows = []
        for name, v in res["variants"].items():
            rows.append([name, v["model"].num_parameters(), _fmt(v["test_nmae"]), _fmt(v["max_forecast"]),
                         _fmt(res["train_max"]), str(v["capped"]).lower(), _fmt(v["history"].losses[-1])])
        # plot-ready trace: actual series and each variant's two chained forecasts
        T, H = cfg.synthetic.length, cfg.synthetic.horizon
        trace_header = ["t", "actual"] + list(res["variants"])
        trace = []
        for t in range(T):
            row = [t, _fmt(res["series"][t])]
            for v in res["variants"].values():
                path = np.concatenate([v["tail_forecast"], v["test_forecast"]])
                k = t - (T - 2 * H)
                row.append(_fmt(path[k]) if k >= 0 else "")
            trace.append(row)
        write_rows(out / "forecast_trace.csv", trace_header, trace)
        summary = {n: {"test_nmae": v["test_nmae"], "max_forecast": v["max_forecast"], "capped": v["capped"]}
                   for n, v in res["variants"].items()}
        summary["train_max"] = res["train_max"]
        summary["bin_width"] = res["bin_width_original_units"]
    else:
        records = cfg.records()
        table = compare_variants(records, cfg.split, cfg.model, cfg.train, variants, cfg.scaling)
        header = ["variant", "params", "nmae", "final_loss"]
        rows = [[r["variant"], r["params"], _fmt(r["nmae"]), _fmt(r["final_loss"])] for r in table]
        summary = {r["variant"]: {"nmae": r["nmae"], "params": r["params"]} for r in table}
    write_rows(out / "comparison.csv", header, rows)
    write_json(out / "comparison.json", summary)
    write_run_record(out, "ablate", args.argv, {"config": cfg.snapshot(), "variants": [v.value for v in variants]})
    for r in rows:
        print(",".join(map(str, r)))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(0 if args.seed is None else args.seed)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:<24} rel_err={r.error:.3e} tol={r.tolerance:.0e}")
    return 0 if all(r.passed for r in results) else 1


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="binconv", description="Binary-encoded convolutional forecaster")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, seed=True):
        if out:
            sp.add_argument("--out-dir", required=True, help="directory for artifacts")
        if seed:
            sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("synth", help="write the synthetic linear-trend series")
    sp.add_argument("--config")
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    sp.add_argument("--config", required=True)
    sp.add_argument("--variant", choices=[k.value for k in VariantKind])
    sp.add_argument("--scaling", choices=SCALING_MODES)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("forecast", help="forecast from a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--mode", choices=FORECAST_MODES)
    sp.add_argument("--n-samples", type=int)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--origin", choices=("holdout", "end"), default="holdout",
                    help="holdout: forecast each series' final horizon; end: forecast past the data")
    common(sp)
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("eval", help="score forecasts or aggregate metric files")
    sp.add_argument("--forecasts")
    sp.add_argument("--data")
    sp.add_argument("--aggregate", nargs="+", metavar="METRICS_JSON")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train and compare model variants")
    sp.add_argument("--config", required=True)
    sp.add_argument("--variant", action="append", choices=[k.value for k in VariantKind])
    sp.add_argument("--scaling", choices=SCALING_MODES)
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    common(sp, out=False)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, CsvFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark driver: `lkf-bench <command> --config file.cfg --out dir`.

Commands
--------
generate     synthesize train/test datasets from the [dataset] section
train        fit a model on a dataset per [train]; writes checkpoint + log
eval         score methods on a test set per [eval]; writes metric tables
gain-curve   project a training log onto (epoch, loss, mean_gain) CSV
noise-trace  per-step noise diagnostics of a trained filter on one sequence

Configs are INI files checked against a strict schema: unknown sections or
keys are errors, as are missing required keys, so a typo never silently
falls back to a default. Every run copies the config bytes it consumed to
`<out>/config.echo.cfg` next to its outputs.

Failures print a single `error: ...` line on stderr and exit with code 1.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .filtering import build_lstm_kf, filter_sequence
from .kalman import (
    build_ca_model,
    build_cv_model,
    ema_filter,
    grid_search,
    grid_table_csv,
    kf_filter,
    measurement_estimates,
)
from .metrics import MethodMetrics, compute_metrics, metrics_to_csv, metrics_to_text
from .nets import preset_big_f, preset_small, standalone_lstm_filter
from .synth import (
    BurstSpec,
    TrajectoryDataset,
    apply_bursts,
    gen_linear_cv,
    gen_oscillator,
    load_dataset,
    save_dataset,
)
from .training import (
    TrainConfig,
    load_checkpoint,
    read_train_log,
    save_checkpoint,
    train_lstm_kf,
    train_standalone_lstm,
    write_train_log,
)

__all__ = ["main"]

_METHODS = ("measurements", "kalman_vel", "kalman_acc", "ema", "std_lstm", "lstm_kf")

_DEFAULT_Q_GRID = "0.1,0.3,1.0,3.0,10.0"
_DEFAULT_R_GRID = "0.1,0.3,1.0,3.0,10.0"
_DEFAULT_WINDOW_GRID = "1,2,3,5,8,13,21,34"

# small preset trains with gentle steps and short truncation; the big one
# needs a far lower rate and longer windows to stay stable.
_PRESET_TRAIN_DEFAULTS = {
    "small": {"learning_rate": 5e-4, "batch_size": 2, "truncation": 10, "decay": 1.0},
    "big": {"learning_rate": 1e-5, "batch_size": 2, "truncation": 100, "decay": 0.95},
}

_SCHEMA: dict[str, set[str]] = {
    "dataset": {
        "generator",
        "d",
        "length",
        "train_sequences",
        "test_sequences",
        "dt",
        "seed",
        "noise_q",
        "noise_r",
        "amplitude",
        "frequency",
        "burst_intervals",
        "burst_scale",
        "burst_seed",
    },
    "train": {
        "model",
        "preset",
        "train_data",
        "learning_rate",
        "epochs",
        "batch_size",
        "truncation",
        "lambda",
        "decay",
        "decay_start_epoch",
        "clip_norm",
        "seed",
    },
    "eval": {
        "methods",
        "train_data",
        "test_data",
        "checkpoint",
        "std_lstm_checkpoint",
        "q_grid",
        "r_grid",
        "window_grid",
    },
    "gain_curve": {"log"},
    "noise_trace": {"checkpoint", "data", "sequence"},
}


# ----------------------------------------------------------------------
# config handling
# ----------------------------------------------------------------------


def _load_config(path: Path) -> tuple[configparser.ConfigParser, bytes]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(raw.decode("utf-8"), source=str(path))
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not valid UTF-8") from None
    except configparser.Error as exc:
        raise ConfigError(f"bad config syntax: {exc}") from None
    for section in parser.sections():
        allowed = _SCHEMA.get(section)
        if allowed is None:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
    return parser, raw


def _section(parser: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if not parser.has_section(name):
        raise ConfigError(f"missing config section [{name}]")
    return parser[name]


def _require(sec, key: str) -> str:
    if key not in sec:
        raise ConfigError(f"missing key '{key}' in [{sec.name}]")
    return sec[key]


def _forbid(sec, key: str, reason: str) -> None:
    if key in sec:
        raise ConfigError(f"key '{key}' in [{sec.name}] not allowed: {reason}")


def _get_int(sec, key: str, default: int | None = None) -> int:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key '{key}' in [{sec.name}]")
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigError(f"bad integer for '{key}' in [{sec.name}]: {sec[key]!r}") from None


def _get_float(sec, key: str, default: float | None = None) -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key '{key}' in [{sec.name}]")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"bad number for '{key}' in [{sec.name}]: {sec[key]!r}") from None


def _parse_float_list(text: str, context: str) -> list[float]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ConfigError(f"empty entry in {context}")
        try:
            out.append(float(part))
        except ValueError:
            raise ConfigError(f"bad number {part!r} in {context}") from None
    return out


def _parse_int_list(text: str, context: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ConfigError(f"empty entry in {context}")
        try:
            out.append(int(part))
        except ValueError:
            raise ConfigError(f"bad integer {part!r} in {context}") from None
    return out


def _parse_intervals(text: str, context: str) -> list[tuple[int, int]]:
    """'61:80,141:160' -> [(61, 80), (141, 160)] (1-based inclusive)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        first, sep, second = part.partition(":")
        if not sep:
            raise ConfigError(f"bad interval {part!r} in {context}, expected start:end")
        try:
            out.append((int(first), int(second)))
        except ValueError:
            raise ConfigError(f"bad interval {part!r} in {context}") from None
    return out


def _echo_config(out_dir: Path, raw: bytes) -> None:
    (out_dir / "config.echo.cfg").write_bytes(raw)


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def _cmd_generate(parser, out_dir: Path, seed_override: int | None) -> None:
    sec = _section(parser, "dataset")
    generator = _require(sec, "generator")
    d = _get_int(sec, "d")
    length = _get_int(sec, "length")
    n_train = _get_int(sec, "train_sequences")
    n_test = _get_int(sec, "test_sequences")
    dt = _get_float(sec, "dt", 1.0)
    seed = seed_override if seed_override is not None else _get_int(sec, "seed", 0)

    if generator == "linear_cv":
        _forbid(sec, "amplitude", "linear_cv has no amplitude")
        _forbid(sec, "frequency", "linear_cv has no frequency")
        q = _get_float(sec, "noise_q")
        r = _get_float(sec, "noise_r")

        def gen(n_seq, offset):
            return gen_linear_cv(d, length, n_seq, q, r, dt=dt, seed=seed, index_offset=offset)

    elif generator == "oscillator":
        _forbid(sec, "noise_q", "oscillator has no process noise")
        amplitude = _get_float(sec, "amplitude")
        frequency = _get_float(sec, "frequency")
        r = _get_float(sec, "noise_r")

        def gen(n_seq, offset):
            return gen_oscillator(
                d, length, n_seq, amplitude, frequency, r, dt=dt, seed=seed, index_offset=offset
            )

    else:
        raise ConfigError(f"unknown generator {generator!r} (linear_cv or oscillator)")

    train_ds = gen(n_train, 0)
    test_ds = gen(n_test, n_train)  # disjoint noise streams

    if "burst_intervals" in sec:
        intervals = _parse_intervals(sec["burst_intervals"], "[dataset] burst_intervals")
        scale = _get_float(sec, "burst_scale")
        burst_seed = _get_int(sec, "burst_seed")
        spec = BurstSpec(intervals, scale)
        train_ds = apply_bursts(train_ds, spec, burst_seed)
        test_ds = apply_bursts(test_ds, spec, burst_seed)
    else:
        _forbid(sec, "burst_scale", "no burst_intervals given")
        _forbid(sec, "burst_seed", "no burst_intervals given")

    save_dataset(train_ds, out_dir / "train.ds")
    save_dataset(test_ds, out_dir / "test.ds")
    print(f"wrote train.ds ({n_train} sequences) and test.ds ({n_test} sequences)")
    print(f"  generator={generator} T={length} d={d} seed={seed}")


def _train_config_from_section(sec, preset: str, seed_override: int | None) -> TrainConfig:
    defaults = _PRESET_TRAIN_DEFAULTS[preset]
    clip_text = sec.get("clip_norm", "5.0")
    if clip_text.strip().lower() == "none":
        clip_norm = None
    else:
        try:
            clip_norm = float(clip_text)
        except ValueError:
            raise ConfigError(f"bad number for 'clip_norm' in [train]: {clip_text!r}") from None
    try:
        return TrainConfig(
            learning_rate=_get_float(sec, "learning_rate", defaults["learning_rate"]),
            epochs=_get_int(sec, "epochs"),
            batch_size=_get_int(sec, "batch_size", defaults["batch_size"]),
            truncation=_get_int(sec, "truncation", defaults["truncation"]),
            lam=_get_float(sec, "lambda", 0.8),
            decay=_get_float(sec, "decay", defaults["decay"]),
            decay_start_epoch=_get_int(sec, "decay_start_epoch", 2),
            clip_norm=clip_norm,
            seed=seed_override if seed_override is not None else _get_int(sec, "seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(f"bad [train] settings: {exc}") from None


def _cmd_train(parser, out_dir: Path, seed_override: int | None) -> None:
    sec = _section(parser, "train")
    model = sec.get("model", "lstm_kf")
    if model not in ("lstm_kf", "std_lstm"):
        raise ConfigError(f"unknown model {model!r} (lstm_kf or std_lstm)")
    preset = sec.get("preset", "small")
    if preset not in _PRESET_TRAIN_DEFAULTS:
        raise ConfigError(f"unknown preset {preset!r} (small or big)")
    dataset = load_dataset(_require(sec, "train_data"))
    config = _train_config_from_section(sec, preset, seed_override)

    if model == "lstm_kf":
        params = build_lstm_kf(dataset.dim, size=preset, seed=config.seed)
        result = train_lstm_kf(dataset, params, config)
        save_checkpoint(out_dir / "checkpoint.json", config, params=params)
    else:
        build = preset_small if preset == "small" else preset_big_f
        module = build(dataset.dim, seed=config.seed)
        result = train_standalone_lstm(dataset, module, config)
        save_checkpoint(out_dir / "checkpoint.json", config, module=module)
    write_train_log(out_dir / "train_log.csv", result.log)
    first, last = result.log[0], result.log[-1]
    print(f"trained {model} ({preset}) for {config.epochs} epochs")
    print(f"  loss {first.loss:.6g} -> {last.loss:.6g}")
    print("wrote checkpoint.json and train_log.csv")


def _load_typed_checkpoint(path: str, kind: str):
    try:
        ckpt = load_checkpoint(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from None
    if ckpt.kind != kind:
        raise ConfigError(f"checkpoint {path} holds a {ckpt.kind} model, expected {kind}")
    return ckpt


def _cmd_eval(parser, out_dir: Path) -> None:
    sec = _section(parser, "eval")
    methods = [m.strip() for m in _require(sec, "methods").split(",") if m.strip()]
    if not methods:
        raise ConfigError("no methods listed in [eval]")
    for m in methods:
        if m not in _METHODS:
            raise ConfigError(f"unknown method {m!r} (choose from {', '.join(_METHODS)})")
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate method in [eval] methods")

    test = load_dataset(_require(sec, "test_data"))
    dt = float(test.metadata.get("dt", 1.0))
    needs_grid = any(m in methods for m in ("kalman_vel", "kalman_acc", "ema"))
    train = load_dataset(_require(sec, "train_data")) if needs_grid else None

    truth = np.stack([s.truth for s in test.sequences])
    rows: list[MethodMetrics] = []
    for method in methods:
        if method == "measurements":
            estimates = np.stack([s.measurements for s in test.sequences])
        elif method in ("kalman_vel", "kalman_acc"):
            family = "cv" if method == "kalman_vel" else "ca"
            result = grid_search(
                train.train_pairs(),
                family,
                q_grid=_parse_float_list(
                    sec.get("q_grid", _DEFAULT_Q_GRID), "[eval] q_grid"
                ),
                r_grid=_parse_float_list(
                    sec.get("r_grid", _DEFAULT_R_GRID), "[eval] r_grid"
                ),
                dt=dt,
            )
            grid_table_csv(result, out_dir / f"grid_{family}.csv")
            build = build_cv_model if family == "cv" else build_ca_model
            model = build(test.dim, dt, result.best["q_scale"], result.best["r_scale"])
            estimates = np.stack(
                [
                    measurement_estimates(kf_filter(s.measurements, model), model)
                    for s in test.sequences
                ]
            )
        elif method == "ema":
            result = grid_search(
                train.train_pairs(),
                "ema",
                window_grid=_parse_int_list(
                    sec.get("window_grid", _DEFAULT_WINDOW_GRID), "[eval] window_grid"
                ),
            )
            grid_table_csv(result, out_dir / "grid_ema.csv")
            window = result.best["window"]
            estimates = np.stack([ema_filter(s.measurements, window) for s in test.sequences])
        elif method == "std_lstm":
            ckpt = _load_typed_checkpoint(_require(sec, "std_lstm_checkpoint"), "std_lstm")
            estimates = np.stack(
                [standalone_lstm_filter(s.measurements, ckpt.module) for s in test.sequences]
            )
        else:  # lstm_kf
            ckpt = _load_typed_checkpoint(_require(sec, "checkpoint"), "lstm_kf")
            estimates = np.stack(
                [filter_sequence(s.measurements, ckpt.params).filtered for s in test.sequences]
            )
        rows.append(compute_metrics(method, truth, estimates))

    (out_dir / "metrics.csv").write_text(metrics_to_csv(rows), encoding="utf-8")
    text = metrics_to_text(rows)
    (out_dir / "metrics.txt").write_text(text, encoding="utf-8")
    print(text, end="")


def _cmd_gain_curve(parser, out_dir: Path) -> None:
    sec = _section(parser, "gain_curve")
    try:
        log = read_train_log(_require(sec, "log"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read training log: {exc}") from None
    lines = ["epoch,loss,mean_gain"]
    for row in log:
        lines.append(f"{row.epoch},{row.loss!r},{row.mean_gain!r}")
    (out_dir / "gain_curve.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote gain_curve.csv ({len(log)} epochs)")


def _cmd_noise_trace(parser, out_dir: Path) -> None:
    sec = _section(parser, "noise_trace")
    ckpt = _load_typed_checkpoint(_require(sec, "checkpoint"), "lstm_kf")
    dataset = load_dataset(_require(sec, "data"))
    index = _get_int(sec, "sequence", 0)
    if not 0 <= index < dataset.n_sequences:
        raise ConfigError(
            f"sequence index {index} out of range (dataset holds {dataset.n_sequences})"
        )
    trace = filter_sequence(dataset.sequences[index].measurements, ckpt.params)
    r_norm = np.linalg.norm(trace.measurement_noise_diag, axis=1)
    q_norm = np.linalg.norm(trace.process_noise_diag, axis=1)
    span = float(r_norm.max() - r_norm.min())
    # flat traces normalize to 0.0 rather than dividing by zero
    normalized = (r_norm - r_norm.min()) / span if span > 0 else np.zeros_like(r_norm)
    lines = ["t,r_diag_norm,q_diag_norm,r_diag_norm_normalized"]
    for t in range(len(trace)):
        lines.append(
            f"{t + 1},{float(r_norm[t])!r},{float(q_norm[t])!r},{float(normalized[t])!r}"
        )
    (out_dir / "noise_trace.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote noise_trace.csv ({len(trace)} steps, sequence {index})")


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lkf-bench", description="trajectory filtering benchmark driver"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("generate", "synthesize train/test datasets"),
        ("train", "train a model on a dataset"),
        ("eval", "score methods on a test set"),
        ("gain-curve", "export (epoch, loss, mean_gain) from a training log"),
        ("noise-trace", "export per-step noise norms of a trained filter"),
    ]
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="INI config file")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="override the config seed (generate and train; ignored elsewhere)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config, raw = _load_config(args.config)
        out_dir: Path = args.out
        out_dir.mkdir(parents=True, exist_ok=True)
        _echo_config(out_dir, raw)
        if args.command == "generate":
            _cmd_generate(config, out_dir, args.seed)
        elif args.command == "train":
            _cmd_train(config, out_dir, args.seed)
        elif args.command == "eval":
            _cmd_eval(config, out_dir)
        elif args.command == "gain-curve":
            _cmd_gain_curve(config, out_dir)
        else:
            _cmd_noise_trace(config, out_dir)
    except Exception as exc:  # noqa: BLE001  (CLI boundary: one-line reports)
        message = " ".join(str(exc).split()) or exc.__class__.__name__
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())

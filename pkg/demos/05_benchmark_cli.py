#!/usr/bin/env python3
"""Drive the lkf-bench command line end to end in a temporary directory:
generate data, train two models, score every method, and export the
gain-curve and noise-trace diagnostics."""

import subprocess
import sys
import tempfile
import textwrap
from pathlib import Path

root = Path(tempfile.mkdtemp(prefix="lkf-demo-"))
print(f"working in {root}\n")


def write(name, body):
    path = root / name
    path.write_text(textwrap.dedent(body).lstrip())
    return path


def run(*args):
    cmd = [sys.executable, "-m", "lstmkf.cli", *map(str, args)]
    print("$ lkf-bench " + " ".join(map(str, args)))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    sys.stdout.write(textwrap.indent(proc.stdout, "  "))
    if proc.returncode != 0:
        sys.stdout.write(textwrap.indent(proc.stderr, "  "))
        raise SystemExit(proc.returncode)
    print()


gen_cfg = write("gen.cfg", """
    [dataset]
    generator = oscillator
    d = 2
    length = 100
    train_sequences = 6
    test_sequences = 4
    amplitude = 2.0
    frequency = 0.05
    noise_r = 0.25
    seed = 11
""")
run("generate", "--config", gen_cfg, "--out", root / "data")

train_cfg = write("train.cfg", f"""
    [train]
    model = lstm_kf
    preset = small
    train_data = {root / 'data' / 'train.ds'}
    learning_rate = 0.001
    epochs = 25
    seed = 2
""")
run("train", "--config", train_cfg, "--out", root / "model")

std_cfg = write("train_std.cfg", f"""
    [train]
    model = std_lstm
    preset = small
    train_data = {root / 'data' / 'train.ds'}
    learning_rate = 0.001
    epochs = 25
    seed = 2
""")
run("train", "--config", std_cfg, "--out", root / "model_std")

eval_cfg = write("eval.cfg", f"""
    [eval]
    methods = measurements,kalman_vel,kalman_acc,ema,std_lstm,lstm_kf
    train_data = {root / 'data' / 'train.ds'}
    test_data = {root / 'data' / 'test.ds'}
    checkpoint = {root / 'model' / 'checkpoint.json'}
    std_lstm_checkpoint = {root / 'model_std' / 'checkpoint.json'}
""")
run("eval", "--config", eval_cfg, "--out", root / "scores")

gain_cfg = write("gain.cfg", f"""
    [gain_curve]
    log = {root / 'model' / 'train_log.csv'}
""")
run("gain-curve", "--config", gain_cfg, "--out", root / "scores")

trace_cfg = write("trace.cfg", f"""
    [noise_trace]
    checkpoint = {root / 'model' / 'checkpoint.json'}
    data = {root / 'data' / 'test.ds'}
    sequence = 0
""")
run("noise-trace", "--config", trace_cfg, "--out", root / "scores")

print("files produced:")
for path in sorted(root.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(root)}  ({path.stat().st_size} bytes)")

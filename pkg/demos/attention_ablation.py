"""Attention on versus off, end to end through the command line tool.

Run: python demos/attention_ablation.py   (under a minute)
"""

import sys
import tempfile
from pathlib import Path

from tinycrnn.cli import run


def step(*argv):
    print("$ tinycrnn", " ".join(str(a) for a in argv))
    code = run([str(a) for a in argv])
    if code:
        sys.exit(code)


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    step("synth", "--out", tmp / "train", "--seed", 0)
    step("synth", "--out", tmp / "test", "--seed", 1, "--frames", 160)
    for flag in ("on", "off"):
        step("train", "--config", "crnn58k-ref", "--attention", flag, "--in", tmp / "train",
             "--out", tmp / f"attn-{flag}.bin", "--steps", 300)
    step("eval", "--model", tmp / "attn-on.bin", "--model", tmp / "attn-off.bin",
         "--in", tmp / "test", "--out", tmp / "eval")

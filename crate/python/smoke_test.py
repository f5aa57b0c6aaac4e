"""Smoke test for the mimebench Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/mimebench-*.whl
"""

import json
import math
import tempfile
from pathlib import Path

import mimebench as mb


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    p = mb.softmax([1.0, 2.0, 3.0])
    e = [math.exp(v) for v in (1.0, 2.0, 3.0)]
    check(all(abs(a - b / sum(e)) < 1e-12 for a, b in zip(p, e)), "softmax")

    out = mb.conv1d_temporal([[3.0, 4.0]], [[[1.0], [1.0]]], [0.0])
    check(out == [[7.0]], "conv1d_temporal")
    check(abs(mb.iou([0, 0, 10, 10], [5, 0, 15, 10]) - 1 / 3) < 1e-12, "iou")

    check(mb.topk_hit([0.1, 0.7, 0.2], 1, 1), "top-1 hit")
    check(not mb.topk_hit(None, 0, 1), "no-tube video is a miss")
    acc = mb.mean_class_accuracy([[0.9, 0.1], [0.2, 0.8], None], [0, 1, 1], 2)
    check(abs(acc - 0.75) < 1e-12, "mean class accuracy")
    m = mb.mean_average_precision([[0.2, 0.8]], [0], 2)
    check(m == 0.5, "inverse-rank AP")
    check(abs(sum(mb.superclass_remap([0.25] * 4, [0, 0, 1, 2], 3)) - 1) < 1e-12, "superclass mass")

    ref = mb.reference_manifest()
    check(ref["videos"] == 713 and ref["superclasses"] == 45, "reference manifest")
    check(ref["class_counts"]["drinking"] == 27, "drinking count")

    net = mb.SipNet(4, 3, 2, seed=1)
    feats = [[0.1 * i, 0.0, -0.1 * i] for i in range(6)]
    check(len(net.scores(feats)) == 3, "SIP-Net windows")
    check(abs(sum(net.probs(feats)) - 1) < 1e-12, "SIP-Net probabilities")
    check(net.parameter_count == 4 * 3 * 2 + 2, "SIP-Net parameters")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        check(mb.generate_synthetic(tmp / "d", 5) == 200, "synthetic dataset")
        first = sorted((tmp / "d" / "detections").glob("*.jsonl"))[0]
        tubes = mb.link_detections(str(first))
        check(len(tubes) == 1 and not any(tubes[0]["interpolated"]), "linking")
        code = mb.run_cli(["link", "--detections", str(tmp / "d" / "detections"), "--out", str(tmp / "t")])
        check(code == 0, "command line link")
        cov = json.loads((tmp / "t" / "coverage.json").read_text())
        check(cov["videos_without_tubes"] == 0, "coverage")
        check(mb.run_cli(["synth", "--out", str(tmp / "x")]) == 2, "missing seed exits 2")
        net.save(str(tmp / "m.ckpt"))
        check(mb.SipNet.load(str(tmp / "m.ckpt")).scores(feats) == net.scores(feats), "checkpoint round trip")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()

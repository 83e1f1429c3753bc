"""Writes the binary and CSV fixtures plus their expected decodings.

Run from crates/core: python3 tests/oracle/make_io_fixtures.py
Everything here is produced from first principles with struct and random,
independent of the Rust readers.
"""
import json
import math
import random
import struct
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"
rng = random.Random(20261016)


def idx_fixture():
    rows, cols = 2, 3
    pixels = [[(17 * i + 5 * j + 3) % 256 for j in range(rows * cols)] for i in range(3)]
    labels = [7, 2, 7]
    img = struct.pack(">IIII", 0x803, 3, rows, cols) + bytes(p for row in pixels for p in row)
    lab = struct.pack(">II", 0x801, 3) + bytes(labels)
    (OUT / "idx3-images.idx").write_bytes(img)
    (OUT / "idx3-labels.idx").write_bytes(lab)
    return {"rows": pixels, "raw_labels": labels, "labels": [2, 1, 2], "original_labels": [2, 7]}


def cifar_fixture():
    records = []
    expected = []
    for r, label in enumerate([3, 0]):
        px = [(r * 3072 + j) % 256 for j in range(3072)]
        records.append(bytes([label]) + bytes(px))
        expected.append(px)
    (OUT / "cifar2.bin").write_bytes(b"".join(records))
    return {"rows": expected, "raw_labels": [3, 0], "labels": [2, 1]}


def csv_fixture():
    values = [[rng.uniform(-1e3, 1e3) for _ in range(5)] for _ in range(100)]
    labels = [rng.choice([4, 9, 1]) for _ in range(100)]
    lines = ["a,b,c,class,d,e"]
    for v, y in zip(values, labels):
        cells = [repr(x) for x in v[:3]] + [str(y)] + [repr(x) for x in v[3:]]
        lines.append(",".join(cells))
    (OUT / "random100.csv").write_text("\n".join(lines) + "\n")
    order = []
    for y in labels:
        if y not in order:
            order.append(y)
    return {"rows": values, "labels": [order.index(y) + 1 for y in labels], "original_labels": order}


def zscore_fixture():
    train = [[rng.gauss(3.0 * j, 1.0 + j) for j in range(8)] for _ in range(1000)]
    test = [[rng.gauss(3.0 * j, 1.0 + j) for j in range(8)] for _ in range(50)]
    means, sds = [], []
    for j in range(8):
        col = [r[j] for r in train]
        m = math.fsum(col) / len(col)
        var = math.fsum((x - m) ** 2 for x in col) / len(col)
        means.append(m)
        sds.append(math.sqrt(var))
    applied = [[(r[j] - means[j]) / sds[j] for j in range(8)] for r in test]
    return {"train": train, "test": test, "means": means, "stddevs": sds, "test_normalized": applied}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    expected = {
        "idx": idx_fixture(),
        "cifar": cifar_fixture(),
        "csv": csv_fixture(),
        "zscore": zscore_fixture(),
    }
    (OUT / "io_expected.json").write_text(json.dumps(expected))


if __name__ == "__main__":
    main()

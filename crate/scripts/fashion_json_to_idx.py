#!/usr/bin/env python3
"""Convert the per-class JSON dumps of the `fashion-mnist` npm package to IDX.

Usage: fashion_json_to_idx.py <clothes-dir> <out-dir> [train-per-class]

Each class is split in file order: the first `train-per-class` images (default
6000) go to the training files, the following 1000 to the test files. Samples
are interleaved class by class so that neither file is sorted by label.
"""
import gzip
import json
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + bytes(payload))


def main():
    src = Path(sys.argv[1])
    out = Path(sys.argv[2])
    n_train = int(sys.argv[3]) if len(sys.argv) > 3 else 6000
    n_test = 1000
    out.mkdir(parents=True, exist_ok=True)
    classes = [json.loads((src / f"{c}.json").read_text())["data"] for c in range(10)]
    splits = {"train": [], "t10k": []}
    for c, samples in enumerate(classes):
        for k, img in enumerate(samples[: n_train + n_test]):
            (splits["train"] if k < n_train else splits["t10k"]).append((k, c, img))
    for name, rows in splits.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        pixels = bytearray()
        labels = bytearray()
        for _, c, img in rows:
            pixels.extend(max(0, min(255, int(p))) for p in img)
            labels.append(c)
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x803, [len(rows), 28, 28], pixels)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x801, [len(rows)], labels)
        print(f"{name}: {len(rows)} samples")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Build MNIST IDX files from the `mnist` npm package (cazala/mnist).

That package ships ~10k genuine MNIST digits as JSON, one file per class,
with pixels stored as round(byte/255, 3).  Multiplying by 255 and rounding
recovers the original bytes exactly (worst-case drift 0.1275 < 0.5), so the
output is bit-faithful to the corresponding subset of the official dataset.

Usage:
    npm pack mnist@1.1.0
    tar xzf mnist-1.1.0.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (9000 samples)
and t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (1000 samples), shuffled
with a fixed seed so classes are interleaved.
"""

import json
import random
import struct
import sys
from pathlib import Path

SEED = 1789
TEST_COUNT = 1000


def load_digits(digits_dir: Path):
    samples = []
    for label in range(10):
        flat = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        if len(flat) % 784 != 0:
            raise SystemExit(f"{label}.json length {len(flat)} not a multiple of 784")
        for i in range(len(flat) // 784):
            pixels = bytes(round(v * 255) for v in flat[i * 784 : (i + 1) * 784])
            samples.append((pixels, label))
    return samples


def write_idx(out_dir: Path, stem: str, samples):
    images = out_dir / f"{stem}-images-idx3-ubyte"
    labels = out_dir / f"{stem}-labels-idx1-ubyte"
    with images.open("wb") as f:
        f.write(struct.pack(">iiii", 0x803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with labels.open("wb") as f:
        f.write(struct.pack(">ii", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))
    print(f"{images}  {len(samples)} images")
    print(f"{labels}  {len(samples)} labels")


def main():
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    samples = load_digits(digits_dir)
    random.Random(SEED).shuffle(samples)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(out_dir, "train", samples[TEST_COUNT:])
    write_idx(out_dir, "t10k", samples[:TEST_COUNT])


if __name__ == "__main__":
    main()

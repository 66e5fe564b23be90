#!/usr/bin/env python3
"""Build a 10k-sample MNIST IDX pair from the `mnist` npm package.

The npm package ships 10,000 MNIST digits as per-class JSON arrays with
pixel intensities rounded to three decimals; round(v * 255) recovers the
original unsigned bytes exactly. Samples are interleaved with a fixed
seed so that the class order resembles the official distribution files.

Usage: scripts/fetch_mnist.py [OUT_DIR]   (default: data/mnist)
"""
import gzip
import json
import random
import struct
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

PACKAGE = "mnist@1.1.0"


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist")
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", PACKAGE], cwd=tmp, check=True, capture_output=True)
        tgz = next(Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(tgz) as tar:
            tar.extractall(tmp)
        samples = []
        for digit in range(10):
            path = Path(tmp, "package", "src", "digits", f"{digit}.json")
            flat = json.loads(path.read_text())["data"]
            assert len(flat) % 784 == 0
            for i in range(0, len(flat), 784):
                pixels = bytes(round(v * 255) for v in flat[i : i + 784])
                samples.append((pixels, digit))
    random.Random(0).shuffle(samples)
    n = len(samples)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + b"".join(p for p, _ in samples)
    labels = struct.pack(">II", 0x00000801, n) + bytes(l for _, l in samples)
    with gzip.GzipFile(out / "mnist-10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(out / "mnist-10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
# Copyright 2026 The cvae Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes a 10,000-digit MNIST subset as big-endian IDX files.

The digits come from the `mnist` npm package (10,000 MNIST digits stored as
JSON with three-decimal intensities). Intensities are mapped back to bytes
with round(255 * v). Usage:

    python3 tools/prepare_mnist.py data/mnist
"""
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile


def main(out_dir: pathlib.Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        with tarfile.open(pathlib.Path(tmp) / "mnist-1.1.0.tgz") as tar:
            tar.extractall(tmp)
        pixels = bytearray()
        labels = bytearray()
        for digit in range(10):
            path = pathlib.Path(tmp) / "package" / "src" / "digits" / f"{digit}.json"
            data = json.loads(path.read_text())["data"]
            count = len(data) // 784
            for v in data:
                pixels.append(min(255, max(0, int(round(255.0 * v)))))
            labels.extend([digit] * count)
    n = len(labels)
    with open(out_dir / "mnist10k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels)
    with open(out_dir / "mnist10k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} digits to {out_dir}")


if __name__ == "__main__":
    main(pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist"))

#!/usr/bin/env python3
# Copyright (c) 2026 The sdquant Authors. All Rights Reserved.
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
"""Builds the MNIST IDX subset in data/mnist from the npm `mnist` package.

The npm package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST
digits as per-class JSON arrays of pixel intensities normalized to [0, 1].
They are converted back to uint8, shuffled with a fixed seed and written as
8,000 training and 2,000 test images in the standard IDX format.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist
"""
import json
import pathlib
import struct
import sys

import numpy as np


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main(src, dst, n_train=8000, n_test=2000, seed=20220701):
    images, labels = [], []
    for digit in range(10):
        data = np.array(json.loads((pathlib.Path(src) / f"{digit}.json").read_text())["data"])
        x = np.round(data.reshape(-1, 784) * 255.0).clip(0, 255).astype(np.uint8)
        images.append(x)
        labels.append(np.full(len(x), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(seed).permutation(len(images))
    images, labels = images[order], labels[order]

    out = pathlib.Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "train-images-idx3-ubyte", images[:n_train])
    write_idx_labels(out / "train-labels-idx1-ubyte", labels[:n_train])
    write_idx_images(out / "t10k-images-idx3-ubyte", images[n_train:n_train + n_test])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", labels[n_train:n_train + n_test])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

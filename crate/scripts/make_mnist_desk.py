"""Build the desk-scale MNIST fixture (2000 train / 1000 test, IDX format).

Source: the 5000-sample MNIST subset shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, rows = 784 pixels + label).

    pip download --no-deps mlxtend -d /tmp/pd
    python3 scripts/make_mnist_desk.py /tmp/pd/mlxtend-*.whl data/mnist-desk
"""
import gzip
import random
import struct
import sys
import zipfile
from pathlib import Path


def write_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    samples = []
    for line in gzip.decompress(raw).decode().strip().split("\n"):
        vals = [int(float(x)) for x in line.split(",")]
        samples.append((vals[:784], vals[784]))
    random.Random(20240531).shuffle(samples)
    train, test = samples[:2000], samples[2000:3000]
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])


if __name__ == "__main__":
    main()

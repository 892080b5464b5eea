"""Convert the 5000-image MNIST sample shipped in the mlxtend wheel to gzipped IDX files.

usage: python3 mnist_5k_to_idx.py <mlxtend wheel> <output dir>
  (obtain the wheel with `pip download --no-deps mlxtend`)
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().strip().split("\n")
    pixels, labels = bytearray(), bytearray()
    for row in rows:
        vals = [int(float(v)) for v in row.split(",")]
        assert len(vals) == 785
        pixels.extend(vals[:784])
        labels.append(vals[784])
    n = len(rows)
    img = struct.pack(">IIII", 0x803, n, 28, 28) + bytes(pixels)
    lab = struct.pack(">II", 0x801, n) + bytes(labels)
    # mtime=0 keeps the archives byte-stable
    with open(out / "train-images-idx3-ubyte.gz", "wb") as f:
        f.write(gzip.compress(img, mtime=0))
    with open(out / "train-labels-idx1-ubyte.gz", "wb") as f:
        f.write(gzip.compress(lab, mtime=0))


if __name__ == "__main__":
    main()

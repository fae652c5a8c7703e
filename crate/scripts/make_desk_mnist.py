"""Build the desk-scale MNIST subset shipped in data/desk-mnist/.

Source: the 5000-image MNIST sample bundled with the `mlxtend` wheel
(mlxtend/data/data/mnist_5k.csv.gz, BSD-3; images from the original MNIST
distribution). 2500 images are drawn with a fixed seed and written as
gzipped IDX files (magic 0x00000803 / 0x00000801).

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/make_desk_mnist.py /tmp/mlx/mlxtend-*.whl data/desk-mnist
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np

N = 2500


def main(wheel, out_dir):
    raw = gzip.decompress(
        zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.genfromtxt(io.BytesIO(raw), delimiter=",").astype(np.uint8)
    images, labels = table[:, :-1], table[:, -1]
    order = np.random.default_rng(20200101).permutation(len(labels))[:N]
    images, labels = images[order], labels[order]
    with gzip.GzipFile(f"{out_dir}/train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, N, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(f"{out_dir}/train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, N))
        f.write(labels.tobytes())
    print("label counts:", np.bincount(labels, minlength=10))
    print("first image pixel sum:", int(images[0].astype(np.int64).sum()),
          "label:", int(labels[0]))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

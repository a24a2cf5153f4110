"""Write the 5000 MNIST digits bundled with mlxtend as the four IDX files.

Real MNIST cannot be downloaded in every environment; this gives the loader
and the MNIST experiments something genuine to chew on.  The digits are
shuffled with a fixed seed and split 4000 train / 1000 test.

    python demos/make_mnist_idx.py data/mnist
"""

import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from liprobust.data import MNIST_FILES, write_idx
from liprobust.rng import Rng

out = Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist")
out.mkdir(parents=True, exist_ok=True)
images, labels = mnist_data()
order = Rng(2024).permutation(labels.size)
images = images[order].reshape(-1, 28, 28).astype(np.uint8)
labels = labels[order].astype(np.uint8)
write_idx(images[:4000], labels[:4000], *(out / f for f in MNIST_FILES["train"]))
write_idx(images[4000:], labels[4000:], *(out / f for f in MNIST_FILES["test"]))
print(f"wrote {len(labels)} digits to {out}")

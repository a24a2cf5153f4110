"""On MNIST, deeper nets certify fewer digits and weight decay helps.

Needs a directory with the four IDX files (see make_mnist_idx.py).  Takes a
couple of minutes with 4 workers.

    python demos/05_mnist_depth_and_decay.py data/mnist
"""

import sys

from liprobust.experiments import SweepConfig, read_csv, run_train_sweep

mnist = sys.argv[1] if len(sys.argv) > 1 else "data/mnist"
common = dict(trials=1, mnist_dir=mnist, epochs=20, epsilon=0.01, workers=4)

print("depth  width  acc    cert   L_spectral")
for r in read_csv(run_train_sweep(SweepConfig(depths=[2, 3, 4], widths=[128], **common))):
    print(f"{r['depth']:>5}  {r['width']:>5}  {float(r['accuracy_mean']):.3f}  "
          f"{float(r['certified_accuracy_mean']):.3f}  {float(r['L_spectral_mean']):9.2f}")

print("\nlambda  acc    cert   L_spectral  (depth 4, width 128)")
for r in read_csv(run_train_sweep(SweepConfig(depths=[4], widths=[128], lambdas=[0, 1e-3, 1e-2], **common))):
    print(f"{r['lambda']:>6}  {float(r['accuracy_mean']):.3f}  {float(r['certified_accuracy_mean']):.3f}  "
          f"{float(r['L_spectral_mean']):9.2f}")

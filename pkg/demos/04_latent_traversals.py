"""Latent traversal grids from a freshly trained model.

Sweeps the categorical code across its categories and the continuous code
from -2 to 2 (well past its training range of [-1, 1]) while noise stays
fixed per row, and writes the grids as PGM files you can open with any
image viewer.
"""

import os
import tempfile

import numpy as np

from infogan_lab.config import TrainingConfig
from infogan_lab.evaluate import traversal_grid
from infogan_lab.trainer import train_run

out_dir = tempfile.mkdtemp(prefix="igan-traversals-")
cfg = TrainingConfig(
    iterations=1500,
    log_every=100,
    checkpoint_out=os.path.join(out_dir, "model.igan"),
    metrics_out=os.path.join(out_dir, "metrics.csv"),
)
print(f"training for {cfg.iterations} iterations ...")
model, _ = train_run(cfg)

cat_path = os.path.join(out_dir, "categorical_sweep.pgm")
traversal_grid(model, 0, [0, 1, 2, 3], 6, np.random.default_rng(0), cfg.image_dims, cat_path)

cont_path = os.path.join(out_dir, "continuous_sweep.pgm")
values = list(np.linspace(-2.0, 2.0, 10))
traversal_grid(model, 1, values, 6, np.random.default_rng(0), cfg.image_dims, cont_path)

print("wrote:")
print(f"  {cat_path}   (one column per category, rows share noise)")
print(f"  {cont_path}   (continuous code swept -2..2, past its prior)")
print("categories are unordered by construction; columns need not follow any")
print("template numbering.")

"""The headline experiment at demo scale: L_I over training iterations.

Trains the adversarial pair twice on the synthetic templates dataset,
once with the information term feeding the generator and once without
(the plain-GAN baseline), and sketches both L_I_disc curves. The full
protocol lives in tests/test_acceptance.py; here we use a shorter budget
so the demo finishes in about half a minute.
"""

import math
import os
import tempfile

import numpy as np

from infogan_lab.config import TrainingConfig
from infogan_lab.trainer import train_run

ITERS = 1500


def run(lambda_disc, lambda_cont, tag):
    tmp = tempfile.mkdtemp(prefix=f"igan-demo-{tag}-")
    cfg = TrainingConfig(
        iterations=ITERS,
        log_every=25,
        lambda_disc=lambda_disc,
        lambda_cont=lambda_cont,
        checkpoint_out=os.path.join(tmp, "model.igan"),
        metrics_out=os.path.join(tmp, "metrics.csv"),
    )
    print(f"training {tag} ({ITERS} iterations) ...")
    _, trace = train_run(cfg)
    return trace


def sparkline(values, lo, hi, width=60):
    marks = " .:-=+*#%@"
    idx = np.linspace(0, len(values) - 1, width).astype(int)
    out = []
    for i in idx:
        t = (values[i] - lo) / (hi - lo + 1e-12)
        out.append(marks[int(np.clip(t, 0, 1) * (len(marks) - 1))])
    return "".join(out)


info = run(1.0, 0.1, "with information term")
base = run(0.0, 0.0, "baseline (no generator incentive)")

h_c = math.log(4)
print()
print(f"H(c) = ln 4 = {h_c:.4f} nats is the ceiling for the categorical code")
print()
for tag, trace in (("info ", info), ("base ", base)):
    li = trace.column("li_disc")
    print(f"{tag} |{sparkline(li, 0.0, h_c)}|  final {li[-10:].mean():.4f}")
print()
print("the regularized run climbs to the entropy ceiling; the baseline's")
print("recognition head trains just as hard but finds almost nothing to read.")

"""
Which perspective matters most?
===============================

When ground-truth trust leans on the owner, a model restricted to owner
attributes should beat one that only sees the device.
"""

from iottrust.evaluation import ExperimentConfig, ablate_by_perspective, confidence_curve
from iottrust.model import TrainConfig
from iottrust.simulator import SimConfig, simulate

_, ds = simulate(SimConfig(seed=2, n_samples=3000, label_weights={"owner": 3.0}))
cfg = ExperimentConfig(train=TrainConfig(max_epochs=100), seed=2)

for name, rep in ablate_by_perspective(ds, cfg).items():
    print(f"{name:>8}: macro accuracy {rep.macro_accuracy:.3f}")

# confidence grows as training goes on
for epoch, conf in confidence_curve(ds, cfg, [0, 10, 50, 100]):
    print(f"epoch {epoch:>3}: mean confidence {conf:.3f}")

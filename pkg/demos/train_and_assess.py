"""
Training a trust model on simulated data
========================================

Simulate a crowdsourcing environment, train the network, then read a
trust level and its confidence for a few unseen services.
"""

from iottrust.evaluation import ExperimentConfig, evaluate, fit
from iottrust.model import TrainConfig, assess, attribute_significance
from iottrust.simulator import SimConfig, simulate

scenario, ds = simulate(SimConfig(seed=7, n_samples=3000))
print(f"{len(ds)} samples, level counts:", [int((ds.levels == k).sum()) for k in range(5)])

cfg = ExperimentConfig(hidden=(32, 32), train=TrainConfig(max_epochs=150), seed=7)
f = fit(ds, cfg)
print(f"trained {f.result.epochs} epochs, final cost {f.result.final_cost:.3f}")

report = evaluate(f.net, f.test_set)
for name, p, r, a in report.rows():
    print(f"{name:>14}  precision {p:.3f}  recall {r:.3f}  accuracy {a:.3f}")

# the probability of the chosen level doubles as the confidence
for x in f.test_set.X[:3]:
    result = assess(f.net, x)
    print(result.level.name, f"{result.confidence:.2f}")

sig = attribute_significance(f.net, f.test_set.X, ds.feature_names)
for i in sig.per_attribute.argsort()[::-1]:
    print(f"{sig.attribute_names[i]:>30}: {sig.per_attribute[i]:.4f}")
print("by perspective:", {k: round(v, 4) for k, v in sig.per_perspective.items()})

"""
Class-dependent effects of random cropping
==========================================

Small synthetic images: each class is a blob at its own spot on a ring.
Random resized crops cut away border blobs more often, so augmentation helps
some classes and hurts others.  The sweep below measures how the range of
class accuracies changes with and without cropping.
"""

# %%
import numpy as np

from clam.classifier import TrainConfig, train_method
from clam.data import AugmentationSpec, gen_synthetic_images
from clam.losses import LossSpec
from clam.metrics import fairness_report

train, test = gen_synthetic_images(5, 8, 300, [(0, 1)], seed=1, test_per_class=300)
bounds = (0.3, 0.5, 0.7, 1.0)

# %%
for method in ("normal", "clam"):
    ranges = {}
    for b in bounds:
        cfg = TrainConfig(epochs=12, batch_size=64, seed=1, augmentation=AugmentationSpec("crop", crop_lower_bound=b))
        res = train_method(train, cfg, LossSpec(method), test)
        ranges[b] = fairness_report(res.test_acc[-1]).range
    diff = np.mean([ranges[b] - ranges[1.0] for b in bounds if b < 1.0])
    print(method, {b: round(r, 4) for b, r in ranges.items()}, f"with minus without: {diff:+.4f}")

"""Train a small capsule classifier end to end and inspect the run record.

Takes roughly half a minute on one CPU.

    python3 demos/04_train_small_model.py
"""

import tempfile
from pathlib import Path

from capsroute import (
    MarginLossParams,
    ModelConfig,
    SynthConfig,
    TrainConfig,
    WeightedLossParams,
    build_model,
    class_proportions,
    evaluate,
    generate,
    load_params,
    save_params,
    split,
    train,
)

# --- data -------------------------------------------------------------------
synth = SynthConfig(n_samples=400, positive_ratio=0.5, noise_sigma=0.15, seed=11)
data = generate(synth)
train_set, val_set, test_set = split(data, (0.7, 0.15, 0.15), seed=11)
print(f"splits: {len(train_set.labels)} train / {len(val_set.labels)} val / {len(test_set.labels)} test")

# --- model ------------------------------------------------------------------
mc = ModelConfig(hidden_dim=16)  # quarter-width stem keeps the demo quick
model = build_model(
    mc,
    image_size=synth.image_size,
    margin=MarginLossParams(),
    weighted=WeightedLossParams(class_proportions(train_set.labels)),
    seed=11,
)
print(f"architecture: {mc.architecture}, routing: {mc.routing.method}, "
      f"affine: {mc.affine_kind}")

# --- train ------------------------------------------------------------------
tc = TrainConfig(lr=3e-3, batch_size=8, max_epochs=6, patience=6, seed=11)
record = train(model, train_set, val_set, tc)
for e in record.epochs:
    print(f"epoch {e.epoch}: train total {e.train_total:.4f}  val total {e.val_total:.4f}")
print(f"best epoch by validation loss: {record.best_epoch} (weights restored to it)")

# --- evaluate ----------------------------------------------------------------
report = evaluate(model, test_set)
print()
print("test-split report:")
print(report.to_text())
print()
print(report.confusion_table())

# --- parameters round-trip -----------------------------------------------------
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.npz"
    save_params(model, path)
    clone = build_model(
        mc,
        image_size=synth.image_size,
        margin=MarginLossParams(),
        weighted=WeightedLossParams(class_proportions(train_set.labels)),
        seed=99,  # different init, fully overwritten by the load
    )
    load_params(clone, path)
    p0, _ = model.predict(test_set.images)
    p1, _ = clone.predict(test_set.images)
    print(f"\nreloaded model reproduces predictions exactly: {(p0 == p1).all()}")

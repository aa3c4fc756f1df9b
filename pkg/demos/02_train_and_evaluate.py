"""Train the paired baseline+delta model on synthetic data and evaluate it.

Shows the full loop: split, fit, inspect the training history, per-head
metrics in raw units, and a checkpoint save/reload round trip.
"""

import tempfile
from pathlib import Path

from hlsdelta import (
    ModelConfig,
    SynthConfig,
    TrainConfig,
    build_model,
    evaluate,
    generate,
    load_checkpoint,
    load_embeddings,
    save_checkpoint,
    split_design_level,
    train,
)

workdir = Path(tempfile.mkdtemp(prefix="hlsdelta-demo-"))
cfg = SynthConfig.emulating("DSP", n_kernels=6, designs_per_kernel=10, seed=1)
dataset = generate(cfg, workdir)
table = load_embeddings(dataset.embedding_file)
split = split_design_level(dataset, seed=0)

model_cfg = ModelConfig(
    backbone="SAGE",          # also: GCN, GAT, PNA
    hidden_dim=32,
    code_dim=table.dim,       # adapter input width comes from the file header
    target="DSP",
)
model = build_model(model_cfg, seed=0)

train_cfg = TrainConfig(lr=3e-3, batch_size=16, max_epochs=150, seed=0)
history = train(model, dataset, split, table, train_cfg)

print(f"trained {train_cfg.max_epochs} epochs; "
      f"best validation loss {history.best_val_loss:.5f} at epoch {history.best_epoch}")
print(f"learning rate went {history.lr[0]:.2e} -> {history.lr[-1]:.2e} "
      f"(plateau-driven reductions)")

report = evaluate(model, split.subset(dataset, "test"), table)
print(f"\ntest metrics over {report.n_samples} designs (raw units):")
for name, head in (("design", report.design), ("kernel", report.kernel),
                   ("delta", report.delta)):
    print(f"  {name:<7} MAE={head.mae:8.3f}  MAPE={head.mape:7.3f}%  R2={head.r2:.4f}")

sample = split.subset(dataset, "test")[0]
pred = model.predict_design(sample, table.lookup(sample.design_id))
print(f"\nsingle-pair prediction for {sample.design_id}: "
      f"predicted y_d={pred:.2f}, actual {sample.y_d:.2f}")

ckpt = workdir / "checkpoint.npz"
save_checkpoint(model, ckpt)
reloaded = load_checkpoint(ckpt)
again = reloaded.predict_design(sample, table.lookup(sample.design_id))
print(f"after checkpoint reload: {again:.2f} (identical: {pred == again})")

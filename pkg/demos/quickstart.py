"""Generate a small SIM-I dataset, estimate beta bounds, and train OMIB.

Scaled down so it finishes in under a minute on one core. Run with
``python demos/quickstart.py``.
"""

from omib.mine import MineConfig, compute_beta_bounds
from omib.synth import generate, oracle_feature_view, preset, split_train_test
from omib.train import TrainConfig, fit_omib, train_view_classifier

ds = generate(preset("sim1", n=2000))
train, test = split_train_test(ds, 0.9)
print("views:", [v.shape for v in ds.views], "positives:", ds.y.mean().round(3))

# A light MINE config; the defaults are heavier and slower.
mine = MineConfig(epochs=40, batch_size=512, estimate_batches=4)
bounds = compute_beta_bounds(train.views, mine)
print(f"H = {[round(h, 2) for h in bounds.H]}  I = {bounds.I}")
print(f"beta in [{bounds.lower:.4g}, {bounds.upper:.4g}], midpoint {bounds.midpoint:.4g}")

cfg = TrainConfig(warm_epochs=5, main_epochs=15, batch_size=256, lr=1e-3, k=64,
                  encoder_hidden=128, head_hidden=128, svdd_hidden=64)
model, rec = fit_omib(cfg, train.views, train.y, bounds=bounds, test=(test.views, test.y))
for e in rec.epochs[::3]:
    print(f"epoch {e['epoch']:>3}  L={e['L']:.3f}  KL={[round(k, 2) for k in e['KL']]}  "
          f"r={e['r_mean'][0]:.3f}  acc={e['test_accuracy']:.3f}")
print("omib test accuracy:", rec.final["accuracy"])

for view in ("unimodal-1", "authentic-optimal"):
    acc = train_view_classifier(cfg, oracle_feature_view(train, view), train.y,
                                oracle_feature_view(test, view), test.y, epochs=15)
    print(f"{view:>18} classifier: {acc:.3f}")

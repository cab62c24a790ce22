"""Identity noise on the classifier head: sweep (lambda, sigma), read off the tradeoff.

Run from the repository root:  python3 demos/02_noise_tradeoff.py
"""
import math

import numpy as np

from moodveil import SynthConfig, generate_samples
from moodveil.evaluation import Design, FeatureSpec, chrono_partition
from moodveil.models import MlpHyper, train_mlp
from moodveil.nimlp import fit_identity_encoder, sigma_sweep

samples = generate_samples(SynthConfig(seed=1, num_users=8, days_per_user=60,
                                       identity_confound=0.9))
design = Design(samples, FeatureSpec("both", top_k=300))
plan = chrono_partition(samples, k=5)
train = np.flatnonzero(plan.fold_of < 3)
val = plan.test_indices(3)
(X_tr, X_va), _ = design.matrices(train, val)

base = train_mlp(X_tr, design.y[train], MlpHyper(h1=64, h2=32, epochs=80), seed=0)

# ---- the encoder alone -------------------------------------------------------
# per-user soft-thresholded means of the penultimate features
Z = base.features(X_tr)
for lam in (0.1, 10, 100):
    enc = fit_identity_encoder(Z, design.ids[train], lam, design.n_users)
    print(f"lambda={lam:<6g} zero fraction of theta: {enc.sparsity:.3f}")

# ---- the sweep ---------------------------------------------------------------
res = sigma_sweep(base, X_tr, design.ids[train], design.y[train],
                  X_va, design.ids[val], design.y[val],
                  lambdas=(0.1, 1), sigmas=(1, 10, 50), seed=0, n_users=design.n_users)
print(f"\nbase MLP: F1 {res.base_t:.3f}  probe {res.base_s:.3f}")
print("sigma lambda    F1   probe      R")
for p in res.points:
    r = "inf" if math.isinf(p.ratio) else f"{p.ratio:.2f}"
    print(f"{p.sigma:5g} {p.lam:6g} {p.t:5.3f} {p.s:7.3f} {r:>6s}")
sel = res.selected
print(f"selected: sigma={sel.sigma:g} lambda={sel.lam:g}")
print("pareto:", [(p.sigma, p.lam) for p in res.pareto])

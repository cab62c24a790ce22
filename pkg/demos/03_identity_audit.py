"""How much of the user's identity can a linear probe read from each representation?

Run from the repository root:  python3 demos/03_identity_audit.py
"""
import numpy as np

from moodveil import SynthConfig, generate_samples
from moodveil.evaluation import Design, FeatureSpec, chrono_partition
from moodveil.models import MlpHyper, train_mlp
from moodveil.nimlp import NiMlpModel, fit_identity_encoder, train_noisy_head
from moodveil.privacy_audit import AuditInput, audit_suite

samples = generate_samples(SynthConfig(seed=2, num_users=6, days_per_user=60,
                                       identity_confound=0.9))
design = Design(samples, FeatureSpec("apps"))
plan = chrono_partition(samples, k=5)
train, test = plan.train_indices(4), plan.test_indices(4)
(X_tr, X_te), _ = design.matrices(train, test)
ids_tr = design.ids[train]

base = train_mlp(X_tr, design.y[train], MlpHyper(h1=64, h2=32, epochs=80), seed=0)
enc = fit_identity_encoder(base.features(X_tr), ids_tr, lam=0.1, n_users=design.n_users)
head = train_noisy_head(base, enc, X_tr, ids_tr, design.y[train], sigma=25.0, seed=0)
ni = NiMlpModel(base, enc, head)

table = audit_suite({"apps": AuditInput(X_te, design.ids[test], base, ni)},
                    folds=5, seed=0, project="pca")
print(table.to_text())
print(f"chance: {1 / design.n_users:.3f}")

# the projection shows whether users still form separate clusters
coords = table.projections[("mlp", "apps")].coords
spread = [np.linalg.norm(coords[design.ids[test] == u].std(0)) for u in range(design.n_users)]
print("per-user spread in the MLP projection:", np.round(spread, 3))

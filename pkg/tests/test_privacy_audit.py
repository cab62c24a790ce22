import numpy as np
import pytest

from moodveil.models.mlp import MlpHyper, train_mlp
from moodveil.nimlp import IdentityEncoder, NiMlpModel, NoisyHead
from moodveil.privacy_audit import (AuditInput, audit_suite, export_audit, export_projection,
                                    project_2d, train_identity_probe)


def test_one_hot_identity_is_fully_recoverable():
    ids = np.repeat(np.arange(4), 10)
    assert train_identity_probe(np.eye(4)[ids], ids).accuracy == pytest.approx(1.0)


def test_constant_representation_is_at_chance():
    # balanced folds leave the bias tied, so every row goes to one user
    ids = np.repeat(np.arange(5), 10)
    res = train_identity_probe(np.zeros((50, 3)), ids)
    assert res.accuracy == pytest.approx(1 / 5) and res.chance == pytest.approx(0.2)


def test_shuffled_identities_fall_to_chance():
    rng = np.random.default_rng(0)
    ids = np.repeat(np.arange(4), 30)
    X = rng.normal(size=(120, 6)) + 3 * np.eye(4, 6)[ids]
    assert train_identity_probe(X, ids).accuracy > 0.9
    assert train_identity_probe(X, rng.permutation(ids)).accuracy < 0.45


def test_probe_needs_two_users():
    with pytest.raises(ValueError, match="two users"):
        train_identity_probe(np.ones((5, 2)), np.zeros(5, int))


def test_probe_is_seed_deterministic():
    rng = np.random.default_rng(1)
    X, ids = rng.normal(size=(40, 3)), np.repeat(np.arange(4), 10)
    a, b = train_identity_probe(X, ids, seed=3), train_identity_probe(X, ids, seed=3)
    assert a.accuracy == b.accuracy and np.array_equal(a.confusion, b.confusion)


# -- projections --------------------------------------------------------------

def two_clouds(n=30):
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(size=(n, 5)), rng.normal(size=(n, 5)) + 20])
    return X, np.repeat([0, 1], n)


def test_tsne_keeps_clouds_apart():
    X, lab = two_clouds()
    proj = project_2d(X, "tsne", perplexity=10, seed=0)
    assert proj.coords.shape == (60, 2) and proj.entropy_error < 1e-5
    c0, c1 = proj.coords[lab == 0], proj.coords[lab == 1]
    gap = np.linalg.norm(c0.mean(0) - c1.mean(0))
    spread = max(np.linalg.norm(c0 - c0.mean(0), axis=1).max(),
                 np.linalg.norm(c1 - c1.mean(0), axis=1).max())
    assert gap > 2 * spread


def test_tsne_rejects_degenerate_input():
    with pytest.raises(ValueError):
        project_2d(np.ones((3, 4)), "tsne", perplexity=0.5)
    with pytest.raises(ValueError, match="N/3"):
        project_2d(np.random.default_rng(0).normal(size=(30, 2)), "tsne", perplexity=30)
    with pytest.raises(ValueError, match="pca"):
        project_2d(np.zeros((5001, 2)), "tsne")
    with pytest.raises(ValueError):
        project_2d(np.zeros((5, 2)), "umap")


def test_pca_of_a_line_has_no_second_axis():
    t = np.linspace(-1, 1, 25)
    proj = project_2d(np.c_[t, 2 * t, -t], "pca")
    np.testing.assert_allclose(proj.coords[:, 1], 0, atol=1e-10)
    assert np.abs(proj.coords[:, 0]).max() > 1


# -- suite --------------------------------------------------------------------

def test_suite_zero_noise_matches_mlp_row(tmp_path):
    rng = np.random.default_rng(3)
    ids = np.repeat(np.arange(3), 20)
    X = rng.normal(size=(60, 8)) + np.eye(3, 8)[ids]
    y = rng.integers(0, 3, 60)
    base = train_mlp(X, y, MlpHyper(h1=16, h2=8, epochs=5), seed=0)
    enc = IdentityEncoder(np.ones((3, 8)), 0.0, np.bincount(ids))
    ni = NiMlpModel(base, enc, NoisyHead(None, 0.0, 0))
    table = audit_suite({"both": AuditInput(X, ids, base, ni)}, seed=0, project="pca")
    assert table.accuracy("nimlp", "both") == table.accuracy("mlp", "both")
    assert set(table.projections) == {("mlp", "both"), ("nimlp", "both")}
    export_audit(tmp_path / "a.csv", table)
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "representation,modality,probe_acc"
    export_projection(tmp_path / "p.csv", table.projections[("mlp", "both")], ids)
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 61
    assert table.to_text().splitlines()[0] == "representation,both"

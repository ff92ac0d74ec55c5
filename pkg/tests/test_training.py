import numpy as np
import pytest

from fairtwin.costnet import forward_batch, latent_values
from fairtwin.latent import fit_pca, project
from fairtwin.pairs import PreferenceDataset, PreferencePair
from fairtwin.training import TrainConfig, TrainingError, export_costs, train


def make_dataset(seed=0, n_pairs=40, d=8, contexts=(0.2, 0.8), separable=True):
    """Pairs ranked by a fixed linear functional of the decision vector."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    pairs = []
    for k in range(n_pairs):
        ctx = contexts[k % len(contexts)]
        a = rng.normal(size=d) * 3
        b = rng.normal(size=d) * 3
        if separable:
            pref, other = (a, b) if w @ a < w @ b else (b, a)
        else:
            pref, other = a, b
        pairs.append(PreferencePair(context=float(ctx), u_pref=pref, u_other=other))
    return PreferenceDataset(pairs=pairs)


def fit_map(seed=0, d=8, r=4, n=60):
    rng = np.random.default_rng(seed)
    return fit_pca(rng.normal(size=(n, d)) * 3, r)


def rank_accuracy(net, ds, lmap):
    x0s = np.array([p.context for p in ds.pairs])
    Zp = project(np.stack([p.u_pref for p in ds.pairs]), lmap)
    Zo = project(np.stack([p.u_other for p in ds.pairs]), lmap)
    S, q_z, _ = forward_batch(net, x0s)
    fp, _ = latent_values(S, q_z, Zp)
    fo, _ = latent_values(S, q_z, Zo)
    return float(np.mean(fp < fo))


def test_single_pair_trains_to_zero():
    ds = make_dataset(n_pairs=1)
    lmap = fit_map()
    cfg = TrainConfig(seed=1, delta=0.05, max_epochs=500, batch_size=4, patience=300)
    net, report = train(ds, lmap, cfg)
    assert report.best_val_loss == 0.0
    assert report.monitor == "training"  # too small for a validation split


def test_training_bit_reproducible():
    ds = make_dataset(n_pairs=30)
    lmap = fit_map()
    cfg = TrainConfig(seed=5, max_epochs=60, patience=30)
    net1, rep1 = train(ds, lmap, cfg)
    net2, rep2 = train(ds, lmap, cfg)
    for (W1, b1), (W2, b2) in zip(net1.weights, net2.weights):
        assert np.array_equal(W1, W2)
        assert np.array_equal(b1, b2)
    assert rep1.train_history == rep2.train_history


def test_ranking_consistency_on_clean_data():
    ds = make_dataset(n_pairs=80)
    lmap = fit_map()
    net, _ = train(ds, lmap, TrainConfig(seed=2, max_epochs=400, patience=120))
    assert rank_accuracy(net, ds, lmap) >= 0.9


def test_corrupted_twin_misorders_clean_pairs():
    clean = make_dataset(seed=3, n_pairs=60)
    flipped = PreferenceDataset(pairs=[
        PreferencePair(context=p.context, u_pref=p.u_other, u_other=p.u_pref, corrupted=True)
        for p in clean.pairs
    ])
    lmap = fit_map(seed=3)
    cfg = TrainConfig(seed=4, max_epochs=300, patience=100)
    net_clean, rep_clean = train(clean, lmap, cfg)
    net_flip, rep_flip = train(flipped, lmap, cfg)
    assert rep_clean.best_val_loss != rep_flip.best_val_loss
    # the fully corrupted twin orders the clean pairs the wrong way around
    assert rank_accuracy(net_flip, clean, lmap) <= 0.2
    assert rank_accuracy(net_clean, clean, lmap) >= 0.9


def test_early_stopping_bookkeeping():
    ds = make_dataset(seed=6, n_pairs=50)
    lmap = fit_map(seed=6)
    net, report = train(ds, lmap, TrainConfig(seed=7, max_epochs=200, patience=25))
    assert report.best_epoch <= report.epochs_run
    assert report.best_val_loss <= report.val_history[-1] + 1e-15
    assert report.val_history[report.best_epoch - 1] == pytest.approx(report.best_val_loss)


def test_lr_schedule_fires_on_plateau():
    ds = make_dataset(seed=8, n_pairs=20)
    lmap = fit_map(seed=8)
    cfg = TrainConfig(seed=9, max_epochs=200, patience=150, lr_patience=10)
    _, report = train(ds, lmap, cfg)
    if report.epochs_run > 30:
        assert report.lr_events  # at least one decay on a run this long


def test_divergence_raises():
    ds = make_dataset(seed=10, n_pairs=20)
    lmap = fit_map(seed=10)
    with pytest.raises(TrainingError, match="diverged"):
        train(ds, lmap, TrainConfig(seed=11, learning_rate=1e18, max_epochs=50))


def test_dimension_mismatch():
    ds = make_dataset(d=8)
    lmap = fit_map(d=9)
    with pytest.raises(TrainingError, match="dimension"):
        train(ds, lmap, TrainConfig(seed=0))


def test_pair_scale_recorded():
    ds = make_dataset(seed=12, n_pairs=40)
    lmap = fit_map(seed=12)
    net, _ = train(ds, lmap, TrainConfig(seed=13, max_epochs=80, patience=40))
    assert net.pair_scale > 0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(delta=0.0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.5)


def test_export_grid_size_and_order():
    ds = make_dataset(seed=14, n_pairs=30)
    lmap = fit_map(seed=14)
    net, _ = train(ds, lmap, TrainConfig(seed=15, max_epochs=40, patience=20))
    grid = np.linspace(0, 1, 52)
    table = export_costs(net, lmap, grid)
    assert len(table) == 52
    contexts = [c.context for c in table]
    assert contexts == sorted(contexts)
    for cost in table:
        cost.assert_psd()


def test_export_zero_net_gives_pure_ridge():
    from tests.test_costnet import zero_net

    lmap = fit_map(seed=16, d=8, r=4)
    net = zero_net(r=4)
    net.latent_map_hash = lmap.content_hash()
    table = export_costs(net, lmap, [0.0, 1.0], ridge=1e-3)
    for cost in table:
        assert np.allclose(cost.hessian, 1e-3 * np.eye(8))
        assert np.allclose(cost.linear, 0.0)


def test_export_rejects_wrong_map():
    ds = make_dataset(seed=17, n_pairs=20)
    lmap = fit_map(seed=17)
    net, _ = train(ds, lmap, TrainConfig(seed=18, max_epochs=30, patience=20))
    other = fit_map(seed=99)
    with pytest.raises(TrainingError, match="latent map"):
        export_costs(net, other, [0.5])


def test_export_validates_grid():
    lmap = fit_map(seed=19)
    from tests.test_costnet import zero_net

    net = zero_net(r=4)
    with pytest.raises(ValueError):
        export_costs(net, lmap, [1.5])


def test_export_subspace_anchor_only_affects_complement():
    lmap = fit_map(seed=20, d=8, r=4)
    ds = make_dataset(seed=20, n_pairs=30)
    net, _ = train(ds, lmap, TrainConfig(seed=21, max_epochs=40, patience=20))
    plain = export_costs(net, lmap, [0.5], ridge=0.0)
    anchored = export_costs(net, lmap, [0.5], ridge=0.0, subspace_anchor=0.7)
    W = lmap.components
    dh = anchored.entries[0].hessian - plain.entries[0].hessian
    # in-plane block unchanged, complement gains exactly the anchor curvature
    assert np.allclose(W.T @ dh @ W, 0.0, atol=1e-12)
    out = np.eye(8) - W @ W.T
    assert np.allclose(dh, 0.7 * out, atol=1e-12)

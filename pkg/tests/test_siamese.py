import dataclasses
import json
import math

import numpy as np
import pytest

from sigver.dataset import Pair
from sigver.siamese import (
    ModelConfig,
    ModelFormatError,
    SiameseModel,
    TrainConfig,
    TrainingDiverged,
    batch_loss_grads,
    init_model,
    load_model,
    pack_params,
    pair_loss,
    save_model,
    score_pair,
    score_pairs,
    train,
    unpack_params,
    write_training_log,
)

TINY = ModelConfig(n_features=3, branch_hidden=4, merge_hidden=3)


def tiny_model(rng, **overrides):
    cfg = dataclasses.replace(TINY, **overrides)
    return init_model(cfg, rng)


def random_seq(rng, length, n_features=3):
    return rng.normal(0.0, 1.0, (length, n_features))


def toy_training_setup(rng, n_users=3):
    """Labeled pairs over a dict of random feature sequences."""
    features = {}
    pairs = []
    for u in range(n_users):
        for i in range(3):
            features[f"u{u}/g{i}"] = random_seq(rng, int(rng.integers(5, 9)))
        features[f"u{u}/f0"] = random_seq(rng, int(rng.integers(5, 9)))
        pairs.append(Pair(f"u{u}", 0, 1, f"u{u}/g0", f"u{u}/g1", 1))
        pairs.append(Pair(f"u{u}", 0, 2, f"u{u}/g0", f"u{u}/g2", 1))
        pairs.append(Pair(f"u{u}", 0, 0, f"u{u}/g0", f"u{u}/f0", 0))
    return pairs, features


def test_symmetric_score_commutes(rng):
    model = tiny_model(rng)
    for _ in range(5):
        a = random_seq(rng, int(rng.integers(4, 10)))
        b = random_seq(rng, int(rng.integers(4, 10)))
        assert score_pair(model, a, b) == score_pair(model, b, a)


def test_asymmetric_score_depends_on_order(rng):
    model = tiny_model(rng, symmetric=False)
    a, b = random_seq(rng, 8), random_seq(rng, 6)
    assert score_pair(model, a, b) != score_pair(model, b, a)


def test_zero_parameters_score_half(rng):
    model = tiny_model(rng)
    zeroed = unpack_params(model, np.zeros(pack_params(model).size))
    assert score_pair(zeroed, random_seq(rng, 7), random_seq(rng, 5)) == 0.5


def test_scores_are_probabilities(rng):
    model = tiny_model(rng)
    seqs_a = [random_seq(rng, int(rng.integers(4, 12))) for _ in range(10)]
    seqs_b = [random_seq(rng, int(rng.integers(4, 12))) for _ in range(10)]
    scores = score_pairs(model, seqs_a, seqs_b)
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_score_pairs_matches_individual_scoring(rng):
    model = tiny_model(rng)
    seqs_a = [random_seq(rng, int(rng.integers(4, 12))) for _ in range(7)]
    seqs_b = [random_seq(rng, int(rng.integers(4, 12))) for _ in range(7)]
    batched = score_pairs(model, seqs_a, seqs_b, batch_size=3)
    single = [score_pair(model, a, b) for a, b in zip(seqs_a, seqs_b)]
    assert np.allclose(batched, single, atol=1e-12)
    with pytest.raises(ValueError, match="equal length"):
        score_pairs(model, seqs_a, seqs_b[:-1])


def test_feature_column_mismatch_rejected(rng):
    model = tiny_model(rng)
    with pytest.raises(ValueError, match="feature columns"):
        score_pair(model, random_seq(rng, 5, n_features=4), random_seq(rng, 5))


def test_pair_loss_values():
    assert pair_loss(0.5, 1) == pytest.approx(math.log(2.0), abs=1e-6)
    assert pair_loss(0.5, 0) == pytest.approx(math.log(2.0), abs=1e-6)
    assert pair_loss(0.9, 0) == pytest.approx(2.302585, abs=1e-6)
    assert pair_loss(0.9, 1) == pytest.approx(-math.log(0.9), abs=1e-12)
    # clamped at the extremes instead of blowing up
    assert np.isfinite(pair_loss(0.0, 1))
    assert np.isfinite(pair_loss(1.0, 0))


def test_batch_loss_is_mean_of_pair_losses(rng):
    model = tiny_model(rng)
    seqs_a = [random_seq(rng, 6) for _ in range(3)]
    seqs_b = [random_seq(rng, 8) for _ in range(3)]
    labels = np.array([1, 0, 1])
    loss, grad, scores = batch_loss_grads(model, seqs_a, seqs_b, labels)
    expected = np.mean([pair_loss(s, y) for s, y in zip(scores, labels)])
    assert loss == pytest.approx(expected, abs=1e-12)
    assert grad.shape == pack_params(model).shape
    with pytest.raises(ValueError, match="empty batch"):
        batch_loss_grads(model, [], [], np.array([]))


@pytest.mark.parametrize(
    "concat,readout,symmetric",
    [
        ("per_step", "last", True),
        ("per_step", "mean", False),
        ("final_state", "last", False),
        ("final_state", "mean", True),
    ],
)
def test_gradients_match_finite_differences(rng, concat, readout, symmetric):
    model = tiny_model(rng, concat=concat, readout=readout, symmetric=symmetric)
    seqs_a = [random_seq(rng, 5), random_seq(rng, 7)]
    seqs_b = [random_seq(rng, 6), random_seq(rng, 4)]
    labels = np.array([1, 0])
    _, grad, _ = batch_loss_grads(model, seqs_a, seqs_b, labels)

    vec = pack_params(model)
    eps = 1e-5
    for idx in rng.choice(vec.size, size=40, replace=False):
        probe = vec.copy()
        probe[idx] += eps
        up, _, _ = batch_loss_grads(unpack_params(model, probe), seqs_a, seqs_b, labels)
        probe[idx] -= 2 * eps
        down, _, _ = batch_loss_grads(unpack_params(model, probe), seqs_a, seqs_b, labels)
        fd = (up - down) / (2 * eps)
        rel = abs(fd - grad[idx]) / max(abs(fd) + abs(grad[idx]), 1e-6)
        assert rel <= 1e-4, f"coord {idx}: fd={fd} bp={grad[idx]}"


def test_time_stride_equals_pre_decimated_input(rng):
    strided = tiny_model(rng, time_stride=3)
    plain = SiameseModel(
        branch=strided.branch, merge=strided.merge, head=strided.head,
        config=dataclasses.replace(strided.config, time_stride=1),
    )
    a, b = random_seq(rng, 17), random_seq(rng, 11)
    assert score_pair(strided, a, b) == score_pair(plain, a[::3], b[::3])


def test_training_is_deterministic(rng):
    pairs, features = toy_training_setup(rng)
    cfg = TrainConfig(learning_rate=0.01, batch_size=4, max_iterations=3, seed=7)

    def run():
        model = init_model(TINY, np.random.default_rng(99))
        trained, history = train(model, pairs, features, cfg)
        return pack_params(trained), [h["cost"] for h in history]

    vec_a, costs_a = run()
    vec_b, costs_b = run()
    assert np.array_equal(vec_a, vec_b)
    assert costs_a == costs_b
    assert len(costs_a) == 3


def test_zero_learning_rate_keeps_parameters(rng):
    pairs, features = toy_training_setup(rng)
    model = tiny_model(rng)
    before = pack_params(model)
    cfg = TrainConfig(learning_rate=0.0, batch_size=4, max_iterations=2, seed=1)
    trained, history = train(model, pairs, features, cfg)
    assert np.array_equal(pack_params(trained), before)
    assert history[0]["cost"] == pytest.approx(history[1]["cost"], abs=1e-12)
    assert [h["iteration"] for h in history] == [1, 2]
    assert history[0]["seconds"] <= history[1]["seconds"]


def test_zero_iterations_returns_initial_model(rng):
    pairs, features = toy_training_setup(rng)
    model = tiny_model(rng)
    trained, history = train(
        model, pairs, features, TrainConfig(max_iterations=0)
    )
    assert history == []
    assert np.array_equal(pack_params(trained), pack_params(model))


def test_stop_below_cost(rng):
    pairs, features = toy_training_setup(rng)
    model = tiny_model(rng)
    cfg = TrainConfig(max_iterations=50, stop_below_cost=10.0, seed=2)
    _, history = train(model, pairs, features, cfg)
    assert len(history) == 1


def test_patience_stops_stale_training(rng):
    pairs, features = toy_training_setup(rng)
    model = tiny_model(rng)
    cfg = TrainConfig(
        learning_rate=0.0, max_iterations=50, patience=2, seed=3
    )
    _, history = train(model, pairs, features, cfg)
    # iteration 1 sets the best cost; with frozen parameters every later
    # iteration is stale, so patience=2 ends the run at iteration 3
    assert len(history) == 3


def test_dev_hook_selects_best_checkpoint(rng):
    pairs, features = toy_training_setup(rng)
    model = tiny_model(rng)
    fake_eers = iter([(30.0, 30.0), (10.0, 10.0), (20.0, 20.0)])
    seen = []

    def hook(m):
        seen.append(pack_params(m))
        return next(fake_eers)

    cfg = TrainConfig(learning_rate=0.05, batch_size=4, max_iterations=3, seed=4)
    trained, history = train(model, pairs, features, cfg, dev_eval_hook=hook)
    assert np.array_equal(pack_params(trained), seen[1])
    assert [h["dev_eer_4vs1"] for h in history] == [30.0, 10.0, 20.0]


def test_nan_features_raise_diverged(rng):
    pairs, features = toy_training_setup(rng)
    features[pairs[0].enroll_key][2, 1] = np.nan
    model = tiny_model(rng)
    with pytest.raises(TrainingDiverged):
        train(model, pairs, features, TrainConfig(max_iterations=2))


def test_empty_pair_list_rejected(rng):
    with pytest.raises(ValueError, match="empty pair list"):
        train(tiny_model(rng), [], {}, TrainConfig())


def test_model_round_trip(tmp_path, rng):
    model = tiny_model(
        rng, symmetric=False, concat="final_state", readout="mean", time_stride=2
    )
    path = tmp_path / "model.npz"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.config == model.config
    assert np.array_equal(pack_params(loaded), pack_params(model))
    a, b = random_seq(rng, 9), random_seq(rng, 7)
    assert score_pair(loaded, a, b) == score_pair(model, a, b)


def test_load_rejects_bad_files(tmp_path, rng):
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "missing.npz")

    garbage = tmp_path / "garbage.npz"
    garbage.write_text("not a model")
    with pytest.raises(ModelFormatError):
        load_model(garbage)

    wrong = tmp_path / "wrong.npz"
    np.savez(wrong, format="something-else")
    with pytest.raises(ModelFormatError, match="not a"):
        load_model(wrong)

    truncated = tmp_path / "truncated.npz"
    np.savez(
        truncated,
        format="sigver-model-v1",
        config=json.dumps(dataclasses.asdict(TINY)),
    )
    with pytest.raises(ModelFormatError, match="missing field"):
        load_model(truncated)


def test_pack_unpack_identity(rng):
    model = tiny_model(rng)
    vec = pack_params(model)
    assert np.array_equal(pack_params(unpack_params(model, vec)), vec)
    with pytest.raises(ValueError, match="parameter vector"):
        unpack_params(model, vec[:-1])


def test_training_log_format(tmp_path):
    history = [
        {"iteration": 1, "cost": 0.75, "dev_eer_1vs1": float("nan"),
         "dev_eer_4vs1": float("nan"), "seconds": 1.5},
        {"iteration": 2, "cost": 0.5, "dev_eer_1vs1": 12.5,
         "dev_eer_4vs1": 10.0, "seconds": 3.0},
    ]
    path = tmp_path / "log.csv"
    write_training_log(history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,cost,dev_eer_1vs1,dev_eer_4vs1,seconds"
    assert lines[1] == "1,0.750000,,,1.50"
    assert lines[2] == "2,0.500000,12.5000,10.0000,3.00"


def test_config_validation():
    with pytest.raises(ValueError, match="concat"):
        dataclasses.replace(TINY, concat="sum").validate()
    with pytest.raises(ValueError, match="readout"):
        dataclasses.replace(TINY, readout="max").validate()
    with pytest.raises(ValueError, match="positive"):
        dataclasses.replace(TINY, merge_hidden=0).validate()
    with pytest.raises(ValueError, match="time_stride"):
        dataclasses.replace(TINY, time_stride=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0).validate()
    with pytest.raises(ValueError, match="optimizer"):
        TrainConfig(optimizer="rmsprop").validate()
    TrainConfig().validate()
    TINY.validate()

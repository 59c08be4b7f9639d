import numpy as np
import pytest

from modalflow.dataset import PairDataset
from modalflow.resnet import ResNet
from modalflow.training import (Adam, LossHistory, TrainConfig, TrainingDiverged, checkpoint_paths,
                                latest_checkpoint, split_validation, train)


def linear_data(count=200, seed=0):
    gen = np.random.default_rng(seed)
    x = gen.uniform(-1, 1, (count, 3))
    a = np.array([[0.9, 0.1, 0.0], [-0.1, 0.9, 0.0], [0.0, 0.0, 0.8]])
    return PairDataset(0.1, x, x @ a.T)


def test_loss_decreases():
    ds = linear_data()
    _, hist = train(ResNet(3, 1, 2, 10, seed=0), ds, TrainConfig(epochs=20, batch_size=10))
    assert hist.train_loss[-1] < 0.05 * hist.train_loss[0]


def test_training_is_deterministic():
    ds = linear_data()
    cfg = TrainConfig(epochs=3, batch_size=7, shuffle_seed=5)
    a, _ = train(ResNet(3, 1, 2, 6, seed=1), ds, cfg)
    b, _ = train(ResNet(3, 1, 2, 6, seed=1), ds, cfg)
    assert np.array_equal(a.params, b.params)


def test_resume_reproduces_uninterrupted_run(tmp_path):
    ds = linear_data(57)  # 57 is not a multiple of the batch size: short last batch
    cfg = TrainConfig(epochs=6, batch_size=10, shuffle_seed=2, checkpoint_every=2)
    full, hist_full = train(ResNet(3, 2, 2, 6, seed=3), ds, cfg, checkpoint_dir=tmp_path / "a")
    _, _ = train(ResNet(3, 2, 2, 6, seed=3), ds, TrainConfig(epochs=4, batch_size=10, shuffle_seed=2,
                                                             checkpoint_every=2),
                 checkpoint_dir=tmp_path / "b")
    assert latest_checkpoint(tmp_path / "b") == 4
    resumed, _ = train(ResNet(3, 2, 2, 6, seed=99), ds, cfg, checkpoint_dir=tmp_path / "b", resume_epoch=4)
    assert np.array_equal(resumed.params, full.params)
    assert checkpoint_paths(tmp_path / "a", 6)[0].exists()


def test_divergence_reports_epoch_and_batch():
    ds = linear_data(40)
    cfg = TrainConfig(epochs=50, batch_size=10, learning_rate=1e30, optimizer="sgd")
    with pytest.raises((TrainingDiverged, FloatingPointError)) as err:
        with np.errstate(all="ignore"):
            train(ResNet(3, 1, 2, 6, seed=0), ds, cfg)
    if isinstance(err.value, TrainingDiverged):
        assert err.value.epoch >= 1


def test_validation_split():
    ds = linear_data(100)
    tr, va = split_validation(ds, 0.2, 0)
    assert len(tr) == 80 and len(va) == 20
    assert not set(map(tuple, tr.inputs)) & set(map(tuple, va.inputs))
    _, hist = train(ResNet(3, 1, 1, 4), ds, TrainConfig(epochs=2, validation_fraction=0.2))
    assert len(hist.val_loss) == 2


@pytest.mark.parametrize("kwargs", [dict(epochs=0), dict(batch_size=0), dict(learning_rate=0),
                                    dict(optimizer="rmsprop"), dict(validation_fraction=0.9)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_batch_larger_than_data():
    with pytest.raises(ValueError):
        train(ResNet(3), linear_data(5), TrainConfig(batch_size=10))


def test_adam_first_step_is_lr_sign():
    opt = Adam(3, 0.01)
    p = np.zeros(3)
    opt.step(p, np.array([2.0, -0.5, 1e-3]))
    assert np.allclose(p, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_history_csv(tmp_path):
    h = LossHistory([1.0, 0.5], None, [0.1, 0.2])
    h.to_csv(tmp_path / "h.csv", seconds=False)
    assert open(tmp_path / "h.csv").readline().strip() == "epoch,train_loss"
    assert LossHistory.from_csv(tmp_path / "h.csv").train_loss == [1.0, 0.5]

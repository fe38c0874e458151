from dataclasses import dataclass

import numpy as np
import pytest

from mbqcnn import models as M
from mbqcnn import train as T


@dataclass(frozen=True)
class Linear:
    """Toy model ``x @ w``: quadratic loss with a hand-derivable gradient."""

    w: np.ndarray

    @property
    def params(self):
        return self.w

    @property
    def n_params(self):
        return self.w.size

    def with_params(self, v):
        return Linear(np.asarray(v, dtype=float))

    def predict_batch(self, x):
        return np.real(x) @ self.w


@dataclass(frozen=True)
class Constant:
    value: float
    p: np.ndarray

    @property
    def params(self):
        return self.p

    def with_params(self, v):
        return Constant(self.value, np.asarray(v, dtype=float))

    def predict_batch(self, x):
        return np.full(len(x), self.value)


def toy_data(rng, n=8, d=2):
    return T.Dataset(rng.normal(size=(n, d)), rng.normal(size=n))


class TestLoss:
    def test_perfect(self):
        data = T.Dataset(np.zeros((2, 1)), [0.3, 0.3])
        assert T.mse_loss(Constant(0.3, np.zeros(1)), data) == 0

    def test_single(self):
        assert T.mse_loss(Constant(0.0, np.zeros(1)), T.Dataset(np.zeros((1, 1)), [1])) == 0.5

    def test_two(self):
        data = T.Dataset(np.zeros((2, 1)), [1, 0])
        assert T.mse_loss(Constant(0.0, np.zeros(1)), data) == 0.25

    def test_empty(self):
        with pytest.raises(ValueError):
            T.mse_loss(Constant(0, np.zeros(1)), T.Dataset(np.zeros((0, 1)), []))

    def test_dataset_shape(self):
        with pytest.raises(ValueError):
            T.Dataset(np.zeros((3, 1)), [0, 1])
        with pytest.raises(ValueError):
            T.Dataset(np.zeros((1, 1)), [0], task="regression")


class TestGradient:
    def test_constant_model(self, rng):
        g = T.fd_gradient(Constant(0.2, rng.normal(size=3)), toy_data(rng))
        assert np.all(g == 0)

    def test_analytic(self, rng):
        data = toy_data(rng)
        m = Linear(rng.normal(size=2))
        resid = data.labels - data.inputs @ m.w
        analytic = -(data.inputs.T @ resid) / len(data)
        assert np.allclose(T.fd_gradient(m, data), analytic, atol=1e-10)

    def test_step_halving_cluster(self, rng, haldane_sets):
        train, _ = haldane_sets
        m = M.ClusterModel.init(M.haldane_lattice(), rng)
        g1 = T.fd_gradient(m, train, 1e-3)
        g2 = T.fd_gradient(m, train, 1e-5)
        assert np.linalg.norm(g1 - g2) <= 1e-4 * np.linalg.norm(g2)
        assert g1.size == M.get_params(m).size

    def test_cnn_length_skips_frozen(self, rng):
        data = T.Dataset(rng.normal(size=(4, 16)), [0, 0.5, 1, 0], T.THREE_CLASS)
        assert T.fd_gradient(M.CnnModel.init(rng), data).size == 29

    def test_bad_step(self, rng):
        with pytest.raises(ValueError):
            T.fd_gradient(Linear(np.zeros(2)), toy_data(rng), 0)


class TestAccuracy:
    def test_perfect(self):
        data = T.Dataset(np.zeros((3, 1)), [1, 1, 1], T.BINARY)
        assert T.accuracy(Constant(0.9, np.zeros(1)), data) == 1.0

    def test_middle_only(self):
        data = T.Dataset(np.zeros((3, 1)), [0, 0.5, 1], T.THREE_CLASS)
        assert T.accuracy(Constant(0.5, np.zeros(1)), data) == pytest.approx(1 / 3)

    def test_binary_zero(self):
        data = T.Dataset(np.zeros((4, 1)), [0, 0, 0, 0], T.BINARY)
        assert T.accuracy(Constant(0.0, np.zeros(1)), data) == 1.0


class TestTrain:
    def test_zero_gradient_keeps_params(self, rng):
        p = rng.normal(size=3)
        trace = T.train(Constant(0.1, p), toy_data(rng), None, T.TrainingConfig(epochs=4))
        assert np.array_equal(trace.final_params, p) and len(trace.records) == 4

    def test_first_epoch_high_rate(self, rng):
        trace = T.train(Linear(np.ones(2)), toy_data(rng), None, T.TrainingConfig(epochs=1))
        assert 0.95 <= trace.records[0].learning_rate <= 1.45

    def test_rate_branches(self, rng):
        trace = T.train(Linear(np.ones(2)), toy_data(rng), None, T.TrainingConfig(epochs=20))
        for prev, cur in zip(trace.records, trace.records[1:]):
            low = cur.gradient_norm < prev.gradient_norm
            lo, hi = (0.25, 0.75) if low else (0.95, 1.45)
            assert lo <= cur.learning_rate <= hi

    def test_descent_monotone_with_small_rate(self, rng):
        data = toy_data(rng, d=1)
        cfg = T.TrainingConfig(epochs=30, lr_low_range=(0.01, 0.01), lr_high_range=(0.01, 0.01))
        losses = T.train(Linear(np.array([5.0])), data, None, cfg).losses()
        assert np.all(np.diff(losses) < 0)

    def test_bit_determinism(self, rng, haldane_sets):
        train, test = haldane_sets
        m = M.ClusterModel.init(M.haldane_lattice(), rng)
        cfg = T.TrainingConfig(epochs=3, seed=9)
        a, b = T.train(m, train, test, cfg), T.train(m, train, test, cfg)
        assert np.array_equal(a.final_params, b.final_params)
        assert [r.__dict__ for r in a.records] == [r.__dict__ for r in b.records]

    def test_cnn_freeze_survives_training(self, rng):
        data = T.Dataset(rng.uniform(0, 1, (6, 16)), [0, 0.5, 1, 0, 0.5, 1], T.THREE_CLASS)
        m = M.CnnModel.init(rng)
        trace = T.train(m, data, data, T.TrainingConfig(epochs=2))
        final = m.with_params(trace.final_params)
        assert final.kernels[M.FROZEN_KERNEL] == 0

    def test_non_finite_loss(self, rng):
        with pytest.raises(T.TrainingError):
            T.train(Constant(np.nan, np.zeros(1)), toy_data(rng), None, T.TrainingConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            T.TrainingConfig(fd_step=0)
        with pytest.raises(ValueError):
            T.TrainingConfig(lr_low_range=(1, 0))

    def test_epochs_to_loss(self, rng):
        trace = T.train(Linear(np.ones(2)), toy_data(rng), None, T.TrainingConfig(epochs=5))
        assert trace.epochs_to_loss(1e9) == 1 and trace.epochs_to_loss(-1) is None


class TestRepeats:
    def test_aggregate(self, rng):
        cfg = T.TrainingConfig(epochs=3, repeats=3)
        data = toy_data(rng)
        traces = T.train_repeats(lambda r: Linear(r.normal(size=2)), data, data, cfg)
        agg = T.aggregate(traces)
        assert agg.shape == (3, 5)
        assert np.allclose(agg[:, 1], np.mean([t.losses() for t in traces], axis=0))


class TestGradStudy:
    def test_constant_family(self, rng):
        res = T.avg_gradient_magnitude(lambda v: Constant(0.3, v), 3, toy_data(rng), [2, 4])
        assert res.log10_avg_grad == [float("-inf")] * 2

    def test_nested_prefix(self, rng):
        data = toy_data(rng)
        fam = lambda v: Linear(v)  # noqa: E731
        full = T.avg_gradient_magnitude(fam, 2, data, [3, 6], seed=5)
        short = T.avg_gradient_magnitude(fam, 2, data, [3], seed=5)
        assert full.log10_avg_grad[0] == short.log10_avg_grad[0]

    def test_counts_increasing(self, rng):
        with pytest.raises(ValueError):
            T.avg_gradient_magnitude(Linear, 2, toy_data(rng), [4, 4])


class TestCsv:
    def test_trace_schema(self, rng, tmp_path):
        trace = T.train(Linear(np.ones(2)), toy_data(rng), None, T.TrainingConfig(epochs=2))
        T.write_trace(trace, tmp_path / "t.csv", "config_sha256=abc")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "# config_sha256=abc"
        assert lines[1] == "epoch,train_loss,test_accuracy,grad_norm,lr"
        assert lines[2].startswith("1,")

    def test_aggregate_and_grad_schema(self, rng, tmp_path):
        data = toy_data(rng)
        traces = T.train_repeats(lambda r: Linear(r.normal(size=2)), data, data,
                                 T.TrainingConfig(epochs=2, repeats=2))
        T.write_aggregate(traces, tmp_path / "a.csv")
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "epoch,mean_loss,var_loss,mean_acc,var_acc"
        T.write_grad_study(T.GradStudyResult([8, 16], [-1.0, -1.5]), tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_text().splitlines() == ["n_points,log10_avg_grad", "8,-1", "16,-1.5"]

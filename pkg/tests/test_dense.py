import numpy as np
import pytest

from memdenoise.device import DeviceModel
from memdenoise.nets.common import (TrainConfig, TrainingDivergence,
                                    corrupt_plane, plane_samples, pow2_scale)
from memdenoise.nets.dense import DenseDenoiser, dense_train
from memdenoise.noise import parse_spec


def tiny_dataset(rng, n=24, h=8, w=8):
    from memdenoise.imagecore import Dataset
    imgs = rng.random((n, h, w))
    return Dataset(imgs, np.zeros(n, dtype=np.int64), "train")


class TestHelpers:
    def test_pow2_scale_values(self):
        assert pow2_scale(0.0) == 1.0
        assert pow2_scale(0.4686) == 0.5
        assert pow2_scale(0.5) == 0.5
        assert pow2_scale(0.6) == 1.0
        assert pow2_scale(1.0) == 1.0
        assert pow2_scale(1.3) == 2.0

    def test_plane_samples_grayscale(self, rng):
        imgs = rng.random((3, 4, 5))
        flat, shape = plane_samples(imgs)
        assert flat.shape == (3, 20) and shape == (4, 5)
        np.testing.assert_array_equal(flat[1], imgs[1].reshape(-1))

    def test_plane_samples_rgb_channels_become_planes(self, rng):
        imgs = rng.random((2, 4, 5, 3))
        flat, shape = plane_samples(imgs)
        assert flat.shape == (6, 20) and shape == (4, 5)
        np.testing.assert_array_equal(flat[0], imgs[0, :, :, 0].reshape(-1))
        np.testing.assert_array_equal(flat[1], imgs[0, :, :, 1].reshape(-1))

    def test_corrupt_plane_clamps_by_default(self):
        flat = np.zeros(64)
        out = corrupt_plane(flat, (8, 8), parse_spec("gaussian:0.5"), [0, 0])
        assert out.min() >= 0.0 and out.max() <= 1.0
        raw = corrupt_plane(flat, (8, 8), parse_spec("gaussian:0.5"), [0, 0],
                            clip_input=False)
        assert raw.min() < 0.0

    def test_config_validation(self):
        spec = parse_spec("gaussian:0.1")
        with pytest.raises(ValueError):
            TrainConfig(spec, learning_rate=-1)
        with pytest.raises(ValueError):
            TrainConfig(spec, epochs=-1)
        with pytest.raises(ValueError):
            TrainConfig(spec, batch=0)
        with pytest.raises(ValueError):
            TrainConfig(spec, init="random")
        with pytest.raises(ValueError):
            TrainConfig(spec, clean_fraction=1.5)


class TestDenseDenoiser:
    def test_identity_passes_images_through(self, rng):
        net = DenseDenoiser.identity(8, 8)
        img = rng.random((8, 8))
        np.testing.assert_array_equal(net.forward(img), img)

    def test_weight_shape_checked(self):
        with pytest.raises(ValueError):
            DenseDenoiser(np.zeros((64, 64)), 1.0, (8, 8))

    def test_forward_shape_checked(self, rng):
        net = DenseDenoiser.identity(8, 8)
        with pytest.raises(ValueError):
            net.forward(rng.random((7, 8)))

    def test_crossbar_route_equals_float_route(self, rng):
        # ideal device + power-of-two gain: programmed readout must equal
        # the float matrix product bit for bit
        p = 36
        weights = rng.uniform(-1.2, 1.2, size=(p + 1, p))
        scale = pow2_scale(np.abs(weights).max())
        net = DenseDenoiser(weights, scale, (6, 6))
        x = rng.random((5, p))
        ones = np.hstack([x, np.ones((5, 1))])
        want = np.clip(ones @ weights, 0.0, 1.0)
        np.testing.assert_array_equal(net.forward_flat(x), want)

    def test_forward_clips_input_and_output(self):
        p = 4
        weights = np.zeros((p + 1, p))
        weights[:p] = np.eye(p) * 1.0
        net = DenseDenoiser(weights, 1.0, (2, 2))
        out = net.forward(np.array([[-1.0, 0.5], [2.0, 1.0]]))
        np.testing.assert_array_equal(out, [[0.0, 0.5], [1.0, 1.0]])

    def test_forward_stack_matches_per_image(self, rng):
        net = DenseDenoiser.identity(6, 6)
        imgs = rng.random((4, 6, 6))
        out = net.forward_stack(imgs)
        for i in range(4):
            np.testing.assert_array_equal(out[i], net.forward(imgs[i]))

    def test_rgb_planes_share_weights(self, rng):
        net = DenseDenoiser.identity(6, 6)
        img = rng.random((6, 6, 3))
        out = net.forward(img)
        for c in range(3):
            np.testing.assert_array_equal(out[:, :, c],
                                          net.forward(img[:, :, c]))

    def test_reprogram_changes_device_not_weights(self, rng):
        net = DenseDenoiser.identity(6, 6)
        coarse = net.reprogram(DeviceModel(levels=16))
        assert coarse.device.levels == 16
        np.testing.assert_array_equal(coarse.weights, net.weights)

    def test_with_sparsity_masks_apply(self, rng):
        net = DenseDenoiser.identity(6, 6)
        masked = net.with_sparsity(0.25, 0.0, seed=3)
        assert masked.tiled.input_dropout_mask.sum() == round(0.25 * 37)
        dropped = masked.tiled.input_dropout_mask[:36]
        img = np.full((6, 6), 0.8)
        out = masked.forward(img).reshape(-1)
        np.testing.assert_array_equal(out[dropped], 0.0)
        np.testing.assert_array_equal(out[~dropped], 0.8)


class TestSerialization:
    def test_round_trip(self, rng):
        ds = tiny_dataset(rng)
        cfg = TrainConfig(parse_spec("gaussian:0.1"), learning_rate=0.05,
                          epochs=2, batch=4, seed=3)
        net = dense_train(cfg, ds)
        blob = net.to_bytes()
        back = DenseDenoiser.from_bytes(blob)
        np.testing.assert_array_equal(back.weights, net.weights)
        assert back.scale == net.scale
        assert back.train_noise == net.train_noise
        assert back.rmse_log == net.rmse_log
        assert back.to_bytes() == blob

    def test_round_trip_preserves_outputs(self, rng):
        ds = tiny_dataset(rng)
        cfg = TrainConfig(parse_spec("sp:0.25"), epochs=1, batch=4, seed=5)
        net = dense_train(cfg, ds)
        back = DenseDenoiser.from_bytes(net.to_bytes())
        img = rng.random((8, 8))
        np.testing.assert_array_equal(back.forward(img), net.forward(img))

    def test_file_round_trip(self, rng, tmp_path):
        net = DenseDenoiser.identity(6, 6)
        net.save(tmp_path / "net.bin")
        back = DenseDenoiser.load(tmp_path / "net.bin")
        np.testing.assert_array_equal(back.weights, net.weights)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            DenseDenoiser.from_bytes(b"NOTADNSE" + bytes(64))


class TestTraining:
    def test_single_update_matches_hand_delta_rule(self, rng):
        # one sample, one epoch, batch 1: W <- W + eta * x (c - x W)^T
        from memdenoise.imagecore import Dataset
        imgs = rng.random((1, 8, 8))
        ds = Dataset(imgs, np.zeros(1, dtype=np.int64), "train")
        spec = parse_spec("gaussian:0.1")
        cfg = TrainConfig(spec, learning_rate=0.05, epochs=1, batch=1, seed=9)
        net = dense_train(cfg, ds)

        clean = imgs.reshape(1, 64)
        noisy = corrupt_plane(clean[0], (8, 8), spec, [9, 1, 0])
        x = np.concatenate([noisy, [1.0]])[None, :]
        w0 = np.zeros((65, 64))
        err = clean - x @ w0
        want = w0 + 0.05 * (x.T @ err)
        np.testing.assert_allclose(net.weights, want, atol=1e-12)

    def test_batch_update_is_mean_over_batch(self, rng):
        from memdenoise.imagecore import Dataset
        imgs = rng.random((4, 8, 8))
        ds = Dataset(imgs, np.zeros(4, dtype=np.int64), "train")
        spec = parse_spec("gaussian:0.05")
        cfg = TrainConfig(spec, learning_rate=0.04, epochs=1, batch=4, seed=2)
        net = dense_train(cfg, ds)

        clean = imgs.reshape(4, 64)
        perm = np.random.default_rng([2, 0x5F]).permutation(4)
        noisy = np.stack([corrupt_plane(clean[i], (8, 8), spec, [2, 1, int(i)])
                          for i in perm])
        x = np.hstack([noisy, np.ones((4, 1))])
        err = clean[perm] - x @ np.zeros((65, 64))
        want = (0.04 / 4) * (x.T @ err)
        np.testing.assert_allclose(net.weights, want, atol=1e-12)

    def test_identity_init_starts_from_passthrough(self, rng):
        ds = tiny_dataset(rng)
        cfg = TrainConfig(parse_spec("gaussian:0.01"), learning_rate=0.0,
                          epochs=1, batch=4, init="identity")
        net = dense_train(cfg, ds)
        np.testing.assert_array_equal(net.weights[:64], np.eye(64))

    def test_rmse_log_one_entry_per_epoch(self, rng):
        ds = tiny_dataset(rng)
        cfg = TrainConfig(parse_spec("gaussian:0.1"), epochs=3, batch=8, seed=1)
        net = dense_train(cfg, ds)
        assert len(net.rmse_log) == 3
        assert all(v > 0 for v in net.rmse_log)

    def test_loss_decreases_on_easy_noise(self, rng):
        ds = tiny_dataset(rng, n=48)
        cfg = TrainConfig(parse_spec("gaussian:0.01"), learning_rate=0.02,
                          epochs=4, batch=8, seed=7)
        net = dense_train(cfg, ds)
        assert net.rmse_log[-1] < net.rmse_log[0]

    def test_divergence_raises_with_log(self, rng):
        ds = tiny_dataset(rng)
        cfg = TrainConfig(parse_spec("gaussian:0.1"), learning_rate=500.0,
                          epochs=4, batch=4, seed=1)
        with pytest.raises(TrainingDivergence) as info:
            dense_train(cfg, ds)
        assert info.value.rmse > 2.0 * info.value.initial_rmse
        assert len(info.value.rmse_log) == info.value.epoch

    def test_limit_restricts_training_set(self, rng):
        ds = tiny_dataset(rng, n=24)
        spec = parse_spec("gaussian:0.1")
        a = dense_train(TrainConfig(spec, epochs=1, batch=4, seed=3, limit=8), ds)
        b = dense_train(TrainConfig(spec, epochs=1, batch=4, seed=3, limit=8),
                        ds.subset(8))
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_same_seed_reproduces_training(self, rng):
        ds = tiny_dataset(rng)
        spec = parse_spec("sp:0.1")
        cfg = TrainConfig(spec, epochs=2, batch=4, seed=11)
        a = dense_train(cfg, ds)
        b = dense_train(cfg, ds)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.rmse_log == b.rmse_log

    def test_train_noise_recorded_as_text(self, rng):
        ds = tiny_dataset(rng)
        net = dense_train(TrainConfig(parse_spec("poisson"), epochs=1, batch=4), ds)
        assert net.train_noise == "poisson:2.5"

    def test_device_in_loop_quantizes_each_epoch(self, rng):
        ds = tiny_dataset(rng)
        dev = DeviceModel(levels=16)
        cfg = TrainConfig(parse_spec("gaussian:0.1"), epochs=2, batch=4,
                          seed=4, device=dev, device_in_loop=True)
        net = dense_train(cfg, ds)
        # weights passed through the 16-level grid at the last epoch end
        grid = np.round(net.weights / net.scale * 15) / 15 * net.scale
        np.testing.assert_allclose(net.weights, grid, atol=1e-12)

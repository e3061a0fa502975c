import numpy as np
import pytest

from somvet.nn import (
    Batch,
    LayerSpec,
    Network,
    fit_autoencoder,
    gradient_check,
    mse_grad,
    mse_loss,
)


def test_identity_dense_forward():
    net = Network([LayerSpec("dense", features=4)], (4,), seed=0, dtype=np.float64)
    w, b = net.parameters()
    w[...] = np.eye(4)
    b[...] = 0.0
    v = np.array([[0.3, -1.2, 0.0, 2.5]])
    assert np.array_equal(net.forward(v), v)


def test_relu_definition():
    net = Network([LayerSpec("relu")], (3,), seed=0, dtype=np.float64)
    out = net.forward(np.array([[-1.0, 0.0, 2.0]]))
    assert np.array_equal(out, [[0.0, 0.0, 2.0]])


def test_maxpool_definition():
    net = Network([LayerSpec("maxpool2d", stride=2)], (1, 2, 2), seed=0, dtype=np.float64)
    out = net.forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    assert out.shape == (1, 1, 1, 1)
    assert out[0, 0, 0, 0] == 4.0


def test_zero_loss_grad_gives_zero_gradients():
    net = Network(
        [LayerSpec("dense", features=5), LayerSpec("relu"), LayerSpec("dense", features=2)],
        (6,),
        seed=3,
        dtype=np.float64,
    )
    y = net.forward(np.random.default_rng(0).uniform(0, 1, (2, 6)))
    net.backward(np.zeros_like(y))
    assert all(np.all(g == 0) for g in net.gradients())


def test_single_dense_mse_closed_form():
    # scalar output, one sample: dL/dW = 2 (yhat - y) x^T
    net = Network([LayerSpec("dense", features=1)], (3,), seed=5, dtype=np.float64)
    x = np.array([[0.2, -0.4, 0.9]])
    target = np.array([[0.7]])
    pred = net.forward(x)
    net.backward(mse_grad(pred, target))
    gw, gb = net.gradients()
    want = 2.0 * (pred[0, 0] - target[0, 0]) * x[0]
    assert np.allclose(gw[:, 0], want, rtol=1e-12)
    assert np.isclose(gb[0], 2.0 * (pred[0, 0] - target[0, 0]))


def test_three_layer_finite_difference_seed42():
    net = Network(
        [
            LayerSpec("dense", features=12),
            LayerSpec("relu"),
            LayerSpec("dense", features=8),
            LayerSpec("relu"),
            LayerSpec("dense", features=4),
        ],
        (10,),
        seed=42,
        dtype=np.float64,
    )
    rng = np.random.default_rng(42)
    x = rng.uniform(0.1, 0.9, (3, 10))
    t = rng.uniform(0, 1, (3, 4))
    assert gradient_check(net, x, t, eps=1e-5) < 1e-4


def test_gradient_check_dense_relu_dense():
    net = Network(
        [LayerSpec("dense", features=9), LayerSpec("relu"), LayerSpec("dense", features=3)],
        (7,),
        seed=1,
        dtype=np.float64,
    )
    rng = np.random.default_rng(1)
    assert gradient_check(net, rng.uniform(0.1, 0.9, (2, 7)), rng.uniform(0, 1, (2, 3))) < 1e-4


def test_gradient_check_conv_pool_dense():
    net = Network(
        [
            LayerSpec("conv2d", features=4, kernel_size=3),
            LayerSpec("relu"),
            LayerSpec("maxpool2d", stride=2),
            LayerSpec("flatten"),
            LayerSpec("dense", features=6),
        ],
        (1, 8, 8),
        seed=2,
        dtype=np.float64,
    )
    rng = np.random.default_rng(2)
    x = rng.uniform(0.1, 0.9, (2, 1, 8, 8))
    t = rng.uniform(0, 1, (2, 6))
    assert gradient_check(net, x, t, eps=1e-5) < 1e-4


def test_gradient_check_transposed_conv_path():
    net = Network(
        [
            LayerSpec("dense", features=2 * 4 * 4),
            LayerSpec("relu"),
            LayerSpec("reshape", shape=(2, 4, 4)),
            LayerSpec("upsample2d", stride=2),
            LayerSpec("transposed-conv2d", features=1, kernel_size=3, stride=1),
        ],
        (5,),
        seed=8,
        dtype=np.float64,
    )
    rng = np.random.default_rng(8)
    x = rng.uniform(0.1, 0.9, (2, 5))
    t = rng.uniform(0, 1, (2, 1, 8, 8))
    assert gradient_check(net, x, t) < 1e-4


def test_zero_weight_net_bias_gradient_exact():
    # with all weights zero the output depends linearly on the bias alone,
    # so central differences are exact for it
    net = Network([LayerSpec("dense", features=2)], (3,), seed=0, dtype=np.float64)
    w, b = net.parameters()
    w[...] = 0.0
    x = np.full((1, 3), 0.5)
    t = np.array([[0.2, 0.9]])
    pred = net.forward(x)
    net.backward(mse_grad(pred, t))
    analytic = net.gradients()[1].copy()
    eps = 1e-5
    for i in range(2):
        b[i] += eps
        lp = mse_loss(net.forward(x), t)
        b[i] -= 2 * eps
        lm = mse_loss(net.forward(x), t)
        b[i] += eps
        assert abs((lp - lm) / (2 * eps) - analytic[i]) < 1e-10


def _random_chain(rng):
    specs = []
    shape = (1, 32, 32)
    n_conv = rng.integers(0, 3)
    size = 32
    channels = 1
    for _ in range(n_conv):
        channels = int(rng.choice([2, 4, 8]))
        specs += [
            LayerSpec("conv2d", features=channels, kernel_size=int(rng.choice([3, 5]))),
            LayerSpec("relu"),
        ]
        if size >= 8 and rng.random() < 0.7:
            specs.append(LayerSpec("maxpool2d", stride=2))
            size //= 2
    specs.append(LayerSpec("flatten"))
    for _ in range(rng.integers(1, 3)):
        specs.append(LayerSpec("dense", features=int(rng.choice([4, 8, 16]))))
        if rng.random() < 0.5:
            specs.append(LayerSpec("relu"))
    return specs, shape


def test_shape_chaining_100_random_networks():
    rng = np.random.default_rng(99)
    for _ in range(100):
        specs, in_shape = _random_chain(rng)
        net = Network(specs, in_shape, seed=int(rng.integers(1 << 31)), dtype=np.float64)
        x = rng.uniform(0, 1, (2, *in_shape))
        y = net.forward(x)
        assert y.shape == (2, *net.output_shape)
        gx = net.backward(np.zeros_like(y))
        assert gx.shape == x.shape
        for p, g in zip(net.parameters(), net.gradients()):
            assert p.shape == g.shape


def test_forward_shape_mismatch_rejected():
    net = Network([LayerSpec("dense", features=2)], (3,), seed=0)
    with pytest.raises(ValueError, match="does not match"):
        net.forward(np.zeros((1, 4)))


def test_backward_before_forward_is_protocol_error():
    net = Network([LayerSpec("dense", features=2)], (3,), seed=0)
    with pytest.raises(RuntimeError, match="before forward"):
        net.backward(np.zeros((1, 2)))


def test_gradient_check_requires_float64():
    net = Network([LayerSpec("dense", features=2)], (3,), seed=0, dtype=np.float32)
    with pytest.raises(RuntimeError, match="float64"):
        gradient_check(net, np.zeros((1, 3)), np.zeros((1, 2)))


@pytest.mark.filterwarnings("ignore:invalid value", "ignore:overflow")
def test_gradient_check_names_layer_on_non_finite():
    net = Network(
        [LayerSpec("dense", features=4), LayerSpec("relu"), LayerSpec("dense", features=2)],
        (3,),
        seed=0,
        dtype=np.float64,
    )
    net.parameters()[0][0, 0] = np.inf
    with pytest.raises(RuntimeError, match="layer \\d \\(dense\\)"):
        gradient_check(net, np.full((1, 3), 0.5), np.zeros((1, 2)))


def test_batch_validation():
    with pytest.raises(ValueError, match="\\[0, 1\\]"):
        Batch(np.full((1, 32, 32), 2.0))
    with pytest.raises(ValueError, match="non-finite"):
        Batch(np.full((1, 32, 32), np.nan))
    with pytest.raises(ValueError, match="32, 32"):
        Batch(np.zeros((1, 16, 16)))


AE_ENC = (LayerSpec("flatten"), LayerSpec("dense", features=8))
AE_DEC = (LayerSpec("dense", features=1024), LayerSpec("reshape", shape=(1, 32, 32)))


def _constant_data():
    rng = np.random.default_rng(0)
    one = rng.uniform(0.2, 0.8, (32, 32)).astype(np.float32)
    return np.repeat(one[None], 64, axis=0)


def test_fit_constant_dataset_converges():
    data = _constant_data()
    ae = fit_autoencoder(
        AE_ENC, AE_DEC, data, epochs=50, learning_rate=0.1, batch_size=16, momentum=0.9, seed=1
    )
    assert ae.loss_history[-1] < 1e-3 * ae.loss_history[0]


def test_fit_zero_epochs_keeps_initialization():
    data = _constant_data()
    ae = fit_autoencoder(AE_ENC, AE_DEC, data, epochs=0, learning_rate=0.1, seed=5)
    fresh = fit_autoencoder(AE_ENC, AE_DEC, data, epochs=0, learning_rate=0.9, seed=5)
    for a, b in zip(ae.encoder.parameters(), fresh.encoder.parameters()):
        assert np.array_equal(a, b)
    assert ae.loss_history == []


def test_fit_psf_corpus_loss_drops_by_epoch_20(corpus_psf_pixels):
    ae = fit_autoencoder(
        AE_ENC, AE_DEC, corpus_psf_pixels, epochs=20, learning_rate=0.1,
        batch_size=32, momentum=0.9, seed=2,
    )
    assert ae.loss_history[19] < ae.loss_history[0]


def test_fit_is_bit_reproducible(corpus_psf_pixels):
    runs = [
        fit_autoencoder(
            AE_ENC, AE_DEC, corpus_psf_pixels, epochs=3, learning_rate=0.1, seed=11
        )
        for _ in range(2)
    ]
    for a, b in zip(runs[0].encoder.parameters() + runs[0].decoder.parameters(),
                    runs[1].encoder.parameters() + runs[1].decoder.parameters()):
        assert np.array_equal(a, b)
    assert runs[0].loss_history == runs[1].loss_history


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_fit_divergence_reports_epoch():
    data = _constant_data()
    with pytest.raises(RuntimeError, match="epoch"):
        fit_autoencoder(AE_ENC, AE_DEC, data, epochs=60, learning_rate=80.0, seed=1)

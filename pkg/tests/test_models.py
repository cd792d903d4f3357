import numpy as np
import pytest

from simpsi import dsp
from simpsi.autodiff import Tensor, frozen
from simpsi.autodiff.functional import softmax_cross_entropy
from simpsi.errors import ConfigError, ShapeError
from simpsi.models import (
    DemodulatorConfig,
    MapGeneratorConfig,
    build_demodulator,
    build_generator,
    demodulator_loss,
    spectrum_tokens,
)
from simpsi.rng import RngFabric


def batch(seed, n=4):
    return np.random.default_rng(seed).standard_normal((n, 1, 128)).astype(np.float32)


@pytest.mark.parametrize("classes", [8, 32])
def test_demodulator_output_shape(classes):
    model = build_demodulator(DemodulatorConfig(num_classes=classes), RngFabric(0))
    assert model(Tensor(batch(0))).shape == (4, 32, classes)


def conv(cin, cout, k):
    return cin * cout * k + cout


def bn(c):
    return 2 * c


def expected_demodulator_params(m, widths=(32, 64, 64)):
    w0, w1, w2 = widths
    total = conv(1, w0, 7) + bn(w0)
    total += 2 * (conv(w0, w0, 3) + bn(w0))
    total += conv(w0, w1, 3) + bn(w1) + 2 * (conv(w1, w1, 3) + bn(w1))
    total += conv(w1, w2, 3) + bn(w2) + 2 * (conv(w2, w2, 3) + bn(w2))
    return total + 32 * (w2 * m + m)  # one readout per symbol slot


@pytest.mark.parametrize("classes", [8, 32])
def test_demodulator_parameter_count(classes):
    model = build_demodulator(DemodulatorConfig(num_classes=classes), RngFabric(0))
    assert model.num_parameters() == expected_demodulator_params(classes)
    assert expected_demodulator_params(8) == 92032


def test_generator_parameter_count():
    d, ffn, f = 64, 128, 65
    layer = (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * ffn + ffn) + (ffn * d + d) + 2 * d
    expected = (2 * d + d) + f * d + 2 * layer + (d * d + d)
    assert build_generator(MapGeneratorConfig(seq_len=65), RngFabric(0)).num_parameters() == expected


def test_demodulator_downsamples_to_symbol_rate():
    model = build_demodulator(DemodulatorConfig(), RngFabric(0))
    h = model.stem(Tensor(batch(1)))
    lengths = [h.shape[-1]]
    for stage in model.stages:
        h = stage(h)
        lengths.append(h.shape[-1])
    assert lengths[0] == 128 and lengths[-1] == 32
    assert sum(stage.__class__.__name__ == "Downsample" for stage in model.stages) == 2


def test_zero_head_gives_log_m_loss():
    model = build_demodulator(DemodulatorConfig(num_classes=8), RngFabric(0)).eval()
    model.head.weight.data[:] = 0
    labels = np.random.default_rng(0).integers(0, 8, (4, 32))
    loss = demodulator_loss(model(Tensor(batch(2))), labels)
    assert float(loss.data) == pytest.approx(np.log(8), rel=1e-6)


def test_loss_on_confident_logits_and_oracle():
    labels = np.array([[0, 2, 1]])
    logits = np.full((1, 3, 3), -20.0, dtype=np.float64)
    logits[0, np.arange(3), labels[0]] = 20.0
    assert float(softmax_cross_entropy(Tensor(logits), labels).data) < 1e-6
    z = np.random.default_rng(3).standard_normal((2, 5, 4))
    y = np.random.default_rng(4).integers(0, 4, (2, 5))
    ref = np.mean([np.log(np.sum(np.exp(z[i, j]))) - z[i, j, y[i, j]] for i in range(2) for j in range(5)])
    assert float(softmax_cross_entropy(Tensor(z), y).data) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        softmax_cross_entropy(Tensor(z), np.full((2, 5), 4))


def test_eval_forward_is_pure_and_train_forward_updates_stats():
    model = build_demodulator(DemodulatorConfig(), RngFabric(0))
    x = Tensor(batch(5))
    model.eval()
    a, b = model(x).data, model(x).data
    assert np.array_equal(a, b)
    before = model.checksum()
    model.train()
    model(x)
    assert model.checksum() != before


def test_position_specific_head():
    # identical segments at two positions may decode differently
    model = build_demodulator(DemodulatorConfig(), RngFabric(0)).eval()
    w = model.head.weight.data
    assert w.shape == (32, 64, 8)
    assert not np.allclose(w[0], w[1])


def test_every_parameter_gets_a_gradient():
    for model, inputs in (
        (build_demodulator(DemodulatorConfig(), RngFabric(1)), Tensor(batch(6))),
        (build_generator(MapGeneratorConfig(seq_len=65), RngFabric(1)), Tensor(spectrum_tokens(dsp.rfft(batch(6))))),
    ):
        out = model(inputs)
        from simpsi.autodiff import mul, tsum
        tsum(mul(out, Tensor(np.random.default_rng(0).standard_normal(out.shape).astype(np.float32)))).backward()
        for name, p in model.named_parameters().items():
            assert p.grad is not None and np.any(p.grad != 0), name


def test_generator_output_range_and_shape_checks():
    gen = build_generator(MapGeneratorConfig(seq_len=65), RngFabric(0))
    tokens = spectrum_tokens(dsp.rfft(batch(7)))
    assert tokens.shape == (4, 65, 2)
    out = gen(tokens).data
    assert out.shape == (4, 65) and out.min() > 0 and out.max() < 1
    with pytest.raises(ShapeError):
        gen(tokens[:, :64])


def test_spectrum_tokens_layout():
    x = np.random.default_rng(8).standard_normal((2, 3, 16))
    spec = dsp.rfft(x)
    tokens = spectrum_tokens(spec)
    assert tokens.shape == (2, 9, 6)
    assert np.allclose(tokens[0, :, 1], spec.data[0, 1].real / 4, atol=1e-6)
    assert np.allclose(tokens[0, :, 4], spec.data[0, 1].imag / 4, atol=1e-6)


def test_zero_head_generator_is_one_half():
    gen = build_generator(MapGeneratorConfig(seq_len=65, zero_init_head=True), RngFabric(0))
    gen.pos_embedding.data[:] = 0
    assert np.array_equal(gen(spectrum_tokens(dsp.rfft(batch(9)))).data, np.full((4, 65), 0.5, dtype=np.float32))


def test_frozen_generator_records_no_gradients():
    gen = build_generator(MapGeneratorConfig(seq_len=65), RngFabric(0))
    with frozen(gen):
        out = gen(spectrum_tokens(dsp.rfft(batch(1))))
    assert not out.requires_grad


def test_init_is_seeded():
    a = build_demodulator(DemodulatorConfig(), RngFabric(3)).state_dict()
    b = build_demodulator(DemodulatorConfig(), RngFabric(3)).state_dict()
    c = build_demodulator(DemodulatorConfig(), RngFabric(4)).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


@pytest.mark.parametrize("kwargs,key", [
    ({"input_length": 100}, "input_length"),
    ({"num_symbols": 128 // 3}, "input_length"),
    ({"num_blocks": 2}, "num_blocks"),
    ({"widths": (32, 64)}, "widths"),
])
def test_demodulator_config_validation(kwargs, key):
    with pytest.raises(ConfigError) as info:
        DemodulatorConfig(**kwargs)
    assert info.value.key == key


def test_generator_config_validation():
    with pytest.raises(ConfigError):
        MapGeneratorConfig(d_model=30, heads=4)

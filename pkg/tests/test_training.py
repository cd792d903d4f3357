import csv
import json

import numpy as np
import pytest

from simpsi import dsp
from simpsi.augment import AugmentSpec
from simpsi.errors import ConfigError, NumericalAbortError, ShapeError
from simpsi.fsk import FskScheme, generate_dataset
from simpsi.harness import (
    Checkpoint,
    TrainConfig,
    comparable_metrics,
    compare_runs,
    evaluate,
    export_preservation_maps,
    load_run_checkpoint,
    model_configs,
    psi_map_for,
    read_metrics,
    train,
    write_run,
)
from simpsi.harness.training import _Trainer, predict_proba
from simpsi.models import build_demodulator, build_generator, spectrum_tokens
from simpsi.psi import PreservationMap, PsiMode
from simpsi.rng import RngFabric

TINY_CLS = {"stem_channels": 8, "widths": [8, 16, 16]}
TINY_GEN = {"d_model": 16, "heads": 2, "ffn_dim": 32}


@pytest.fixture(scope="module")
def fsk8():
    return generate_dataset(FskScheme.named("fsk8", seed=1), {"train": 128, "val": 32, "test": 32})


def _cfg(**kw):
    base = dict(epochs=2, batch_size=32, classifier=TINY_CLS, generator=TINY_GEN)
    base.update(kw)
    return TrainConfig(**base)


def test_plain_training_loss_decreases(fsk8):
    _, result = train(TrainConfig(epochs=5, batch_size=32), fsk8)
    assert len(result.train_loss) == 5
    assert result.train_loss[-1] < result.train_loss[0]
    assert all(b < a for a, b in zip(result.train_loss, result.train_loss[1:]))


@pytest.mark.parametrize("mode", list(PsiMode))
def test_every_mode_trains_deterministically(fsk8, mode):
    cfg = _cfg(augmentation=AugmentSpec("freq_mask"), psi_mode=mode)
    _, a = train(cfg, fsk8)
    _, b = train(cfg, fsk8)
    assert comparable_metrics(a.to_dict()) == comparable_metrics(b.to_dict())
    assert 0.0 <= a.test_accuracy <= 1.0 and 0.0 <= a.test_auprc <= 1.0
    assert (a.pc_loss[0] is not None) == (mode is PsiMode.SPECTRUM_PRESERVATIVE)


def test_seed_changes_results(fsk8):
    _, a = train(_cfg(), fsk8)
    _, b = train(_cfg(seed=1), fsk8)
    assert a.train_loss != b.train_loss


def test_freeze_discipline_checked_every_step(fsk8):
    _, result = train(_cfg(augmentation=AugmentSpec("freq_mask"), psi_mode="spectrum_preservative"), fsk8,
                      check_freeze=True)
    batches_per_epoch = 128 // 32
    assert result.freeze_checks == 2 * 2 * batches_per_epoch


def test_each_step_moves_only_its_own_model(fsk8):
    cfg = _cfg(augmentation=AugmentSpec("freq_mask"), psi_mode="spectrum_preservative")
    tr = _Trainer(cfg, fsk8, check_freeze=False)
    x, y = fsk8.split("train")
    x, y = x[:32], y[:32].astype(np.int64)
    gen0, cls0 = tr.generator.checksum(), tr.classifier.checksum()
    tr.generator.train()
    p = tr.generator(spectrum_tokens(dsp.rfft(x)))
    tr.classifier_step(x, y, 0, 0, PreservationMap(p.data, "generator"))
    cls1 = tr.classifier.checksum()
    assert tr.generator.checksum() == gen0 and cls1 != cls0
    tr.generator_step(x, y, 0, 0, p)
    assert tr.classifier.checksum() == cls1 and tr.generator.checksum() != gen0


def test_nan_input_aborts_with_diagnostics(fsk8):
    bad = generate_dataset(FskScheme.named("fsk8"), {"train": 64, "test": 8})
    bad.signals[3, 0, 5] = np.nan
    with pytest.raises(NumericalAbortError) as info:
        train(_cfg(epochs=1), bad)
    assert info.value.diagnostics["epoch"] == 0
    assert "batch" in info.value.diagnostics


@pytest.mark.parametrize("kw,key", [
    (dict(beta1=0.5, beta2=0.1), "beta1"),
    (dict(epochs=0), "epochs"),
    (dict(batch_size=0), "batch_size"),
    (dict(lr=-1.0), "lr"),
    (dict(seed=-1), "seed"),
    (dict(classifier={"depth": 3}), "classifier.depth"),
])
def test_config_violations(kw, key):
    with pytest.raises(ConfigError) as info:
        TrainConfig(**kw)
    assert info.value.key == key


def test_config_unknown_key_and_round_trip():
    with pytest.raises(ConfigError) as info:
        TrainConfig.from_dict({"epoch": 3})
    assert info.value.key == "epoch"
    with pytest.raises(ConfigError, match="psi"):
        TrainConfig(psi_mode="spectral")
    cfg = TrainConfig(augmentation=AugmentSpec("freq_mask"), psi_mode="magnitude", epochs=3)
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).to_dict() == cfg.to_dict()


def test_psi_map_for_dispatch():
    n = np.arange(128)
    tone = np.cos(2 * np.pi * 20 * n / 128)[None, None].astype(np.float32)
    x_f = dsp.rfft(tone)
    assert np.all(psi_map_for("none", x_f).values == 0)
    mag = psi_map_for("magnitude", x_f).values[0]
    assert mag[20] == pytest.approx(1.0) and np.delete(mag, 20).max() < 1e-3
    a = psi_map_for("random", x_f, rng=RngFabric(0).stream("m", lanes=1)).values
    b = psi_map_for("random", x_f, rng=RngFabric(0).stream("m", lanes=1)).values
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError, match="generator"):
        psi_map_for("spectrum_preservative", x_f)
    with pytest.raises(ValueError):
        psi_map_for("saliency", x_f)
    with pytest.raises(ValueError):
        psi_map_for("random", x_f)


@pytest.fixture(scope="module")
def trained(fsk8):
    cfg = _cfg(augmentation=AugmentSpec("freq_mask"), psi_mode="spectrum_preservative")
    return train(cfg, fsk8)


def test_evaluate_is_repeatable_and_parallel_safe(fsk8, trained):
    ckpt, result = trained
    x, y = fsk8.split("test")
    a = evaluate(ckpt, x, y)
    assert a == evaluate(ckpt, x, y)
    assert a.accuracy == result.test_accuracy
    big = np.concatenate([x] * 20)
    clf = ckpt.build_classifier()
    assert predict_proba(clf, big, jobs=1).tobytes() == predict_proba(clf, big, jobs=3).tobytes()


def test_evaluate_shape_errors(fsk8, trained):
    ckpt, _ = trained
    x, y = fsk8.split("test")
    with pytest.raises(ShapeError):
        evaluate(ckpt, x[:, :, :64], y)
    with pytest.raises(ShapeError):
        evaluate(ckpt, x, y[:-1])
    with pytest.raises(ShapeError):
        evaluate(ckpt, x, y + 8)


def test_evaluate_never_uses_generator(fsk8, trained):
    ckpt, _ = trained
    x, y = fsk8.split("test")
    stripped = type(ckpt)(ckpt.config, ckpt.classifier_config, ckpt.classifier_state)
    assert evaluate(stripped, x, y) == evaluate(ckpt, x, y)


def test_write_run_and_compare(tmp_path, fsk8, trained):
    ckpt, result = trained
    run = write_run(tmp_path / "run", ckpt.config, ckpt, result, {"path": "d"})
    metrics = read_metrics(run)
    assert metrics["test_accuracy"] == result.test_accuracy
    assert compare_runs(run, run) == 0.0
    rows = list(csv.reader(open(run / "train_log.csv")))
    assert rows[0] == ["epoch", "L_cl", "L_pc", "val_acc"] and len(rows) == 3
    other = dict(metrics, test_accuracy=metrics["test_accuracy"] - 0.125)
    assert compare_runs(metrics, other) == pytest.approx(0.125)
    assert compare_runs(other, metrics) == pytest.approx(-0.125)
    with pytest.raises(ConfigError):
        compare_runs(metrics, dict(other, dataset={"path": "elsewhere"}))
    back = load_run_checkpoint(run)
    x, y = fsk8.split("test")
    assert evaluate(back, x, y) == evaluate(ckpt, x, y)


def test_export_maps(tmp_path, fsk8, trained):
    ckpt, _ = trained
    x, y = fsk8.split("test")
    doc = export_preservation_maps(ckpt, x, y, tmp_path / "maps.csv")
    rows = list(csv.reader(open(tmp_path / "maps.csv")))
    assert rows[0] == ["sample"] + [f"bin_{k}" for k in range(65)]
    assert len(rows) - 1 == len(x) + 1 == doc["rows"]
    assert rows[-1][0] == "MEAN"
    mean = np.array([float(v) for v in rows[-1][1:]])
    body = np.array([[float(v) for v in r[1:]] for r in rows[1:-1]])
    np.testing.assert_allclose(mean, body.mean(axis=0), rtol=1e-12)
    by_sort = sorted(range(65), key=lambda k: (-mean[k], k))[:10]
    assert doc["top10_bins"] == by_sort
    assert json.loads((tmp_path / "maps_top10.json").read_text())["top10_bins"] == by_sort


def test_export_zero_head_generator_is_half(tmp_path, fsk8):
    fabric = RngFabric(0)
    cls_cfg, gen_cfg = model_configs(_cfg(psi_mode="spectrum_preservative"), fsk8)
    gen_cfg.zero_init_head = True
    ckpt = Checkpoint.from_models({"psi_mode": "spectrum_preservative"}, build_demodulator(cls_cfg, fabric),
                                  build_generator(gen_cfg, fabric))
    export_preservation_maps(ckpt, *fsk8.split("test"), tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))[1:]
    assert {float(v) for r in rows for v in r[1:]} == {0.5}


def test_export_needs_a_map_mode(tmp_path, fsk8):
    ckpt, _ = train(_cfg(epochs=1), fsk8)
    with pytest.raises(ConfigError):
        export_preservation_maps(ckpt, *fsk8.split("test"), tmp_path / "m.csv")

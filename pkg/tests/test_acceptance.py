"""One test per acceptance criterion; each prints a CRITERION PASS/FAIL line.

The long training runs (criteria 7 and 8) are cached under
``results/acceptance`` keyed by run spec and package source, and produced by
``scripts/run_acceptance_experiments.py``. Set ``SIMPSI_ACCEPTANCE_FRESH=1``
to retrain them here, or ``SIMPSI_ACCEPTANCE_CACHE`` to use another cache.
"""

import json
import math
import os
from pathlib import Path

import numpy as np

from test_autodiff import INSTANCES, PRIMITIVES, _mix_fn, check_gradients, directional_check, f32
from test_dsp import naive_dft

from simpsi import augment, dsp, psi
from simpsi.cli import main as cli_main
from simpsi.fsk import CARRIER_BINS, FskScheme, generate_dataset, modulate, oracle_demodulate
from simpsi.harness import TrainConfig, auprc, comparable_metrics, macro_auprc, train
from simpsi.harness.experiments import cached_run, carrier_map_run, trend_runs
from simpsi.harness.metrics import accuracy
from simpsi.harness.runs import load_run_checkpoint, preservation_maps, top_bins
from simpsi.models import DemodulatorConfig, MapGeneratorConfig, build_demodulator, build_generator, spectrum_tokens
from simpsi.rng import RngFabric

CACHE = Path(os.environ.get("SIMPSI_ACCEPTANCE_CACHE", Path(__file__).resolve().parents[1] / "results" / "acceptance"))
FRESH = os.environ.get("SIMPSI_ACCEPTANCE_FRESH") == "1"


def test_criterion_01_dsp_oracle_equivalence(report):
    worst_naive = 0.0
    for length in range(1, 65):
        r = np.random.default_rng(length)
        x = r.standard_normal(length) + 1j * r.standard_normal(length)
        ref = naive_dft(x)
        xr = x.real.copy()
        half = naive_dft(xr)[: length // 2 + 1]
        worst_naive = max(worst_naive,
                          np.abs(dsp.fft(x) - ref).max(),
                          np.abs(dsp.ifft(ref) - x).max(),
                          np.abs(dsp.rfft(xr).data - half).max(),
                          np.abs(dsp.irfft(dsp.HalfSpectrum(half, length)) - xr).max())
    worst_trip = 0.0
    for length in list(range(1, 513)) + [3000]:
        x = np.random.default_rng(10_000 + length).standard_normal((2, length)).astype(np.float32)
        worst_trip = max(worst_trip, float(np.abs(dsp.irfft(dsp.rfft(x)) - x).max()))
    ok = worst_naive < 1e-9 and worst_trip < 1e-5
    assert report(1, "dsp oracle equivalence", ok,
                  f"naive max err {worst_naive:.1e} (<1e-9), f32 round trip {worst_trip:.1e} (<1e-5)")


def test_criterion_02_mixing_identities(report):
    kinds = [k for k in augment.KINDS if k != "none"]
    worst_one = worst_zero = 0.0
    for i in range(100):
        r = np.random.default_rng(i)
        kind = kinds[i % len(kinds)]
        c, length = 1 + i % 3, int(r.integers(16, 200))
        x = r.standard_normal((c, length)).astype(np.float32)
        donor = r.standard_normal((c, length)).astype(np.float32)
        spec = augment.AugmentSpec(kind)
        x_f = dsp.rfft(x)
        lanes = lambda: RngFabric(i).stream("acceptance", "mix", lanes=1)  # noqa: E731
        aug = augment.apply_batch(spec, x[None], lanes(), donors=donor[None])[0]
        ones = psi.augment_and_preserve(x, x_f, psi.constant_map(x_f.n_bins, 1.0), spec, lanes(), donors=donor)
        zeros = psi.augment_and_preserve(x, x_f, psi.constant_map(x_f.n_bins, 0.0), spec, lanes(), donors=donor)
        worst_one = max(worst_one, float(np.abs(ones - x).max()))
        worst_zero = max(worst_zero, float(np.abs(zeros - aug).max()))
    ok = worst_one < 1e-5 and worst_zero < 1e-5
    assert report(2, "mixing identities", ok, f"P=1 err {worst_one:.1e}, P=0 err {worst_zero:.1e} (<1e-5, 100 pairs)")


def test_criterion_03_gradient_suite(report):
    worst = {}
    for name, (fn, sample) in sorted(PRIMITIVES.items()):
        worst[name] = max(check_gradients(fn, sample(np.random.default_rng(1000 * i + len(name))), seed=i)
                          for i in range(INSTANCES))
    f_bins = 65
    worst["spectral_mix"] = max(check_gradients(_mix_fn(128, i % 2 == 1, i),
                                                [np.random.default_rng(i).random((3, f_bins))], seed=i)
                                for i in range(INSTANCES))
    worst["demodulator"] = max(
        directional_check(build_demodulator(DemodulatorConfig(num_classes=32), RngFabric(i)).train(i % 2 == 0),
                          lambda m, t: m(t), f32(np.random.default_rng(i).standard_normal((3, 1, 128))), seed=i)
        for i in range(INSTANCES))
    gens = []
    for i in range(INSTANCES):
        tokens = spectrum_tokens(dsp.rfft(f32(np.random.default_rng(i).standard_normal((2, 1, 128)))))
        gens.append(directional_check(build_generator(MapGeneratorConfig(), RngFabric(i)), lambda m, t: m(t),
                                      f32(tokens), seed=i))
    worst["generator"] = max(gens)
    name, top = max(worst.items(), key=lambda kv: kv[1])
    ok = top < 1e-3
    assert report(3, "gradient suite", ok,
                  f"{len(worst)} checks x {INSTANCES} instances, worst {name} {top:.1e} (<1e-3)")


def test_criterion_04_contrastive_loss_algebra(report):
    cases = [
        psi.preservation_contrastive_loss(1.0, 1.5, 2.0, 0.1, 0.5) == 0.0,
        psi.preservation_contrastive_loss(2.0, 1.5, 2.0, 0.1, 0.5) == 1.1,
        all(psi.preservation_contrastive_loss(c, c, c, 0.1, 0.5) == 0.1 + 0.5 for c in (0.0, 0.7, 2.3)),
    ]
    assert report(4, "contrastive loss algebra", all(cases), f"cases {cases}")


def test_criterion_05_freeze_invariant(report):
    dataset = generate_dataset(FskScheme.named("fsk8"))
    cfg = TrainConfig(augmentation="freq_mask", psi_mode="spectrum_preservative", epochs=2)
    _, result = train(cfg, dataset, check_freeze=True)
    batches = math.ceil(2304 / cfg.batch_size)
    ok = result.freeze_checks == 2 * cfg.epochs * batches
    assert report(5, "freeze invariant", ok,
                  f"{result.freeze_checks} checksummed steps, no violation (2 epochs x {batches} batches x 2 steps)")


def test_criterion_06_fsk_oracle(report):
    accs = {}
    for name in ("fsk8", "fsk32"):
        scheme = FskScheme.named(name)
        syms = RngFabric(6).stream("acceptance", name, lanes=1000).integers(scheme.order, scheme.num_symbols)
        accs[name] = float((oracle_demodulate(modulate(syms, scheme), scheme) == syms).mean())
    ok = all(v == 1.0 for v in accs.values())
    assert report(6, "fsk oracle", ok, f"noise-free accuracy {accs} over 1000 sequences")


def _group_means(specs):
    groups: dict[tuple[str, str], list[float]] = {}
    for spec in specs:
        metrics = json.loads((cached_run(spec, CACHE, FRESH) / "metrics.json").read_text())
        groups.setdefault((spec.augmentation, spec.psi_mode), []).append(metrics["test_accuracy"])
    return {k: (float(np.mean(v)), v) for k, v in groups.items()}


def test_criterion_07_improvement_trend(report):
    means = _group_means(trend_runs())
    fm = means[("freq_mask", "spectrum_preservative")][0] - means[("freq_mask", "none")][0]
    jit = means[("jitter", "spectrum_preservative")][0] - means[("jitter", "none")][0]
    detail = ", ".join(f"{a}+{m}: {mu:.4f} {np.round(v, 4).tolist()}" for (a, m), (mu, v) in sorted(means.items()))
    ok = fm >= 0.005 and jit >= 0.0
    assert report(7, "improvement trend (fsk32, 3 seeds)", ok,
                  f"freq_mask delta {100 * fm:+.2f} pts (>=+0.5), jitter delta {100 * jit:+.2f} pts (>=0); {detail}")


def test_criterion_08_carrier_preservation_map(report):
    spec = carrier_map_run()
    run_dir = cached_run(spec, CACHE, FRESH)
    ckpt = load_run_checkpoint(run_dir)
    x, y = generate_dataset(spec.fsk_scheme()).split("test")
    mean = preservation_maps(ckpt, x, y).astype(np.float64).mean(axis=0)
    carriers = np.array(CARRIER_BINS[8])
    others = np.setdiff1d(np.arange(mean.size), carriers)
    gap = mean[carriers].mean() - mean[others].mean()
    in_top = len(set(top_bins(mean)) & set(carriers.tolist()))
    rest = mean[others].mean()
    ok = gap >= 0.1 and in_top >= 6 and abs(rest - 0.5) <= 0.15
    assert report(8, "carrier preservation map (fsk8)", ok,
                  f"carrier-minus-other {gap:.3f} (>=0.1), carriers in top10 {in_top}/8 (>=6), "
                  f"non-carrier mean {rest:.3f} (0.5+-0.15), top10 {top_bins(mean)}")


def test_criterion_09_metrics(report):
    hand = auprc([0.9, 0.8, 0.7], [1, 0, 1])
    labels = np.random.default_rng(9).integers(0, 8, size=(10, 32))
    probs = np.eye(8)[labels]
    acc = accuracy(probs.argmax(-1), labels)
    macro, _ = macro_auprc(probs, labels)
    ok = hand == 5 / 6 and acc == 1.0 and macro == 1.0
    assert report(9, "metrics", ok, f"auprc example {hand!r} (5/6 = {5 / 6!r}), perfect acc {acc}, auprc {macro}")


def test_criterion_10_reproducibility(tmp_path, report, capsys):
    data = tmp_path / "data"
    assert cli_main(["fskgen", "--scheme", "fsk8", "--seed", "0", "--out", str(data)]) == 0
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"augmentation": "freq_mask", "psi_mode": "spectrum_preservative", "epochs": 3}))
    for name in ("a", "b"):
        assert cli_main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / name),
                         "--seed", "0"]) == 0
    capsys.readouterr()
    ma, mb = (comparable_metrics(json.loads((tmp_path / n / "metrics.json").read_text())) for n in "ab")
    same_ckpt = (tmp_path / "a" / "checkpoint.simpsi").read_bytes() == (tmp_path / "b" / "checkpoint.simpsi").read_bytes()
    same_logs = (tmp_path / "a" / "train_log.csv").read_bytes() == (tmp_path / "b" / "train_log.csv").read_bytes()
    ok = ma == mb and same_ckpt and same_logs
    assert report(10, "reproducibility", ok,
                  f"metrics equal {ma == mb}, checkpoint bytes equal {same_ckpt}, train logs equal {same_logs}")

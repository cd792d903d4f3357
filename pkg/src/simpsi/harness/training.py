"""Alternating classifier / map-generator training and evaluation."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import augment, dsp, psi
from ..autodiff.functional import softmax_cross_entropy
from ..autodiff.nn import Module, eval_mode, frozen
from ..autodiff.optim import Adam
from ..autodiff.tensor import Tensor, concat, index, reshape
from ..dsp import HalfSpectrum
from ..errors import FreezeViolationError, NonFiniteError, NumericalAbortError, ShapeError
from ..fsk import FskDataset
from ..models import (
    Demodulator,
    DemodulatorConfig,
    MapGenerator,
    MapGeneratorConfig,
    build_demodulator,
    build_generator,
    spectrum_tokens,
)
from ..psi import PreservationMap, PsiMode
from ..rng import RngFabric, RngStream
from .checkpoint import Checkpoint
from .config import TrainConfig
from .metrics import accuracy, macro_auprc

log = logging.getLogger(__name__)

EVAL_BATCH = 288


@dataclass
class EvalResult:
    accuracy: float
    auprc: float
    per_class_auprc: list[float | None]

    def to_dict(self) -> dict[str, Any]:
        return {"accuracy": self.accuracy, "auprc": self.auprc, "per_class_auprc": self.per_class_auprc}


@dataclass
class RunResult:
    train_loss: list[float]
    pc_loss: list[float | None]
    val_accuracy: list[float | None]
    test_accuracy: float
    test_auprc: float
    per_class_auprc: list[float | None]
    seed: int
    wall_time: float = 0.0
    delta_accuracy: float | None = None
    freeze_checks: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "train_loss": self.train_loss,
            "pc_loss": self.pc_loss,
            "val_accuracy": self.val_accuracy,
            "test_accuracy": self.test_accuracy,
            "test_auprc": self.test_auprc,
            "per_class_auprc": self.per_class_auprc,
            "delta_accuracy": self.delta_accuracy,
            "seed": self.seed,
            "freeze_checks": self.freeze_checks,
            "wall_time": self.wall_time,
            **self.extra,
        }


def model_configs(config: TrainConfig, dataset: FskDataset) -> tuple[DemodulatorConfig, MapGeneratorConfig | None]:
    scheme = dataset.scheme
    cls_cfg = DemodulatorConfig(in_channels=dataset.signals.shape[1], input_length=scheme.length,
                                num_symbols=scheme.num_symbols, num_classes=scheme.order, **config.classifier)
    gen_cfg = None
    if config.psi_mode is PsiMode.SPECTRUM_PRESERVATIVE:
        gen_cfg = MapGeneratorConfig(in_channels=dataset.signals.shape[1], seq_len=dsp.n_bins(scheme.length),
                                     **config.generator)
    return cls_cfg, gen_cfg


def psi_map_for(mode: PsiMode | str, x_f: HalfSpectrum, classifier: Module | None = None,
                generator: Module | None = None, labels=None, rng: RngStream | None = None) -> PreservationMap:
    """The preservation map a psi mode prescribes for a (batched) spectrum.

    ``none`` gives the all-zero map, so mixing returns the plain augmented view.
    """
    mode = PsiMode.parse(mode)
    n_bins = x_f.n_bins
    batch = x_f.data.shape[0] if x_f.data.ndim == 3 else None
    if mode is PsiMode.NONE:
        return psi.constant_map(n_bins, 0.0, batch)
    if mode is PsiMode.RANDOM:
        if rng is None:
            raise ValueError("random psi mode needs an rng stream")
        return psi.random_map(rng, n_bins)
    if mode is PsiMode.MAGNITUDE:
        return psi.magnitude_map(x_f)
    if mode is PsiMode.SALIENCY:
        if classifier is None or labels is None:
            raise ValueError("saliency psi mode needs the classifier and labels")
        return psi.saliency_map(classifier, x_f, labels)
    if generator is None:
        raise ValueError("spectrum_preservative psi mode needs a generator")
    return psi.generator_map(generator, x_f)


def predict_proba(classifier: Module, signals: np.ndarray, jobs: int = 1) -> np.ndarray:
    """Per-symbol softmax scores [N, S, M] in eval mode.

    Batches may run on ``jobs`` threads; they are reassembled in input order,
    so the result does not depend on ``jobs``.
    """
    def run(start: int) -> np.ndarray:
        logits = classifier(Tensor(np.asarray(signals[start : start + EVAL_BATCH], dtype=np.float32))).data
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z.astype(np.float64))
        return e / e.sum(axis=-1, keepdims=True)

    starts = list(range(0, len(signals), EVAL_BATCH))
    with eval_mode(classifier), frozen(classifier):
        if jobs > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                out = list(pool.map(run, starts))
        else:
            out = [run(s) for s in starts]
    return np.concatenate(out)


def evaluate(model: Checkpoint | Module, signals: np.ndarray, labels: np.ndarray, jobs: int = 1) -> EvalResult:
    """Accuracy and macro AUPRC on clean inputs; the generator plays no part."""
    classifier = model.build_classifier() if isinstance(model, Checkpoint) else model
    cfg = classifier.config
    signals = np.asarray(signals)
    labels = np.asarray(labels)
    if signals.ndim != 3 or signals.shape[1:] != (cfg.in_channels, cfg.input_length):
        raise ShapeError(f"evaluate: signals {signals.shape} do not fit the classifier "
                         f"[N, {cfg.in_channels}, {cfg.input_length}]")
    if labels.shape != (signals.shape[0], cfg.num_symbols):
        raise ShapeError(f"evaluate: labels {labels.shape} do not match [N, {cfg.num_symbols}]")
    if labels.size and (labels.max() >= cfg.num_classes):
        raise ShapeError(f"evaluate: labels reach {labels.max()}, classifier has {cfg.num_classes} classes")
    probs = predict_proba(classifier, signals, jobs)
    acc = accuracy(probs.argmax(axis=-1), labels)
    macro, per_class = macro_auprc(probs, labels)
    return EvalResult(acc, macro, per_class)


class _Trainer:
    def __init__(self, config: TrainConfig, dataset: FskDataset, check_freeze: bool):
        self.config = config
        self.dataset = dataset
        self.check_freeze = check_freeze
        self.freeze_checks = 0
        self.fabric = RngFabric(config.seed)
        cls_cfg, gen_cfg = model_configs(config, dataset)
        self.classifier: Demodulator = build_demodulator(cls_cfg, self.fabric)
        self.generator: MapGenerator | None = None if gen_cfg is None else build_generator(gen_cfg, self.fabric)
        self.opt_cls = Adam(self.classifier.named_parameters(), lr=config.lr)
        self.opt_gen = None
        if self.generator is not None:
            self.opt_gen = Adam(self.generator.named_parameters(), lr=config.effective_generator_lr)

    # freeze discipline
    def _guarded(self, frozen_model: Module | None, step, *args):
        if not self.check_freeze or frozen_model is None:
            return step(*args)
        before = frozen_model.checksum(include_buffers=True)
        out = step(*args)
        if frozen_model.checksum(include_buffers=True) != before:
            raise FreezeViolationError(f"{type(frozen_model).__name__} changed during a step that froze it")
        self.freeze_checks += 1
        return out

    def classifier_step(self, x: np.ndarray, y: np.ndarray, epoch: int, batch: int,
                        p_map: PreservationMap | None = None) -> float:
        cfg = self.config
        n = len(x)
        x_f = dsp.rfft(x)
        if p_map is None:
            p_map = psi_map_for(cfg.psi_mode, x_f, self.classifier, self.generator, y,
                                self.fabric.stream("random_map", epoch, batch, "classifier", lanes=n))
        aug_rng = self.fabric.stream("augment", epoch, batch, "classifier", lanes=n)
        mixed = psi.augment_and_preserve(x, x_f, p_map, cfg.augmentation, aug_rng)
        frozen_models = [self.generator] if self.generator is not None else []
        self.classifier.train()
        with frozen(*frozen_models):
            loss = softmax_cross_entropy(self.classifier(Tensor(mixed)), y)
            loss.backward()
        self.opt_cls.step()
        return float(loss.data)

    def generator_step(self, x: np.ndarray, y: np.ndarray, epoch: int, batch: int, p_map: Tensor) -> float:
        cfg = self.config
        spec = cfg.augmentation
        n = len(x)
        x_f = dsp.rfft(x)

        def fresh(tag: str) -> HalfSpectrum:
            # each mixed view gets its own augmentation draw
            return dsp.rfft(augment.apply_batch(spec, x, self.fabric.stream("augment", epoch, batch, tag, lanes=n)))

        noise_map = psi.random_map(self.fabric.stream("random_map", epoch, batch, "generator", lanes=n), x_f.n_bins)
        with eval_mode(self.classifier), frozen(self.classifier):
            rnd_view = dsp.irfft(psi.mix(x_f, fresh("random"), noise_map))
            loss_rnd = float(softmax_cross_entropy(self.classifier(Tensor(rnd_view)), y).data)
            pos = psi.mix_signals(p_map, x_f, fresh("positive"))
            neg = psi.mix_signals(p_map, x_f, fresh("negative"), invert_map=True)
            logits = self.classifier(concat([pos, neg], axis=0))
            pair = softmax_cross_entropy(reshape(logits, (2, n) + logits.shape[1:]), np.stack([y, y]), group_axis=0)
            loss_pos, loss_neg = index(pair, 0), index(pair, 1)
            loss_pc = psi.preservation_contrastive_loss(loss_pos, loss_rnd, loss_neg, cfg.beta1, cfg.beta2)
            loss_pc.backward()
        self.opt_gen.step()
        return float(loss_pc.data)

    def run_batch(self, x, y, epoch, batch):
        l_pc = None
        if self.generator is None:
            l_cl = self._guarded(None, self.classifier_step, x, y, epoch, batch)
        else:
            # The classifier step leaves the generator untouched, so one taped
            # generator pass serves both steps: its values drive the classifier
            # step's mixing and its tape the generator update.
            self.generator.train()
            p_tensor = self.generator(spectrum_tokens(dsp.rfft(x)))
            p_map = PreservationMap(p_tensor.data, "generator")
            l_cl = self._guarded(self.generator, self.classifier_step, x, y, epoch, batch, p_map)
            l_pc = self._guarded(self.classifier, self.generator_step, x, y, epoch, batch, p_tensor)
        for name, value in (("L_cl", l_cl), ("L_pc", l_pc)):
            if value is not None and not math.isfinite(value):
                raise NonFiniteError(f"{name} is {value}")
        return l_cl, l_pc


def train(config: TrainConfig, dataset: FskDataset, check_freeze: bool = False) -> tuple[Checkpoint, RunResult]:
    """Train per ``config``; returns the final-epoch checkpoint and run summary."""
    start = time.perf_counter()
    trainer = _Trainer(config, dataset, check_freeze)
    x_train, y_train = dataset.split("train")
    x_val, y_val = dataset.split("val") if "val" in dataset.splits else (None, None)
    y_train = y_train.astype(np.int64)
    n = len(x_train)
    bs = config.batch_size
    losses, pc_losses, val_accs = [], [], []
    for epoch in range(config.epochs):
        order = trainer.fabric.stream("shuffle", epoch).permutation(n)[0]
        sum_cl = sum_pc = 0.0
        count = 0
        for batch, lo in enumerate(range(0, n, bs)):
            idx = order[lo : lo + bs]
            if len(idx) < 2:  # batch statistics need two samples
                continue
            try:
                l_cl, l_pc = trainer.run_batch(x_train[idx], y_train[idx], epoch, batch)
            except NonFiniteError as exc:
                diag = {"epoch": epoch, "batch": batch, "cause": str(exc)}
                raise NumericalAbortError(f"non-finite value at epoch {epoch}, batch {batch}: {exc}", diag) from exc
            sum_cl += l_cl * len(idx)
            sum_pc += (l_pc or 0.0) * len(idx)
            count += len(idx)
        losses.append(sum_cl / count)
        pc_losses.append(sum_pc / count if trainer.generator is not None else None)
        last = epoch == config.epochs - 1
        val = None
        if x_val is not None and ((epoch + 1) % config.eval_cadence == 0 or last):
            val = evaluate(trainer.classifier, x_val, y_val).accuracy
        val_accs.append(val)
        log.info("epoch %d L_cl %.4f L_pc %s val %s", epoch, losses[-1], pc_losses[-1], val)
    trainer.classifier.eval()
    if trainer.generator is not None:
        trainer.generator.eval()
    metadata = {"epoch": config.epochs, "seed": config.seed, "scheme": dataset.scheme.to_dict()}
    ckpt = Checkpoint.from_models(config.to_dict(), trainer.classifier, trainer.generator, metadata)
    if "test" in dataset.splits:
        test = evaluate(trainer.classifier, *dataset.split("test"))
    else:
        test = EvalResult(float("nan"), float("nan"), [])
    result = RunResult(losses, pc_losses, val_accs, test.accuracy, test.auprc, test.per_class_auprc,
                       seed=config.seed, wall_time=time.perf_counter() - start,
                       freeze_checks=trainer.freeze_checks)
    return ckpt, result

"""Training loop, evaluation, and level-attention statistics."""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..model import DcnModel, save_checkpoint
from ..tensor import EvaluationError, Tensor, no_grad
from .data import SyntheticDataset
from .optim import AdamState, adam_step, lr_at

logger = logging.getLogger(__name__)

METRIC_HEADER = "epoch,step,lr,loss,accuracy"


class NumericalError(RuntimeError):
    """Training hit a non-finite loss."""


def worker_count() -> int:
    """Worker-thread cap from DCN_THREADS (default 1)."""
    raw = os.environ.get("DCN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


@dataclass
class EvalResult:
    accuracy: float
    per_class: dict[int, tuple[int, int]]   # answer -> (count, correct)


def evaluate(model: DcnModel, dataset: SyntheticDataset) -> EvalResult:
    """Exact-match accuracy of argmax scores against the oracle answers."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    per_class: dict[int, list[int]] = {}
    correct = 0
    workers = worker_count()

    def predict_one(sample):
        return int(model.forward(sample).scores.data.argmax())

    with no_grad():
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                preds = list(pool.map(predict_one, dataset.samples))
        else:
            preds = [predict_one(s) for s in dataset.samples]
    for sample, pred in zip(dataset.samples, preds):
        truth = int(dataset.oracle[sample.index])
        stats = per_class.setdefault(truth, [0, 0])
        stats[0] += 1
        if pred == truth:
            stats[1] += 1
            correct += 1
    return EvalResult(
        accuracy=correct / len(dataset),
        per_class={k: (v[0], v[1]) for k, v in sorted(per_class.items())},
    )


@dataclass
class TrainResult:
    metrics: list[tuple[int, int, float, float, float]]
    best_accuracy: float
    best_epoch: int
    checkpoint_dir: Path | None
    metrics_path: Path | None


def _sample_step_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0xD409, epoch, index]))


def train_loop(model: DcnModel, train_ds: SyntheticDataset, run_cfg: RunConfig,
               eval_ds: SyntheticDataset | None = None,
               out_dir=None, stop_accuracy: float | None = None) -> TrainResult:
    """Optimize the model, logging one metric row per epoch.

    Per-sample gradients are reduced in ascending sample order inside every
    batch, dropout masks are keyed by (seed, epoch, sample), and the
    learning rate decays continuously in fractional epochs, so two runs
    with the same seed produce identical logs and checkpoints. The best
    checkpoint by held-out accuracy is kept. ``stop_accuracy`` ends the run
    once the measured accuracy reaches the threshold.
    """
    cfg = run_cfg.train
    params = model.named_params()
    tensor_to_name = {t: n for n, t in params.items()}
    state = AdamState()
    metrics: list[tuple[int, int, float, float, float]] = []
    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_path = None
    ckpt_dir = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        metrics_path.write_text(METRIC_HEADER + "\n")

    measure_ds = eval_ds if eval_ds is not None else train_ds
    best_acc = -1.0
    best_epoch = -1
    n = len(train_ds)
    global_step = 0
    workers = worker_count()

    # leaf-gradient accumulation passes through the shared parameter tensors,
    # so concurrent backward walks must not interleave
    backward_lock = threading.Lock()

    def run_sample(epoch: int, idx: int):
        sample = train_ds.samples[idx]
        rng = _sample_step_rng(cfg.seed, epoch, idx)
        sinks: dict[Tensor, np.ndarray] = {}
        try:
            loss = model.loss(sample, train=True, rng=rng,
                              dropout_fc=cfg.dropout_fc,
                              dropout_lstm=cfg.dropout_lstm)
            value = loss.item()
        except EvaluationError:
            return idx, float("nan"), sinks
        if np.isfinite(value):
            with backward_lock:
                loss.backward(sinks)
        return idx, value, sinks

    for epoch in range(cfg.max_epochs):
        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 0x5F1E, epoch]))
        order = shuffle_rng.permutation(n)
        sample_losses = np.zeros(n)
        batches = [np.sort(order[i:i + cfg.batch_size])
                   for i in range(0, n, cfg.batch_size)]
        for batch_i, batch in enumerate(batches):
            lr = lr_at(epoch + batch_i / len(batches), cfg)
            acc_sinks: dict[Tensor, np.ndarray] = {}
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(lambda i: run_sample(epoch, int(i)), batch))
            else:
                results = [run_sample(epoch, int(i)) for i in batch]
            bad = [(idx, value) for idx, value, _ in results if not np.isfinite(value)]
            if bad:
                _dump_diagnostics(out_dir, epoch, batch_i, batch, results)
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} batch {batch_i}: "
                    f"samples {[i for i, _ in bad]}")
            for idx, value, sinks in results:
                sample_losses[idx] = value
                for t, g in sinks.items():
                    if t in acc_sinks:
                        acc_sinks[t] += g
                    else:
                        acc_sinks[t] = g
            scale = 1.0 / len(batch)
            grads = {tensor_to_name[t]: g * scale for t, g in acc_sinks.items()}
            adam_step(params, grads, state, lr, cfg)
            global_step += 1
        epoch_loss = float(np.sum(sample_losses) / n)
        acc = evaluate(model, measure_ds).accuracy
        row = (epoch, global_step, lr_at(epoch, cfg), epoch_loss, acc)
        metrics.append(row)
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(f"{row[0]},{row[1]},{row[2]!r},{row[3]!r},{row[4]!r}\n")
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            if out_dir is not None:
                ckpt_dir = save_checkpoint(
                    model, run_cfg, out_dir / "checkpoint",
                    meta={"epoch": epoch, "accuracy": acc})
        if stop_accuracy is not None and acc >= stop_accuracy:
            break
    if cfg.max_epochs == 0 and out_dir is not None:
        ckpt_dir = save_checkpoint(model, run_cfg, out_dir / "checkpoint",
                                   meta={"epoch": -1, "accuracy": float("nan")})
    return TrainResult(metrics=metrics, best_accuracy=best_acc,
                       best_epoch=best_epoch, checkpoint_dir=ckpt_dir,
                       metrics_path=metrics_path)


def _dump_diagnostics(out_dir, epoch: int, batch_i: int, batch, results) -> None:
    payload = {
        "epoch": epoch,
        "batch": batch_i,
        "sample_indices": [int(i) for i in batch],
        "losses": [None if not np.isfinite(v) else v for _, v, _ in results],
    }
    if out_dir is not None:
        (Path(out_dir) / "nan_diagnostics.json").write_text(
            json.dumps(payload, indent=2) + "\n")
    logger.error("non-finite loss diagnostics: %s", payload)


# ---------------------------------------------------------------------------
# level-attention statistics
# ---------------------------------------------------------------------------

@dataclass
class GroupStats:
    group: str
    count: int
    means: np.ndarray
    stds: np.ndarray


def layer_attention_stats(model: DcnModel, dataset: SyntheticDataset,
                          groups: dict[str, list[int]] | None = None) -> list[GroupStats]:
    """Mean and population std of the four level weights per question group.

    Default grouping is by queried object. Empty groups are skipped with a
    warning.
    """
    if groups is None:
        groups = {}
        for i in range(len(dataset)):
            groups.setdefault(dataset.question_type(i), []).append(i)
    rows = []
    for label in sorted(groups):
        indices = groups[label]
        if not indices:
            logger.warning("group %r is empty, skipping", label)
            continue
        alphas = np.stack([
            model.forward(dataset.samples[i]).layer_alpha.data for i in indices])
        rows.append(GroupStats(group=label, count=len(indices),
                               means=alphas.mean(axis=0), stds=alphas.std(axis=0)))
    return rows


def stats_to_csv(rows: list[GroupStats], path) -> None:
    """CSV with the 8 statistic columns (4 means then 4 stds) per group."""
    with open(path, "w") as fh:
        fh.write("group,count,"
                 "alpha1_mean,alpha2_mean,alpha3_mean,alpha4_mean,"
                 "alpha1_std,alpha2_std,alpha3_std,alpha4_std\n")
        for r in rows:
            stats = ",".join(repr(float(x)) for x in np.concatenate([r.means, r.stds]))
            fh.write(f"{r.group},{r.count},{stats}\n")

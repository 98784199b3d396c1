"""The training loop: batching, optimization, checkpoints, and reporting.

Runs are deterministic for a fixed config: shuffling derives its stream
from (seed, epoch), so resuming from an epoch checkpoint replays exactly
the batches an uninterrupted run would have seen.  A NaN loss aborts the
run immediately, naming the first non-finite tensor in the graph.

The per-epoch report CSV holds only deterministic columns; wall-clock
timings go to the log so two identical runs produce byte-identical reports.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from pathlib import Path

import numpy as np

from . import nn
from .config import Config
from .data import Dataset, Sample
from .errors import DataError, NumericalError
from .metrics import AucAccumulator
from .model import CtrModelBase

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("epoch", "loss_ctr", "loss_implicit", "loss_explicit",
                  "loss_total", "val_auc")


@dataclasses.dataclass
class EpochStats:
    epoch: int
    loss_ctr: float
    loss_implicit: float
    loss_explicit: float
    loss_total: float
    val_auc: float
    seconds: float  # logged, but excluded from the CSV for reproducibility


@dataclasses.dataclass
class TrainReport:
    epochs: list[EpochStats]
    best_auc: float
    stopped_early: bool

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for s in self.epochs:
            lines.append(",".join([
                str(s.epoch),
                f"{s.loss_ctr:.6f}", f"{s.loss_implicit:.6f}",
                f"{s.loss_explicit:.6f}", f"{s.loss_total:.6f}",
                f"{s.val_auc:.6f}",
            ]))
        return "\n".join(lines) + "\n"


def predict_dataset(model: CtrModelBase, ds: Dataset,
                    batch_size: int = 1024) -> np.ndarray:
    """Scores for every sample, in dataset order."""
    out = np.empty(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = np.arange(start, min(start + batch_size, len(ds)))
        out[idx] = model.predict(ds.batch(idx))
    return out


def evaluate_auc(model: CtrModelBase, ds: Dataset, batch_size: int = 1024) -> float:
    acc = AucAccumulator()
    for start in range(0, len(ds), batch_size):
        idx = np.arange(start, min(start + batch_size, len(ds)))
        batch = ds.batch(idx)
        acc.add(model.predict(batch), batch["label"])
    return acc.value()


def train(model: CtrModelBase, train_ds: Dataset, eval_ds: Dataset, cfg: Config,
          out_dir: str | Path | None = None,
          resume_from: str | Path | None = None) -> TrainReport:
    """Train for the configured epoch budget; returns the epoch-level report.

    With ``out_dir`` set, writes ``checkpoint.bin`` after every epoch and
    ``train_report.csv`` at the end.  ``resume_from`` restores parameters,
    optimizer state, and the epoch counter, then continues the schedule.
    """
    if len(train_ds) == 0:
        raise DataError("training dataset is empty")
    start_epoch = 0
    if resume_from is not None:
        state = nn.load_checkpoint(resume_from)
        model.store.load_state(state)
        start_epoch = int(state.get("epoch", np.zeros((1, 1)))[0, 0])
        log.info("resumed from %s at epoch %d", resume_from, start_epoch)

    stats: list[EpochStats] = []
    best_auc = -1.0
    stale = 0
    stopped_early = False
    for epoch in range(start_epoch, cfg.epochs):
        tick = time.perf_counter()
        order = np.arange(len(train_ds))
        if cfg.shuffle:
            order = np.random.default_rng((cfg.seed, epoch)).permutation(order)
        sums = {"loss_ctr": 0.0, "loss_implicit": 0.0, "loss_explicit": 0.0,
                "loss_total": 0.0}
        seen = 0
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            batch = train_ds.batch(batch_idx)
            model.store.zero_grad()
            loss, parts = model.loss(batch)
            if not np.isfinite(loss.data).all():
                culprit = nn.first_nonfinite(loss) or "loss"
                raise NumericalError(
                    f"non-finite loss at epoch {epoch} sample offset {start}; "
                    f"first bad tensor: {culprit}"
                )
            loss.backward()
            model.store.adam_step(cfg.learning_rate)
            n = len(batch_idx)
            seen += n
            for key in sums:
                sums[key] += parts[key] * n
        val_auc = evaluate_auc(model, eval_ds) if len(eval_ds) else float("nan")
        seconds = time.perf_counter() - tick
        stat = EpochStats(epoch=epoch, val_auc=val_auc, seconds=seconds,
                          **{k: v / seen for k, v in sums.items()})
        stats.append(stat)
        log.info(
            "epoch %d: total %.4f (ctr %.4f, implicit %.4f, explicit %.4f), "
            "val auc %.4f, %.1fs",
            epoch, stat.loss_total, stat.loss_ctr, stat.loss_implicit,
            stat.loss_explicit, val_auc, seconds,
        )
        if out_dir is not None:
            arrays = model.store.state_arrays()
            arrays["epoch"] = np.array([[float(epoch + 1)]])
            nn.save_checkpoint(Path(out_dir) / "checkpoint.bin", arrays)
        if val_auc > best_auc:
            best_auc = val_auc
            stale = 0
        else:
            stale += 1
            if cfg.early_stop and stale >= 3:
                stopped_early = True
                log.info("early stop: no AUC gain for 3 epochs")
                break
    report = TrainReport(epochs=stats, best_auc=best_auc, stopped_early=stopped_early)
    if out_dir is not None:
        (Path(out_dir) / "train_report.csv").write_text(report.to_csv())
    return report


def negative_sample(ds: Dataset, item_category: np.ndarray,
                    rng: np.random.Generator) -> Dataset:
    """Build a 1:1 training set from a positives-bearing impression stream.

    Keeps every positive and pairs it with one negative drawn uniformly from
    the items the user never clicked; the negative inherits the user's
    history and carries no exposure record.  Existing negative rows in the
    input are ignored, since the output ratio is fixed by construction.
    """
    n_items = len(item_category) - 1
    out = Dataset(ds.seq_len)
    out.seq_items = ds.seq_items
    out.seq_categories = ds.seq_categories
    out.seq_lengths = ds.seq_lengths
    by_user: dict[int, list[Sample]] = {}
    for sample in ds.samples:
        by_user.setdefault(sample.user, []).append(sample)
    for user in sorted(by_user):
        positives = [s for s in by_user[user] if s.label == 1]
        if not positives:
            raise DataError(f"user {user} has no positive impressions")
        clicked = {s.target_item for s in positives}
        if len(clicked) >= n_items:
            raise DataError(f"user {user} clicked the entire catalog")
        for sample in positives:
            out.samples.append(sample)
            while True:
                candidate = int(rng.integers(1, n_items + 1))
                if candidate not in clicked:
                    break
            out.samples.append(Sample(
                user=user, target_item=candidate,
                target_category=int(item_category[candidate]), label=0,
                exposed_item=-1, seq_index=sample.seq_index,
            ))
    out.finalize()
    return out

"""Sequential training of the three corridor networks.

Each batch runs four steps in order: impute the masked counts and step
that net alone, splice the imputations into the dynamic graphs as
plain constants, then regress the distribution mean and finally the
deviation, each behind its own optimizer.  The three optimizers own
disjoint parameter sets, so no step can move another network.

Targets are z-scored with train-split statistics by default; the
fitted scale is installed on the regression nets, so checkpoints
always de-standardize themselves.  Set ``standardize=False`` to train
on raw seconds.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .graphs import MASKED_COLS, refresh_dynamic
from .model import FdgnnModel, OutputScale, checkpoint_from_text, checkpoint_to_text
from .optim import Adam
from .tensor import backward, concat, constant, mse_loss, no_grad, slice_cols

log = logging.getLogger(__name__)

MIN_RECORDS = 10


@dataclass
class TrainConfig:
    lr_inf: float = 1e-3
    lr_mean: float = 1e-3
    lr_stdv: float = 1e-3
    epochs: int = 50
    batch_size: int = 0  # 0 trains on the full split each step
    seed: int = 0
    fractions: tuple = (0.70, 0.15, 0.15)
    patience: int | None = None  # consecutive non-improving epochs allowed
    standardize: bool = True

    def __post_init__(self):
        if min(self.lr_inf, self.lr_mean, self.lr_stdv) <= 0.0:
            raise ConfigError("learning rates must be positive")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 0:
            raise ConfigError(f"batch size must be >= 0, got {self.batch_size}")
        if len(self.fractions) != 3 or min(self.fractions) <= 0.0:
            raise ConfigError(f"need three positive split fractions, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions sum to {sum(self.fractions)}, not 1")
        if self.patience is not None and self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")

    def fingerprint(self):
        """Fields that must match between a run and its resume."""
        return {
            "lr_inf": self.lr_inf,
            "lr_mean": self.lr_mean,
            "lr_stdv": self.lr_stdv,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "fractions": list(self.fractions),
            "standardize": self.standardize,
        }


@dataclass
class EpochStats:
    epoch: int
    train_inf: float
    train_mean: float
    train_stdv: float
    val_inf: float
    val_mean: float
    val_stdv: float

    def row(self):
        return [
            self.epoch, self.train_inf, self.train_mean, self.train_stdv,
            self.val_inf, self.val_mean, self.val_stdv,
        ]


@dataclass
class TrainReport:
    epochs: list
    wall_clock: float
    best_epoch: int

    def to_text(self):
        """Tab-separated table; wall-clock is logged, not serialized."""
        lines = ["epoch\ttrain_inf\ttrain_mean\ttrain_stdv\tval_inf\tval_mean\tval_stdv"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch}\t{e.train_inf!r}\t{e.train_mean!r}\t{e.train_stdv!r}"
                f"\t{e.val_inf!r}\t{e.val_mean!r}\t{e.val_stdv!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model: FdgnnModel
    report: TrainReport
    best_checkpoint: str | None  # None when resuming never beat the prior best
    last_checkpoint: str  # resumable: carries optimizer and shuffle state


def split_dataset(records, fractions=(0.70, 0.15, 0.15), seed=0):
    """Seeded shuffle partitioned into (train, val, test) lists."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"bad split fractions {fractions}")
    n = len(records)
    if n < MIN_RECORDS:
        raise DataError(f"need at least {MIN_RECORDS} records to split, got {n}")
    n_train = int(fractions[0] * n + 1e-9)
    n_val = int(fractions[1] * n + 1e-9)
    order = np.random.default_rng(seed).permutation(n)
    train = [records[i] for i in order[:n_train]]
    val = [records[i] for i in order[n_train : n_train + n_val]]
    test = [records[i] for i in order[n_train + n_val :]]
    if not train or not val or not test:
        raise DataError(f"fractions {fractions} leave an empty split at n={n}")
    return train, val, test


def _fit_scale(values_e, values_w):
    def stats(values):
        arr = np.asarray(values, dtype=float)
        std = float(arr.std())
        return float(arr.mean()), std if std > 1e-9 else 1.0

    mean_e, std_e = stats(values_e)
    mean_w, std_w = stats(values_w)
    return OutputScale(mean_e=mean_e, std_e=std_e, mean_w=mean_w, std_w=std_w)


def fit_output_scales(model, train_set, standardize=True):
    """Install train-split target statistics on the regression nets."""
    if not standardize:
        model.m_mu.scale = OutputScale()
        model.m_sigma.scale = OutputScale()
        return
    targets = [rec.target for rec in train_set]
    model.m_mu.scale = _fit_scale(
        [t.mu_e for t in targets], [t.mu_w for t in targets]
    )
    model.m_sigma.scale = _fit_scale(
        [t.sigma_e for t in targets], [t.sigma_w for t in targets]
    )


def _imputation_loss(model, records):
    preds = [model.m_x(rec.static) for rec in records]
    truth = np.concatenate([rec.static.x[:, list(MASKED_COLS)] for rec in records])
    return mse_loss(concat(preds), constant(truth))


def _refresh_batch(model, records):
    """Step 2: dynamic graphs with imputed counts spliced in as constants."""
    refreshed = []
    with no_grad():
        for rec in records:
            merged, _ = model.impute_counts(rec.static)
            refreshed.append(refresh_dynamic(rec.dynamic, merged))
    return refreshed


def _regression_loss(net, graphs, targets_e, targets_w, standardize):
    """MSE(east) + MSE(west), optionally in the net's standardized space."""
    rows = concat([net(g) for g in graphs])
    pred_e = slice_cols(rows, 0, 1)
    pred_w = slice_cols(rows, 1, 2)
    te = np.asarray(targets_e, dtype=float).reshape(-1, 1)
    tw = np.asarray(targets_w, dtype=float).reshape(-1, 1)
    if standardize:
        s = net.scale
        pred_e = (pred_e - s.mean_e) * (1.0 / s.std_e)
        pred_w = (pred_w - s.mean_w) * (1.0 / s.std_w)
        te = (te - s.mean_e) / s.std_e
        tw = (tw - s.mean_w) / s.std_w
    return mse_loss(pred_e, constant(te)) + mse_loss(pred_w, constant(tw))


def train_epoch(model, optimizers, batch, config):
    """Steps 1-4 on one batch; returns (loss_inf, loss_mean, loss_stdv).

    Losses are the values used for the backward passes, so loss_mean
    and loss_stdv already see the epoch's updated imputations.
    """
    if not batch:
        raise DataError("empty training batch")
    opt_inf, opt_mean, opt_stdv = optimizers
    mu_e = [rec.target.mu_e for rec in batch]
    mu_w = [rec.target.mu_w for rec in batch]
    sg_e = [rec.target.sigma_e for rec in batch]
    sg_w = [rec.target.sigma_w for rec in batch]
    try:
        loss_inf = _imputation_loss(model, batch)
        opt_inf.zero_grad()
        backward(loss_inf)
        opt_inf.step()

        refreshed = _refresh_batch(model, batch)

        loss_mean = _regression_loss(
            model.m_mu, refreshed, mu_e, mu_w, config.standardize
        )
        opt_mean.zero_grad()
        backward(loss_mean)
        opt_mean.step()

        loss_stdv = _regression_loss(
            model.m_sigma, refreshed, sg_e, sg_w, config.standardize
        )
        opt_stdv.zero_grad()
        backward(loss_stdv)
        opt_stdv.step()
    except NumericError as err:
        ids = ", ".join(rec.scenario_id or "?" for rec in batch[:5])
        raise NumericError(f"batch aborted (records {ids}): {err}") from None
    return float(loss_inf.values), float(loss_mean.values), float(loss_stdv.values)


def evaluate_losses(model, records, config):
    """The three losses on a frozen model, e.g. for a validation split."""
    with no_grad():
        loss_inf = float(_imputation_loss(model, records).values)
        refreshed = _refresh_batch(model, records)
        loss_mean = float(
            _regression_loss(
                model.m_mu,
                refreshed,
                [r.target.mu_e for r in records],
                [r.target.mu_w for r in records],
                config.standardize,
            ).values
        )
        loss_stdv = float(
            _regression_loss(
                model.m_sigma,
                refreshed,
                [r.target.sigma_e for r in records],
                [r.target.sigma_w for r in records],
                config.standardize,
            ).values
        )
    return loss_inf, loss_mean, loss_stdv


def _batches(order, batch_size):
    if batch_size == 0:
        return [order]
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def train(records, config, *, resume_text=None):
    """Train on a dataset; returns model, report, and checkpoints.

    The last checkpoint embeds optimizer moments, the shuffle stream,
    and the epoch history, so passing it back as ``resume_text``
    continues the exact trajectory of an uninterrupted run.  The best
    checkpoint tracks the lowest summed validation loss.
    """
    t0 = time.monotonic()
    train_set, val_set, _ = split_dataset(records, config.fractions, config.seed)
    rng = np.random.default_rng(config.seed)
    history = []
    best_epoch = 0
    best_total = float("inf")
    best_text = None
    start_epoch = 1

    if resume_text is None:
        model = FdgnnModel(seed=config.seed)
        fit_output_scales(model, train_set, config.standardize)
        optimizers = _make_optimizers(model, config)
    else:
        model, extra = checkpoint_from_text(resume_text)
        state = (extra or {}).get("trainer")
        if state is None:
            raise DataError("checkpoint is not resumable: no trainer state")
        if state["config"] != config.fingerprint():
            raise ConfigError(
                f"resume config mismatch: {state['config']} vs {config.fingerprint()}"
            )
        optimizers = _make_optimizers(model, config)
        for opt, key in zip(optimizers, ("optim_inf", "optim_mean", "optim_stdv")):
            opt.load_state_dict(state[key])
        rng.bit_generator.state = state["rng"]
        history = [EpochStats(*row) for row in state["history"]]
        best_epoch = state["best_epoch"]
        best_total = state["best_total"]
        start_epoch = state["epoch"] + 1
        log.info("resuming at epoch %d", start_epoch)

    log.info(
        "training on %d records: %d train / %d val", len(records), len(train_set), len(val_set)
    )

    for epoch in range(start_epoch, config.epochs + 1):
        order = rng.permutation(len(train_set))
        sums = np.zeros(3)
        for batch_idx in _batches(order, config.batch_size):
            batch = [train_set[i] for i in batch_idx]
            try:
                losses = train_epoch(model, optimizers, batch, config)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}: {err}") from None
            sums += np.array(losses) * len(batch)
        train_losses = sums / len(train_set)
        val_losses = evaluate_losses(model, val_set, config)
        history.append(EpochStats(epoch, *train_losses.tolist(), *val_losses))
        log.info(
            "epoch %d: train %.5g/%.5g/%.5g val %.5g/%.5g/%.5g",
            epoch, *train_losses.tolist(), *val_losses,
        )
        total = sum(val_losses)
        if total < best_total:
            best_total = total
            best_epoch = epoch
            best_text = checkpoint_to_text(model, extra={"epoch": epoch})
        elif config.patience is not None and epoch - best_epoch > config.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break

    final_epoch = history[-1].epoch if history else 0
    trainer_state = {
        "config": config.fingerprint(),
        "epoch": final_epoch,
        "optim_inf": optimizers[0].state_dict(),
        "optim_mean": optimizers[1].state_dict(),
        "optim_stdv": optimizers[2].state_dict(),
        "rng": rng.bit_generator.state,
        "history": [e.row() for e in history],
        "best_epoch": best_epoch,
        "best_total": best_total,
    }
    last_text = checkpoint_to_text(model, extra={"trainer": trainer_state})
    report = TrainReport(
        epochs=history, wall_clock=time.monotonic() - t0, best_epoch=best_epoch
    )
    log.info(
        "finished %d epochs in %.1fs, best validation at epoch %d",
        len(history), report.wall_clock, best_epoch,
    )
    return TrainResult(
        model=model, report=report, best_checkpoint=best_text, last_checkpoint=last_text
    )


def _make_optimizers(model, config):
    return (
        Adam(model.m_x.params(), lr=config.lr_inf),
        Adam(model.m_mu.params(), lr=config.lr_mean),
        Adam(model.m_sigma.params(), lr=config.lr_stdv),
    )


def write_report(report, path):
    with open(path, "w") as fh:
        fh.write(report.to_text())

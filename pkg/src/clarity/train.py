"""Training: focal loss, layer-wise learning-rate decay, and the fit loop.

Loss handling is built around class imbalance. Per-class weights come from
inverse frequency, the focal term down-weights easy examples, and each record
additionally carries a source-confidence sample weight. Gradient accumulation
is arranged so that micro-batched updates match full-batch updates exactly:
micro-batches accumulate the weighted loss *sum* and gradients are rescaled by
the total weight before the optimizer step.
"""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import torch

from .data import Dataset, class_distribution
from .model import ClarityClassifier, ModelConfig
from .taxonomy import ClarityLabel, clarity_name

logger = logging.getLogger(__name__)


class ValidationIntegrityError(Exception):
    """The validation split cannot measure anything (for example, one label)."""


@dataclass(frozen=True)
class FocalLossConfig:
    gamma: float = 2.0
    class_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")


def inverse_frequency_weights(counts: dict[int, int] | list[int]) -> list[float]:
    """alpha_c = N / (K * n_c) over the classes present in ``counts``.

    The rare class gets the large weight; weights of two classes stand in the
    inverse ratio of their counts.
    """
    if isinstance(counts, dict):
        ordered = [counts[key] for key in sorted(counts)]
    else:
        ordered = list(counts)
    if not ordered:
        raise ValueError("no class counts given")
    if any(n <= 0 for n in ordered):
        raise ValueError("every class must have at least one example")
    total = sum(ordered)
    k = len(ordered)
    return [total / (k * n) for n in ordered]


def focal_loss_per_sample(
    logits: torch.Tensor, targets: torch.Tensor, config: FocalLossConfig
) -> torch.Tensor:
    """-alpha_t * (1 - p_t)^gamma * log(p_t) for each row."""
    log_probs = torch.log_softmax(logits, dim=1)
    log_pt = log_probs.gather(1, targets.unsqueeze(1)).squeeze(1)
    pt = log_pt.exp()
    loss = -((1.0 - pt) ** config.gamma) * log_pt
    if config.class_weights is not None:
        alphas = torch.tensor(
            config.class_weights, dtype=logits.dtype, device=logits.device
        )
        loss = alphas[targets] * loss
    return loss


def focal_loss(
    logits: torch.Tensor,
    targets: torch.Tensor,
    config: FocalLossConfig,
    sample_weights: torch.Tensor | None = None,
) -> torch.Tensor:
    """Weighted mean of per-sample focal losses.

    With sample weights w_i the reduction is sum(w_i * l_i) / sum(w_i); with
    none it is the plain mean. gamma = 0 and uniform weights reduce to
    cross entropy.
    """
    per_sample = focal_loss_per_sample(logits, targets, config)
    if sample_weights is None:
        loss = per_sample.mean()
    else:
        weight_sum = sample_weights.sum()
        if float(weight_sum) <= 0:
            raise ValueError("sample weights must sum to a positive value")
        loss = (sample_weights * per_sample).sum() / weight_sum
    if not bool(torch.isfinite(loss)):
        raise FloatingPointError("focal loss is not finite")
    return loss


# ---------------------------------------------------------------------------
# learning-rate structure
# ---------------------------------------------------------------------------


def llrd_param_groups(
    model: ClarityClassifier, base_lr: float, decay: float
) -> list[dict]:
    """Optimizer param groups with lr = base_lr * decay**depth.

    The classification head and the top encoder block share depth 0; each
    deeper block adds one; embeddings sit at depth == layer_count. Every
    trainable parameter lands in exactly one group.
    """
    if base_lr <= 0:
        raise ValueError("base_lr must be positive")
    if not 0.0 < decay <= 1.0:
        raise ValueError("decay must be in (0, 1]")
    head_params = (
        list(model.feature_projection.parameters())
        + list(model.classifier.parameters())
    )
    groups: list[dict] = []
    seen: set[int] = set()
    for depth, params in model.encoder.depth_parameter_groups():
        bucket = list(params)
        if depth == 0:
            bucket = head_params + bucket
        groups.append({"params": bucket, "lr": base_lr * decay**depth, "depth": depth})
        seen.update(id(p) for p in bucket)
    missing = [name for name, p in model.named_parameters() if id(p) not in seen and p.requires_grad]
    if missing:
        raise RuntimeError(f"parameters not covered by any depth group: {missing}")
    return groups


def lr_multiplier(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear warmup to 1, then cosine decay to 0 at total_steps."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= warmup_steps <= total_steps:
        raise ValueError("warmup_steps must be within [0, total_steps]")
    if step >= total_steps:
        return 0.0
    if warmup_steps > 0 and step < warmup_steps:
        return step / warmup_steps
    if total_steps == warmup_steps:
        return 1.0
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def linear_lr_multiplier(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear warmup to 1, then linear decay to 0 at total_steps."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= warmup_steps <= total_steps:
        raise ValueError("warmup_steps must be within [0, total_steps]")
    if step >= total_steps:
        return 0.0
    if warmup_steps > 0 and step < warmup_steps:
        return step / warmup_steps
    if total_steps == warmup_steps:
        return 1.0
    return (total_steps - step) / (total_steps - warmup_steps)


# ---------------------------------------------------------------------------
# configuration and early stopping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    base_lr: float = 3e-5
    llrd_decay: float = 0.9
    micro_batch_size: int = 8
    accumulation_steps: int = 4
    warmup_fraction: float = 0.15
    epochs: int = 6
    patience: int = 3
    focal_gamma: float = 2.0
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    schedule: str = "cosine"
    seed: int = 0
    use_class_weights: bool = True
    use_sample_weights: bool = True

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 < self.llrd_decay <= 1.0:
            raise ValueError("llrd_decay must be in (0, 1]")
        if self.micro_batch_size < 1 or self.accumulation_steps < 1:
            raise ValueError("batch sizes must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be positive")
        if self.schedule not in ("cosine", "linear"):
            raise ValueError("schedule must be 'cosine' or 'linear'")

    @property
    def effective_batch_size(self) -> int:
        return self.micro_batch_size * self.accumulation_steps


class EarlyStopping:
    """Stop after ``patience`` epochs without a strict metric improvement."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be positive")
        self.patience = patience
        self.best: float | None = None
        self.best_epoch: int | None = None
        self.stale = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record an epoch metric; True means a new best."""
        if self.best is None or value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_macro_f1: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_macro_f1: float = 0.0
    stopped_early: bool = False
    optimizer_steps: int = 0
    wall_seconds: float = 0.0


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _micro_batches(indices: list[int], micro: int) -> list[list[int]]:
    return [indices[i : i + micro] for i in range(0, len(indices), micro)]


def training_step(
    model: ClarityClassifier,
    optimizer: torch.optim.Optimizer,
    micro_batches: list,
    loss_config: FocalLossConfig,
    clip_norm: float,
    use_sample_weights: bool = True,
) -> float:
    """One optimizer step over pre-built micro-batches.

    Accumulates the weighted loss sum across micro-batches, rescales the
    gradients by the total sample weight, clips, and steps. The returned value
    is the weighted-mean loss of the whole effective batch, identical to what
    one large batch would produce.
    """
    model.train()
    optimizer.zero_grad(set_to_none=True)
    total_weight = 0.0
    total_loss = 0.0
    for batch in micro_batches:
        logits = model(batch.input_ids, batch.attention_mask, batch.features)
        per_sample = focal_loss_per_sample(logits, batch.labels, loss_config)
        weights = (
            batch.sample_weights
            if use_sample_weights
            else torch.ones_like(batch.sample_weights)
        )
        weighted_sum = (weights * per_sample).sum()
        weighted_sum.backward()
        total_weight += float(weights.sum())
        total_loss += float(weighted_sum.detach())
    if total_weight <= 0:
        raise ValueError("effective batch has zero total weight")
    scale = 1.0 / total_weight
    for group in optimizer.param_groups:
        for param in group["params"]:
            if param.grad is not None:
                param.grad.mul_(scale)
    if clip_norm > 0:
        params = [p for g in optimizer.param_groups for p in g["params"]]
        torch.nn.utils.clip_grad_norm_(params, clip_norm)
    optimizer.step()
    mean_loss = total_loss / total_weight
    if not math.isfinite(mean_loss):
        raise FloatingPointError("training loss is not finite")
    return mean_loss


def _check_validation_split(dev: Dataset) -> None:
    labels = {p.clarity for p in dev}
    if len(dev) == 0:
        raise ValidationIntegrityError("validation split is empty")
    if len(labels) < 2:
        only = next(iter(labels))
        raise ValidationIntegrityError(
            "validation labels are constant "
            f"(every record is {only}); the split cannot rank checkpoints"
        )


def train_loop(
    model: ClarityClassifier,
    train: Dataset,
    dev: Dataset,
    config: TrainingConfig,
) -> TrainHistory:
    """Fit with AdamW, LLRD groups, warmup + decay schedule, and early stopping.

    The best checkpoint by dev macro F1 is restored into ``model`` before
    returning. Aborts up front when the validation split carries a single
    label, which would silently reward degenerate models.
    """
    from .evaluation import confusion_matrix, macro_f1

    _check_validation_split(dev)
    started = time.monotonic()

    distribution = class_distribution(train)
    counts = {int(label): count for label, (count, _) in distribution.items()}
    class_weights = (
        tuple(inverse_frequency_weights(counts)) if config.use_class_weights else None
    )
    if class_weights is not None and len(counts) != model.config.num_classes:
        # classes absent from train get no weight entry; pad with 1.0 so
        # indexing by label code stays valid
        padded = [1.0] * model.config.num_classes
        for offset, code in enumerate(sorted(counts)):
            padded[code] = class_weights[offset]
        class_weights = tuple(padded)
    loss_config = FocalLossConfig(gamma=config.focal_gamma, class_weights=class_weights)

    groups = llrd_param_groups(model, config.base_lr, config.llrd_decay)
    optimizer = torch.optim.AdamW(groups, weight_decay=config.weight_decay)

    effective = config.effective_batch_size
    steps_per_epoch = math.ceil(len(train) / effective)
    total_steps = steps_per_epoch * config.epochs
    warmup_steps = math.ceil(config.warmup_fraction * total_steps)
    multiplier = lr_multiplier if config.schedule == "cosine" else linear_lr_multiplier
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: multiplier(step, total_steps, warmup_steps)
    )

    order_rng = random.Random(config.seed)
    stopper = EarlyStopping(config.patience)
    history = TrainHistory()
    best_state: dict | None = None

    records = list(train)
    for epoch in range(config.epochs):
        indices = list(range(len(records)))
        order_rng.shuffle(indices)
        epoch_losses: list[float] = []
        for step_indices in _micro_batches(indices, effective):
            micro = [
                model.make_batch([records[i] for i in chunk])
                for chunk in _micro_batches(step_indices, config.micro_batch_size)
            ]
            loss = training_step(
                model, optimizer, micro, loss_config, config.clip_norm,
                use_sample_weights=config.use_sample_weights,
            )
            epoch_losses.append(loss)
            history.learning_rates.append(float(optimizer.param_groups[0]["lr"]))
            scheduler.step()
            history.optimizer_steps += 1
        history.train_loss.append(sum(epoch_losses) / max(1, len(epoch_losses)))

        gold = [int(p.clarity) for p in dev]
        predicted = [int(c) for c in model.predict(list(dev))]
        matrix = confusion_matrix(gold, predicted, num_classes=model.config.num_classes)
        dev_f1 = macro_f1(matrix)
        history.dev_macro_f1.append(dev_f1)
        improved = stopper.update(dev_f1, epoch)
        if improved:
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        logger.info(
            "epoch %d: train loss %.4f, dev macro F1 %.4f%s",
            epoch, history.train_loss[-1], dev_f1, " (best)" if improved else "",
        )
        if stopper.should_stop:
            history.stopped_early = True
            logger.info("early stop after %d stale epochs", stopper.stale)
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    history.best_epoch = stopper.best_epoch if stopper.best_epoch is not None else -1
    history.best_dev_macro_f1 = stopper.best if stopper.best is not None else 0.0
    history.wall_seconds = time.monotonic() - started
    return history


# ---------------------------------------------------------------------------
# model selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridCell:
    base_lr: float
    llrd_decay: float
    dev_macro_f1: float
    best_epoch: int = -1
    error: str | None = None


def stratified_kfold(
    dataset: Dataset, folds: int, seed: int
) -> list[tuple[list[int], list[int]]]:
    """Round-robin per-class fold assignment after a seeded shuffle.

    Returns (train_indices, dev_indices) per fold; every index lands in
    exactly one dev fold and per-class counts across folds differ by at most
    one.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    by_class: dict[int, list[int]] = {}
    for i, pair in enumerate(dataset):
        if pair.clarity is None:
            raise ValueError(f"record {i} has no clarity label")
        by_class.setdefault(int(pair.clarity), []).append(i)
    for code in sorted(by_class):
        if len(by_class[code]) < folds:
            raise ValueError(
                f"class {clarity_name(ClarityLabel(code))} has "
                f"{len(by_class[code])} records, fewer than {folds} folds"
            )
    rng = random.Random(seed)
    assignment: dict[int, int] = {}
    for code in sorted(by_class):
        members = by_class[code]
        rng.shuffle(members)
        for position, index in enumerate(members):
            assignment[index] = position % folds
    out: list[tuple[list[int], list[int]]] = []
    for fold in range(folds):
        dev_idx = sorted(i for i, f in assignment.items() if f == fold)
        train_idx = sorted(i for i, f in assignment.items() if f != fold)
        out.append((train_idx, dev_idx))
    return out


def grid_search(
    train: Dataset,
    dev: Dataset,
    model_config: ModelConfig,
    base_config: TrainingConfig,
    learning_rates: Sequence[float],
    decays: Sequence[float],
) -> list[GridCell]:
    """Sweep (base_lr, llrd_decay), one fresh model per cell, shared seed.

    Returns every cell ranked by dev macro F1 descending (failed cells last,
    carrying their error string); the caller reads the table, nothing is
    auto-selected. Ties keep row-major (lr outer, decay inner) order.
    """
    if not learning_rates or not decays:
        raise ValueError("grid axes must be non-empty")
    cells: list[GridCell] = []
    for lr in learning_rates:
        for decay in decays:
            cell_config = replace(base_config, base_lr=lr, llrd_decay=decay)
            try:
                model = ClarityClassifier(model_config)
                history = train_loop(model, train, dev, cell_config)
                cells.append(
                    GridCell(lr, decay, history.best_dev_macro_f1, history.best_epoch)
                )
            except (ValidationIntegrityError, FloatingPointError, ValueError) as exc:
                logger.warning("grid cell lr=%g decay=%g failed: %s", lr, decay, exc)
                cells.append(
                    GridCell(lr, decay, float("-inf"), error=f"{type(exc).__name__}: {exc}")
                )
    cells.sort(key=lambda c: -c.dev_macro_f1)
    return cells

"""Hybrid training: policy gradient for the rank path, cross-entropy for
the classifier, squared error for the baseline head.

The surrogate ascended for the rank policy is
(1/M) sum_i sum_{t=1}^{T-1} log pi(step t+1) * A_t^i with
A_t^i = gamma^{T-t} R^i, or gamma^{T-t} R^i - b_t^i when the baseline is
on. The advantage is a constant in this term: no gradient reaches the
baseline head through it, and the baseline's own squared-error gradient
stops at the head (it does not flow back into the recurrent state).

Backpropagation runs through every differentiable path, including the
recurrence created by feeding rank vectors into the next step embedding.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from attnwalk import kernels
from attnwalk.graphs import Dataset, DatasetError
from attnwalk.model import BatchRollout, ModelConfig, WalkModel, predict, rollout_batch
from attnwalk.nn import Adam
from attnwalk.rng import stream


@dataclass
class TrainConfig:
    steps: int = 12  # walk length T
    episodes: int = 20  # rollouts per graph per update (and prediction agents)
    gamma: float = 1.0
    use_baseline: bool = True
    epochs: int = 200
    lr_initial: float = 1e-3
    lr_final: float = 1e-6
    patience: int = 20
    seed: int = 0
    val_fraction: float = 0.1
    grad_clip: float | None = None

    def validate(self) -> None:
        if self.steps < 1 or self.episodes < 1:
            raise ValueError("steps and episodes must be at least 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.lr_final > self.lr_initial:
            raise ValueError("lr_final must not exceed lr_initial")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


def discount_factors(steps: int, gamma: float) -> np.ndarray:
    """disc[j] = gamma^(T-t) for t = j+1, i.e. decaying toward early steps."""
    return gamma ** (steps - 1 - np.arange(steps, dtype=np.float64))


def _cross_entropy_rows(logits: np.ndarray, label: int) -> np.ndarray:
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return lse - logits[:, label]


def accumulate_gradients(
    model: WalkModel,
    batch: BatchRollout,
    label: int,
    gamma: float,
    use_baseline: bool,
    *,
    policy: bool = True,
    classifier: bool = True,
    baseline: bool = True,
    extra_dh: np.ndarray | None = None,
    baseline_h: np.ndarray | None = None,
) -> dict[str, float]:
    """Accumulate gradients of the selected loss terms into the model.

    The minimized total is CE - surrogate + baseline MSE. ``extra_dh``
    (T, B, H) injects additional gradient at each history vector (used by
    the shared-memory variant). ``baseline_h`` overrides the history rows
    used for the baseline-head gradient (finite-difference harness only).
    Returns the loss component values.
    """
    steps, batch_size = batch.steps, batch.size
    hidden = model.config.hidden_dim
    step_dim = model.config.step_dim
    half = model.rank_embed.out_dim

    disc = discount_factors(steps, gamma)
    targets = disc[:, None] * batch.rewards[None, :]
    adv = targets - batch.baselines if use_baseline else targets.copy()

    losses = {"ce": 0.0, "pg_surrogate": 0.0, "baseline_mse": 0.0}
    if steps > 1:
        losses["pg_surrogate"] = float((batch.log_probs[1:] * adv[:-1]).sum() / batch_size)

    dh_ce = None
    if classifier:
        losses["ce"] = float(_cross_entropy_rows(batch.final_logits, label).mean())
        dlogits = batch.final_probs.copy()
        dlogits[:, label] -= 1.0
        dlogits /= batch_size
        kernels.accumulate_param_grads(
            batch.h[steps], dlogits, model.class_head.d_weights, model.class_head.d_bias
        )
        dh_ce = kernels.linear_input_grad(dlogits, model.class_head.weights)

    if baseline:
        diff = batch.baselines - targets
        losses["baseline_mse"] = float((diff * diff).mean())
        dpred = (2.0 / (steps * batch_size)) * diff
        rows = batch.h[1:] if baseline_h is None else baseline_h
        kernels.accumulate_param_grads(
            rows.reshape(steps * batch_size, hidden),
            np.ascontiguousarray(dpred.reshape(steps * batch_size, 1)),
            model.baseline_head.d_weights,
            model.baseline_head.d_bias,
        )

    if not (policy or classifier or extra_dh is not None):
        return losses

    dz_lstm = np.zeros((steps, batch_size, 4 * hidden))
    dpre_combine = np.zeros((steps, batch_size, step_dim))
    dpre_rank = np.zeros((steps, batch_size, half))
    dpre_attr = np.zeros((steps, batch_size, model.attr_embed.out_dim))
    dz_rank = np.zeros((max(steps - 1, 0), batch_size, model.config.num_types))

    dh_carry = np.zeros((batch_size, hidden))
    dc_carry = np.zeros((batch_size, hidden))
    dr_pending: np.ndarray | None = None
    rows_b = np.arange(batch_size)

    for i in range(steps, 0, -1):
        dh_i = dh_carry
        if i == steps and dh_ce is not None:
            dh_i = dh_i + dh_ce
        if extra_dh is not None:
            dh_i = dh_i + extra_dh[i - 1]
        if i <= steps - 1:
            r_i = batch.ranks[i]
            dr = dr_pending if dr_pending is not None else np.zeros_like(r_i)
            if policy:
                counts = batch.type_counts[i]
                mass = (counts * r_i).sum(axis=1)
                chosen = batch.chosen_types[i]
                dlogpi = -counts / mass[:, None]
                dlogpi[rows_b, chosen] += 1.0 / r_i[rows_b, chosen]
                dr = dr + (-adv[i - 1] / batch_size)[:, None] * dlogpi
            dz = r_i * (dr - (dr * r_i).sum(axis=1, keepdims=True))
            dz_rank[i - 1] = dz
            dh_i = dh_i + kernels.linear_input_grad(dz, model.rank_head.weights)

        dz_l, dc_prev = kernels.lstm_gate_grads(
            np.ascontiguousarray(batch.c[i - 1]),
            batch.gates[i - 1],
            batch.c[i],
            np.ascontiguousarray(dh_i),
            dc_carry,
        )
        dz_lstm[i - 1] = dz_l
        dxh = kernels.linear_input_grad(dz_l, model.core.weights)
        ds = dxh[:, :step_dim]
        dh_carry = dxh[:, step_dim:]
        dc_carry = dc_prev

        dpre3 = kernels.relu_backward(batch.s[i - 1], ds)
        dpre_combine[i - 1] = dpre3
        dcat = kernels.linear_input_grad(dpre3, model.step_combine.weights)
        dpre1 = kernels.relu_backward(batch.e1[i - 1], np.ascontiguousarray(dcat[:, :half]))
        dpre_rank[i - 1] = dpre1
        dpre_attr[i - 1] = kernels.relu_backward(
            batch.e2[i - 1], np.ascontiguousarray(dcat[:, half:])
        )
        dr_pending = kernels.linear_input_grad(dpre1, model.rank_embed.weights) if i > 1 else None

    flat = steps * batch_size
    xh_seq = np.concatenate([batch.s, batch.h[:steps]], axis=2).reshape(flat, -1)
    kernels.accumulate_param_grads(
        xh_seq, dz_lstm.reshape(flat, -1), model.core.d_weights, model.core.d_bias
    )
    cat_seq = np.concatenate([batch.e1, batch.e2], axis=2).reshape(flat, -1)
    kernels.accumulate_param_grads(
        cat_seq,
        dpre_combine.reshape(flat, -1),
        model.step_combine.d_weights,
        model.step_combine.d_bias,
    )
    kernels.accumulate_param_grads(
        batch.ranks.reshape(flat, -1),
        dpre_rank.reshape(flat, -1),
        model.rank_embed.d_weights,
        model.rank_embed.d_bias,
    )
    kernels.accumulate_param_grads(
        batch.attrs_in.reshape(flat, -1),
        dpre_attr.reshape(flat, -1),
        model.attr_embed.d_weights,
        model.attr_embed.d_bias,
    )
    if steps > 1:
        kernels.accumulate_param_grads(
            batch.h[1:steps].reshape((steps - 1) * batch_size, hidden),
            dz_rank.reshape((steps - 1) * batch_size, -1),
            model.rank_head.d_weights,
            model.rank_head.d_bias,
        )
    return losses


def reinforce_gradient(
    model: WalkModel, batch: BatchRollout, gamma: float, use_baseline: bool
) -> dict[str, float]:
    """Accumulate the policy-gradient term only (rank, core, step blocks)."""
    if batch.size == 0:
        raise ValueError("empty episode batch")
    return accumulate_gradients(
        model, batch, 0, gamma, use_baseline, policy=True, classifier=False, baseline=False
    )


def supervised_gradients(
    model: WalkModel, batch: BatchRollout, label: int, gamma: float = 1.0
) -> dict[str, float]:
    """Accumulate classifier cross-entropy and baseline MSE gradients."""
    if not 0 <= label < model.config.num_classes:
        raise ValueError(f"label {label} out of range")
    return accumulate_gradients(
        model, batch, label, gamma, True, policy=False, classifier=True, baseline=True
    )


def replay_batch(model: WalkModel, frozen: BatchRollout) -> BatchRollout:
    """Recompute every activation from current parameters with the sampling
    choices (nodes, neighbor statistics, rewards) frozen."""
    steps, batch_size = frozen.steps, frozen.size
    cfg = model.config
    ranks = np.zeros_like(frozen.ranks)
    ranks[0] = frozen.ranks[0]
    log_probs = np.zeros_like(frozen.log_probs)
    e1 = np.zeros_like(frozen.e1)
    e2 = np.zeros_like(frozen.e2)
    s = np.zeros_like(frozen.s)
    h = np.zeros_like(frozen.h)
    c = np.zeros_like(frozen.c)
    gates = np.zeros_like(frozen.gates)
    baselines = np.zeros_like(frozen.baselines)
    rows = np.arange(batch_size)

    for j in range(steps):
        chosen = frozen.chosen_types[j]
        mass = (frozen.type_counts[j] * ranks[j]).sum(axis=1)
        log_probs[j] = np.log(ranks[j][rows, chosen]) - np.log(mass)
        e1[j] = kernels.relu_forward(
            kernels.linear_forward(ranks[j], model.rank_embed.weights, model.rank_embed.bias)
        )
        e2[j] = kernels.relu_forward(
            kernels.linear_forward(frozen.attrs_in[j], model.attr_embed.weights, model.attr_embed.bias)
        )
        cat = np.concatenate([e1[j], e2[j]], axis=1)
        s[j] = kernels.relu_forward(
            kernels.linear_forward(cat, model.step_combine.weights, model.step_combine.bias)
        )
        xh = np.concatenate([s[j], h[j]], axis=1)
        h[j + 1], c[j + 1], gates[j] = kernels.lstm_forward(
            xh, np.ascontiguousarray(c[j]), model.core.weights, model.core.bias
        )
        rank_out = kernels.softmax_rows(
            kernels.linear_forward(h[j + 1], model.rank_head.weights, model.rank_head.bias)
        )
        if j + 1 < steps:
            ranks[j + 1] = rank_out
        else:
            rank_last = rank_out
        baselines[j] = kernels.linear_forward(
            h[j + 1], model.baseline_head.weights, model.baseline_head.bias
        )[:, 0]

    final_logits = kernels.linear_forward(h[steps], model.class_head.weights, model.class_head.bias)
    final_probs = kernels.softmax_rows(final_logits)
    return dataclasses.replace(
        frozen,
        ranks=ranks,
        rank_last=rank_last,
        log_probs=log_probs,
        e1=e1,
        e2=e2,
        s=s,
        h=h,
        c=c,
        gates=gates,
        baselines=baselines,
        final_logits=final_logits,
        final_probs=final_probs,
    )


def make_frozen_loss(
    model: WalkModel,
    frozen: BatchRollout,
    label: int,
    gamma: float,
    use_baseline: bool,
    *,
    policy: bool = True,
    classifier: bool = True,
    baseline: bool = True,
):
    """Build fn() -> (loss, grads) for gradient checking the episode loss.

    Sampling choices, rewards, advantages, and the history rows feeding the
    baseline MSE are all held at their recorded values, matching the
    stop-gradient semantics of the training update; everything else is
    recomputed live from the current parameters.
    """
    steps, batch_size = frozen.steps, frozen.size
    h_frozen = frozen.h[1:].copy()
    baselines_frozen = frozen.baselines.copy()
    disc = discount_factors(steps, gamma)
    targets = disc[:, None] * frozen.rewards[None, :]
    adv = targets - baselines_frozen if use_baseline else targets

    def fn():
        live = replay_batch(model, frozen)
        loss = 0.0
        if classifier:
            loss += float(_cross_entropy_rows(live.final_logits, label).mean())
        if policy and steps > 1:
            loss -= float((live.log_probs[1:] * adv[:-1]).sum() / batch_size)
        if baseline:
            b_live = kernels.linear_forward(
                h_frozen.reshape(steps * batch_size, -1),
                model.baseline_head.weights,
                model.baseline_head.bias,
            ).reshape(steps, batch_size)
            diff = b_live - targets
            loss += float((diff * diff).mean())
        model.zero_grad()
        accumulate_gradients(
            model,
            dataclasses.replace(live, baselines=baselines_frozen),
            label,
            gamma,
            use_baseline,
            policy=policy,
            classifier=classifier,
            baseline=baseline,
            baseline_h=h_frozen,
        )
        grads = [grad.copy() for _, _, grad in model.param_blocks()]
        return loss, grads

    return fn


@dataclass
class EpochStats:
    epoch: int
    ce_loss: float
    pg_surrogate: float
    baseline_mse: float
    val_acc: float
    lr: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "ce_loss", "pg_surrogate", "baseline_mse", "val_acc", "lr"])
            for st in self.epochs:
                writer.writerow(
                    [
                        st.epoch,
                        repr(st.ce_loss),
                        repr(st.pg_surrogate),
                        repr(st.baseline_mse),
                        repr(st.val_acc),
                        repr(st.lr),
                    ]
                )


def learning_rate(config: TrainConfig, epoch_index: int) -> float:
    """Exponential decay from lr_initial to lr_final across the epoch budget."""
    if config.epochs <= 1 or config.lr_initial == config.lr_final:
        return config.lr_initial
    frac = epoch_index / (config.epochs - 1)
    return float(config.lr_initial * (config.lr_final / config.lr_initial) ** frac)


def train_val_split(dataset: Dataset, fraction: float, seed: int):
    """Stratified validation carve-out; every class lands in both sides."""
    rng = stream(seed, "valsplit")
    by_class: dict[int, list[int]] = {}
    for i, g in enumerate(dataset.graphs):
        by_class.setdefault(g.label, []).append(i)
    if len(by_class) < 2:
        raise DatasetError("training needs at least 2 classes present")
    train_ids: list[int] = []
    val_ids: list[int] = []
    for c in sorted(by_class):
        ids = np.array(by_class[c])
        if len(ids) < 2:
            raise DatasetError(f"class {c} has too few graphs to carve a validation split")
        order = rng.permutation(len(ids))
        n_val = min(max(1, round(fraction * len(ids))), len(ids) - 1)
        val_ids.extend(int(x) for x in ids[order[:n_val]])
        train_ids.extend(int(x) for x in ids[order[n_val:]])
    return sorted(train_ids), sorted(val_ids)


def _clip_gradients(model: WalkModel, max_norm: float) -> None:
    total = 0.0
    for _, _, grad in model.param_blocks():
        total += float((grad * grad).sum())
    total = np.sqrt(total)
    if total > max_norm:
        scale = max_norm / total
        for _, _, grad in model.param_blocks():
            grad *= scale


def _train_loop(
    dataset: Dataset,
    config: TrainConfig,
    model,
    update_fn,
    predict_fn,
    checkpoint_dir=None,
    checkpoint_every: int = 5,
):
    """Shared epoch loop: shuffle, per-graph update, validate, early-stop."""
    config.validate()
    train_ids, val_ids = train_val_split(dataset, config.val_fraction, config.seed)
    adam = Adam(model.param_blocks())
    report = TrainReport()
    best_snapshot = model.copy_params()
    best_acc = -1.0
    since_best = 0

    saver = None
    if checkpoint_dir is not None:
        from attnwalk.checkpoint import save_model

        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

        def saver(tag):
            save_model(model, checkpoint_dir / f"checkpoint_epoch_{tag:04d}.json", dataset.vocab)

        saver(0)

    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        order = stream(config.seed, "shuffle", epoch).permutation(len(train_ids))
        sums = {"ce": 0.0, "pg_surrogate": 0.0, "baseline_mse": 0.0}
        for k in order:
            gi = train_ids[int(k)]
            losses = update_fn(model, dataset.graphs[gi], gi, epoch)
            if config.grad_clip is not None:
                _clip_gradients(model, config.grad_clip)
            adam.update(lr)
            for key in sums:
                sums[key] += losses[key]
        n_train = len(train_ids)
        correct = sum(
            1
            for gi in val_ids
            if predict_fn(model, dataset.graphs[gi], gi, epoch) == dataset.graphs[gi].label
        )
        val_acc = correct / len(val_ids)
        report.epochs.append(
            EpochStats(
                epoch=epoch + 1,
                ce_loss=sums["ce"] / n_train,
                pg_surrogate=sums["pg_surrogate"] / n_train,
                baseline_mse=sums["baseline_mse"] / n_train,
                val_acc=val_acc,
                lr=lr,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            report.best_epoch = epoch + 1
            best_snapshot = model.copy_params()
            since_best = 0
        else:
            since_best += 1
        if saver is not None and (epoch + 1) % checkpoint_every == 0:
            saver(epoch + 1)
        if since_best >= config.patience:
            break

    model.load_params(best_snapshot)
    report.best_val_acc = best_acc
    if checkpoint_dir is not None:
        from attnwalk.checkpoint import save_model

        save_model(
            model,
            Path(checkpoint_dir) / "checkpoint_best.json",
            dataset.vocab,
            extra={"best_epoch": report.best_epoch},
        )
    return model, report


def train(
    dataset: Dataset,
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    checkpoint_dir=None,
    checkpoint_every: int = 5,
) -> tuple[WalkModel, TrainReport]:
    """Train a base walk agent with one optimizer step per graph."""
    if model_config is None:
        model_config = ModelConfig(
            num_types=len(dataset.vocab),
            attr_dim=dataset.attr_dim,
            num_classes=dataset.num_classes,
        )
    model = WalkModel(model_config, seed=config.seed)

    def update_fn(m, graph, gi, epoch):
        rngs = [stream(config.seed, "episode", epoch, gi, a) for a in range(config.episodes)]
        batch = rollout_batch(m, graph, config.steps, rngs)
        m.zero_grad()
        return accumulate_gradients(m, batch, graph.label, config.gamma, config.use_baseline)

    def predict_fn(m, graph, gi, epoch):
        rngs = [stream(config.seed, "val", epoch, gi, a) for a in range(config.episodes)]
        label, _ = predict(m, graph, config.episodes, config.steps, rngs)
        return label

    return _train_loop(
        dataset, config, model, update_fn, predict_fn, checkpoint_dir, checkpoint_every
    )


def evaluate(
    model: WalkModel,
    dataset: Dataset,
    ids,
    agents: int,
    steps: int,
    seed: int,
) -> tuple[float, dict[int, tuple[int, int]]]:
    """Ensemble-predict every graph in ``ids``; returns accuracy and
    per-class (correct, total) counts."""
    per_class: dict[int, tuple[int, int]] = {}
    correct = 0
    for gi in ids:
        graph = dataset.graphs[gi]
        rngs = [stream(seed, "eval", gi, a) for a in range(agents)]
        label, _ = predict(model, graph, agents, steps, rngs)
        hit = int(label == graph.label)
        correct += hit
        c, t = per_class.get(graph.label, (0, 0))
        per_class[graph.label] = (c + hit, t + 1)
    return correct / len(ids), per_class

"""The walk agent: step sampling, step embedding, recurrent core, heads.

An episode is a T-step biased walk. At each step the agent samples a
neighbor of the current node with probability proportional to the rank of
the neighbor's type, embeds the chosen node's attributes together with the
rank vector that guided the choice, feeds the embedding to the LSTM core,
and reads new rank / class / baseline values off the hidden state.

``rollout_batch`` runs any number of episodes on one graph in lockstep with
one RNG stream per episode, so batched execution is draw-for-draw identical
to sequential single rollouts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from attnwalk import kernels
from attnwalk.nn import LinearLayer, LstmCell
from attnwalk.rng import stream


@dataclass
class ModelConfig:
    num_types: int
    attr_dim: int
    num_classes: int
    step_concat: int = 128  # width of [rank embedding ; attribute embedding]
    step_dim: int = 164
    hidden_dim: int = 200

    def validate(self) -> None:
        if min(self.num_types, self.attr_dim, self.num_classes) < 1:
            raise ValueError("model dims must be positive")
        if min(self.step_concat, self.step_dim, self.hidden_dim) < 2:
            raise ValueError("hidden sizes must be at least 2")


@dataclass
class HistoryVector:
    h: np.ndarray
    c: np.ndarray


class WalkModel:
    """All learnable blocks of the base agent."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        half = config.step_concat // 2
        self.rank_embed = LinearLayer(config.num_types, half, stream(seed, "init", "rank_embed"))
        self.attr_embed = LinearLayer(
            config.attr_dim, config.step_concat - half, stream(seed, "init", "attr_embed")
        )
        self.step_combine = LinearLayer(
            config.step_concat, config.step_dim, stream(seed, "init", "step_combine")
        )
        self.core = LstmCell(config.step_dim, config.hidden_dim, stream(seed, "init", "core"))
        self.rank_head = LinearLayer(config.hidden_dim, config.num_types, stream(seed, "init", "rank_head"))
        self.class_head = LinearLayer(
            config.hidden_dim, config.num_classes, stream(seed, "init", "class_head")
        )
        self.baseline_head = LinearLayer(config.hidden_dim, 1, stream(seed, "init", "baseline_head"))

    def _layers(self) -> list[tuple[str, LinearLayer | LstmCell]]:
        return [
            ("rank_embed", self.rank_embed),
            ("attr_embed", self.attr_embed),
            ("step_combine", self.step_combine),
            ("core", self.core),
            ("rank_head", self.rank_head),
            ("class_head", self.class_head),
            ("baseline_head", self.baseline_head),
        ]

    def param_blocks(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        blocks = []
        for name, layer in self._layers():
            blocks.append((f"{name}.weights", layer.weights, layer.d_weights))
            blocks.append((f"{name}.bias", layer.bias, layer.d_bias))
        return blocks

    def zero_grad(self) -> None:
        for _, layer in self._layers():
            layer.zero_grad()

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: param.copy() for name, param, _ in self.param_blocks()}

    def load_params(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, param, _ in self.param_blocks():
            param[:] = snapshot[name]


def check_rank_vector(values: np.ndarray, num_types: int) -> np.ndarray:
    """Validate the rank-vector invariants: positive entries summing to 1."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (num_types,):
        raise ValueError(f"rank vector must have length {num_types}")
    if not np.all(values > 0.0):
        raise ValueError("rank vector entries must be strictly positive")
    if abs(values.sum() - 1.0) > 1e-9:
        raise ValueError("rank vector must sum to 1")
    return values


def init_episode(graph, rng: np.random.Generator, num_types: int, hidden_dim: int):
    """Uniform start node, uniform rank vector, zero history."""
    c0 = int(rng.integers(graph.node_count))
    r0 = np.full(num_types, 1.0 / num_types)
    state0 = HistoryVector(h=np.zeros(hidden_dim), c=np.zeros(hidden_dim))
    return c0, r0, state0


def step_probabilities(rank: np.ndarray, neighbor_types: np.ndarray) -> np.ndarray:
    """Neighbor distribution: weight by the rank of each neighbor's type."""
    weights = rank[neighbor_types]
    return weights / weights.sum()


def _weighted_choice(weights: list[float], total: float, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from unnormalized weights; one uniform per call."""
    u = rng.random() * total
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if u < acc:
            return k
    return len(weights) - 1


def step_sample(rank_prev: np.ndarray, graph, c_prev: int, rng: np.random.Generator):
    """Pick a neighbor of c_prev biased by the rank of neighbor types.

    Returns (chosen node id, log probability of that choice).
    """
    view = graph.neighbor_view(c_prev)
    weights = rank_prev[view.neighbor_types].tolist()
    total = sum(weights)
    idx = _weighted_choice(weights, total, rng)
    return int(view.neighbor_ids[idx]), float(np.log(weights[idx] / total))


def step_embed(model: WalkModel, attr_vec: np.ndarray, rank_prev: np.ndarray) -> np.ndarray:
    """s = relu(W3 [relu(W1 r) ; relu(W2 d)])."""
    rank_row = np.ascontiguousarray(rank_prev, dtype=np.float64)[None, :]
    attr_row = np.ascontiguousarray(attr_vec, dtype=np.float64)[None, :]
    e1 = kernels.relu_forward(
        kernels.linear_forward(rank_row, model.rank_embed.weights, model.rank_embed.bias)
    )
    e2 = kernels.relu_forward(
        kernels.linear_forward(attr_row, model.attr_embed.weights, model.attr_embed.bias)
    )
    cat = np.concatenate([e1, e2], axis=1)
    s = kernels.relu_forward(
        kernels.linear_forward(cat, model.step_combine.weights, model.step_combine.bias)
    )
    return s[0]


def core_update(model: WalkModel, s_t: np.ndarray, state: HistoryVector) -> HistoryVector:
    h, c, _ = model.core.step(s_t, state.h, state.c)
    return HistoryVector(h=h, c=c)


def rank_forward(model: WalkModel, h: np.ndarray) -> np.ndarray:
    """Softmax rank head: a strictly positive distribution over node types."""
    z = model.rank_head.forward(h)
    return kernels.softmax_rows(np.ascontiguousarray(z[None, :]))[0]


def classify(model: WalkModel, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = model.class_head.forward(h)
    probs = kernels.softmax_rows(np.ascontiguousarray(logits[None, :]))[0]
    return logits, probs


def baseline_forward(model: WalkModel, h: np.ndarray) -> float:
    return float(model.baseline_head.forward(h)[0])


@dataclass
class EpisodeTrace:
    """One agent rollout. Index t runs 1..T in the paper's sense:
    ``step_log_probs[t-1]`` is the log probability of reaching ``nodes[t]``
    under ``ranks[t-1]``; ``ranks`` holds r_0..r_{T-1}.
    """

    nodes: np.ndarray
    ranks: np.ndarray
    step_log_probs: np.ndarray
    histories_h: np.ndarray
    histories_c: np.ndarray
    baselines: np.ndarray
    final_logits: np.ndarray
    final_probs: np.ndarray
    reward: float


@dataclass
class BatchRollout:
    """Lockstep rollouts of B episodes on one graph, with the activation
    caches needed for backpropagation through time."""

    nodes: np.ndarray  # (T+1, B) int64
    ranks: np.ndarray  # (T, B, R); ranks[0] is the uniform r_0
    rank_last: np.ndarray  # (B, R): rank output at t=T, computed but unused
    type_counts: np.ndarray  # (T, B, R) neighbor-type counts at each step
    chosen_types: np.ndarray  # (T, B) int64
    log_probs: np.ndarray  # (T, B)
    attrs_in: np.ndarray  # (T, B, D) attributes of the node stepped onto
    e1: np.ndarray  # (T, B, A) rank-embedding activations
    e2: np.ndarray  # (T, B, A2) attribute-embedding activations
    s: np.ndarray  # (T, B, S) step embeddings (LSTM inputs)
    h: np.ndarray  # (T+1, B, H)
    c: np.ndarray  # (T+1, B, H)
    gates: np.ndarray  # (T, B, 4H)
    baselines: np.ndarray  # (T, B); baselines[j] = b_{j+1}
    final_logits: np.ndarray  # (B, L)
    final_probs: np.ndarray  # (B, L)
    predictions: np.ndarray  # (B,) int64
    rewards: np.ndarray  # (B,) in {-1.0, +1.0}

    @property
    def steps(self) -> int:
        return self.log_probs.shape[0]

    @property
    def size(self) -> int:
        return self.log_probs.shape[1]


def rollout_batch(
    model: WalkModel,
    graph,
    steps: int,
    rngs: list[np.random.Generator],
    label: int | None = None,
) -> BatchRollout:
    """Run len(rngs) episodes of ``steps`` steps on one graph in lockstep.

    The graph is accessed only through ``node_count`` and ``neighbor_view``.
    ``label`` defaults to ``graph.label`` and determines the +-1 reward.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    cfg = model.config
    num_types, attr_dim, hidden = cfg.num_types, cfg.attr_dim, cfg.hidden_dim
    batch = len(rngs)
    if label is None:
        label = graph.label

    nodes = np.empty((steps + 1, batch), dtype=np.int64)
    ranks = np.empty((steps, batch, num_types))
    type_counts = np.empty((steps, batch, num_types))
    chosen_types = np.empty((steps, batch), dtype=np.int64)
    log_probs = np.empty((steps, batch))
    attrs_in = np.empty((steps, batch, attr_dim))
    e1 = np.empty((steps, batch, model.rank_embed.out_dim))
    e2 = np.empty((steps, batch, model.attr_embed.out_dim))
    s = np.empty((steps, batch, cfg.step_dim))
    h = np.empty((steps + 1, batch, hidden))
    c = np.empty((steps + 1, batch, hidden))
    gates = np.empty((steps, batch, 4 * hidden))
    baselines = np.empty((steps, batch))
    h[0] = 0.0
    c[0] = 0.0

    for i, rng in enumerate(rngs):
        nodes[0, i] = rng.integers(graph.node_count)
    ranks[0] = 1.0 / num_types

    # Neighborhoods are fetched lazily, one neighbor_view call per node
    # actually visited during this batch, and reused across its episodes.
    view_cache: dict[int, tuple] = {}
    log = np.log

    for j in range(steps):
        for i, rng in enumerate(rngs):
            node = int(nodes[j, i])
            info = view_cache.get(node)
            if info is None:
                view = graph.neighbor_view(node)
                info = (
                    view.neighbor_ids,
                    view.neighbor_types,
                    np.bincount(view.neighbor_types, minlength=num_types),
                    view.neighbor_attrs,
                )
                view_cache[node] = info
            ids, ntypes, counts, nattrs = info
            weights = ranks[j, i][ntypes].tolist()
            total = sum(weights)
            idx = _weighted_choice(weights, total, rng)
            nodes[j + 1, i] = ids[idx]
            chosen_types[j, i] = ntypes[idx]
            log_probs[j, i] = log(weights[idx] / total)
            type_counts[j, i] = counts
            attrs_in[j, i] = nattrs[idx]

        e1[j] = kernels.relu_forward(
            kernels.linear_forward(ranks[j], model.rank_embed.weights, model.rank_embed.bias)
        )
        e2[j] = kernels.relu_forward(
            kernels.linear_forward(attrs_in[j], model.attr_embed.weights, model.attr_embed.bias)
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
    predictions = final_logits.argmax(axis=1)
    rewards = np.where(predictions == label, 1.0, -1.0)
    return BatchRollout(
        nodes=nodes,
        ranks=ranks,
        rank_last=rank_last,
        type_counts=type_counts,
        chosen_types=chosen_types,
        log_probs=log_probs,
        attrs_in=attrs_in,
        e1=e1,
        e2=e2,
        s=s,
        h=h,
        c=c,
        gates=gates,
        baselines=baselines,
        final_logits=final_logits,
        final_probs=final_probs,
        predictions=predictions,
        rewards=rewards,
    )


def episode_trace(batch: BatchRollout, i: int = 0) -> EpisodeTrace:
    return EpisodeTrace(
        nodes=batch.nodes[:, i].copy(),
        ranks=batch.ranks[:, i].copy(),
        step_log_probs=batch.log_probs[:, i].copy(),
        histories_h=batch.h[1:, i].copy(),
        histories_c=batch.c[1:, i].copy(),
        baselines=batch.baselines[:, i].copy(),
        final_logits=batch.final_logits[i].copy(),
        final_probs=batch.final_probs[i].copy(),
        reward=float(batch.rewards[i]),
    )


def rollout(model: WalkModel, graph, steps: int, rng: np.random.Generator) -> EpisodeTrace:
    """One episode; reward is +1 iff the final prediction matches the label."""
    return episode_trace(rollout_batch(model, graph, steps, [rng]))


def predict(
    model: WalkModel,
    graph,
    agents: int,
    steps: int,
    rngs: list[np.random.Generator] | np.random.Generator,
) -> tuple[int, np.ndarray]:
    """Average the softmax outputs of ``agents`` independent rollouts.

    Ties in the averaged distribution resolve to the lower class index.
    """
    if agents < 1:
        raise ValueError("agents must be at least 1")
    if isinstance(rngs, np.random.Generator):
        rngs = rngs.spawn(agents)
    if len(rngs) != agents:
        raise ValueError("need one RNG stream per agent")
    batch = rollout_batch(model, graph, steps, rngs, label=0)
    avg = batch.final_probs.mean(axis=0)
    return int(np.argmax(avg)), avg


def export_trace_csv(
    path,
    traces: list[tuple[int, EpisodeTrace]],
    model: WalkModel,
    graph,
    vocab_names,
) -> None:
    """Write episode traces as CSV rows (epoch, t, node, type, ranks, b_t, label).

    Row t=0 carries the start node and the uniform r_0; rows t>=1 carry the
    rank emitted at t (blank at t=T where the rank output is unused), the
    baseline, and the per-step diagnostic prediction from h_t.
    """
    num_types = len(vocab_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "t", "node_id", "node_type"]
            + [f"rank_{k}" for k in range(num_types)]
            + ["b_t", "predicted_label"]
        )
        for epoch, trace in traces:
            steps = trace.step_log_probs.shape[0]
            node0 = int(trace.nodes[0])
            writer.writerow(
                [epoch, 0, node0, vocab_names[graph.types[node0]]]
                + [repr(float(v)) for v in trace.ranks[0]]
                + ["", ""]
            )
            for t in range(1, steps + 1):
                node = int(trace.nodes[t])
                rank_cells = (
                    [repr(float(v)) for v in trace.ranks[t]] if t < steps else [""] * num_types
                )
                _, probs = classify(model, trace.histories_h[t - 1])
                writer.writerow(
                    [epoch, t, node, vocab_names[graph.types[node]]]
                    + rank_cells
                    + [repr(float(trace.baselines[t - 1])), int(np.argmax(probs))]
                )

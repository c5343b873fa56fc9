"""Joint pairwise-ranking training of the shared embedding table.

Each step samples user/positive/negative triplets, runs the full-graph
forward pass through both enabled convolution branches, forms the joint
BPR loss, and pushes the analytically derived last-layer gradients back
to layer 0 through the transposed propagation.  Updates use a from-
scratch Adam so runs are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import evaluation, propagation
from .errors import (
    NonFiniteGradientError,
    NonFiniteParameterError,
    UserWithAllItemsError,
)
from .graph import InteractionGraph, TripartiteGraph
from .propagation import EmbeddingTable, PropagationPlan, backward, forward
from .sentiment import SentimentWeights, normalize_weights


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters plus the ablation switches."""

    dim: int = 64
    layers: int = 3
    alpha: float = 0.25
    gamma: float = 0.1
    lr: float = 0.001
    lambda1: float = 1e-4
    lambda2: float = 1e-4
    batch_size: int = 2048
    epochs: int = 1000
    seed: int = 0
    use_g1_loss: bool = True
    use_g2_loss: bool = True
    use_sentiment: bool = True
    use_pn: bool = True
    use_visual_entities: bool = True
    use_textual_entities: bool = True
    use_g1_branch: bool = True
    use_g2_branch: bool = True
    reg_layer0: bool = False  # move the L2 penalty from layer L to layer 0
    patience: int = 50  # early-stopping patience on validation NDCG@10
    eval_every: int = 1

    def validate(self) -> None:
        if not (self.use_g1_loss or self.use_g2_loss):
            raise ValueError("at least one branch loss must be enabled")
        if self.use_g1_loss and not self.use_g1_branch:
            raise ValueError("g1 loss requires the g1 branch")
        if self.use_g2_loss and not self.use_g2_branch:
            raise ValueError("g2 loss requires the g2 branch")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError("alpha must lie in [0, 0.5)")
        if self.dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("dim, batch_size, epochs must be positive")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.use_pn else 0.0


# Named ablation variants and baselines, keyed by their reporting names.
VARIANTS: dict[str, dict] = {
    "full": {},
    "wo-v": {"use_visual_entities": False},
    "wo-t": {"use_textual_entities": False},
    "wo-vt": {"use_visual_entities": False, "use_textual_entities": False},
    "wo-g1": {"use_g1_branch": False, "use_g1_loss": False},
    "wo-g2": {"use_g2_branch": False, "use_g2_loss": False},
    "wo-l1": {"use_g1_loss": False},
    "wo-l2": {"use_g2_loss": False},
    "wo-pn": {"use_pn": False},
    "wo-s": {"use_sentiment": False},
    "wo-s-pn": {"use_sentiment": False, "use_pn": False},
    "lightgcn": {"use_g2_branch": False, "use_g2_loss": False,
                 "use_visual_entities": False, "use_textual_entities": False,
                 "use_sentiment": False, "use_pn": False},
    "bprmf": {"layers": 0, "use_g2_branch": False, "use_g2_loss": False,
              "use_visual_entities": False, "use_textual_entities": False,
              "use_sentiment": False, "use_pn": False},
}


def apply_variant(config: TrainConfig, name: str) -> TrainConfig:
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from "
                         f"{sorted(VARIANTS)}")
    return replace(config, **VARIANTS[name])


@dataclass
class AdamState:
    """First/second moment accumulators, one slot per parameter."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, **kw) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float) -> tuple[np.ndarray, AdamState]:
    """In-place Adam update with bias correction."""
    if params.shape != grads.shape:
        raise ValueError("parameter/gradient shape mismatch")
    state.step_count += 1
    t = state.step_count
    state.m += (1.0 - state.beta1) * (grads - state.m)
    state.v += (1.0 - state.beta2) * (grads * grads - state.v)
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    if not np.isfinite(params).all():
        raise NonFiniteParameterError("parameters diverged to non-finite values")
    return params, state


class TripletSampler:
    """Uniform (user, positive, negative) sampling with rejection.

    Negatives are drawn uniformly over items and redrawn while they hit
    an observed interaction of the sampled user.  Membership checks use a
    sorted array of encoded (user, item) keys, so sampling is fully
    deterministic given the generator state.
    """

    def __init__(self, graph: InteractionGraph, rng: np.random.Generator):
        if int(graph.user_degrees.max()) >= graph.num_items:
            u = int(np.argmax(graph.user_degrees))
            raise UserWithAllItemsError(
                f"user {u} interacts with every item; negative sampling "
                "is impossible")
        self.graph = graph
        self.rng = rng
        self._keys = np.sort(graph.edges[:, 0] * graph.num_items
                             + graph.edges[:, 1])

    def _observed(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        keys = users * self.graph.num_items + items
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self._keys.shape[0] - 1)
        return self._keys[pos] == keys

    def sample(self, batch_size: int) -> np.ndarray:
        """Return (batch_size, 3) int64 rows of (user, pos item, neg item)."""
        edges = self.graph.edges
        pick = self.rng.integers(0, edges.shape[0], size=batch_size)
        users = edges[pick, 0].copy()
        pos = edges[pick, 1].copy()
        neg = self.rng.integers(0, self.graph.num_items, size=batch_size)
        bad = np.flatnonzero(self._observed(users, neg))
        while bad.size:
            neg[bad] = self.rng.integers(0, self.graph.num_items,
                                         size=bad.size)
            bad = bad[self._observed(users[bad], neg[bad])]
        return np.stack([users, pos, neg], axis=1)


def sample_batch(graph: InteractionGraph, batch_size: int,
                 rng: np.random.Generator) -> np.ndarray:
    return TripletSampler(graph, rng).sample(batch_size)


def bpr_loss(scores_pos: np.ndarray, scores_neg: np.ndarray,
             reg_term: float = 0.0) -> float:
    """Batch-mean pairwise ranking loss plus a precomputed penalty term.

    -ln(sigmoid(x)) is evaluated as softplus(-x) so large score gaps in
    either direction stay finite.
    """
    x = np.asarray(scores_pos, dtype=np.float64) - np.asarray(
        scores_neg, dtype=np.float64)
    return float(np.logaddexp(0.0, -x).mean() + reg_term)


def _touched_rows(batch: np.ndarray, n_users: int) -> np.ndarray:
    # Unique user and item rows of the batch in the stacked index space.
    return np.unique(np.concatenate([
        batch[:, 0], n_users + batch[:, 1], n_users + batch[:, 2]]))


def _branch_scores(final: np.ndarray, batch: np.ndarray, n_users: int):
    vu = final[batch[:, 0]]
    vi = final[n_users + batch[:, 1]]
    vj = final[n_users + batch[:, 2]]
    return vu, vi, vj, np.einsum("bd,bd->b", vu, vi - vj)


def _branch_loss(layers: list[np.ndarray], batch: np.ndarray, n_users: int,
                 lam: float, reg_layer0: bool) -> tuple[float, float]:
    final = layers[-1]
    _, _, _, x = _branch_scores(final, batch, n_users)
    bpr = float(np.logaddexp(0.0, -x).mean())
    reg_src = layers[0] if reg_layer0 else final
    rows = _touched_rows(batch, n_users)
    reg = lam * float(np.sum(reg_src[rows] ** 2)) / batch.shape[0]
    return bpr, reg


def batch_loss(batch: np.ndarray, layers1: list[np.ndarray] | None,
               layers2: list[np.ndarray] | None, config: TrainConfig,
               n_users: int) -> dict[str, float]:
    """Joint loss for one batch; branch terms reported separately."""
    out = {"loss": 0.0, "loss_g1": 0.0, "loss_g2": 0.0}
    if config.use_g1_loss:
        bpr, reg = _branch_loss(layers1, batch, n_users, config.lambda1,
                                config.reg_layer0)
        out["loss_g1"] = bpr + reg
    if config.use_g2_loss:
        bpr, reg = _branch_loss(layers2, batch, n_users, config.lambda2,
                                config.reg_layer0)
        out["loss_g2"] = bpr + reg
    out["loss"] = out["loss_g1"] + out["loss_g2"]
    return out


def _scatter_rows(shape, rows: np.ndarray, contrib: np.ndarray) -> np.ndarray:
    """Sum contribution rows into a zero matrix, duplicates accumulated.

    bincount over flattened indices sums in input order, so the result is
    deterministic and an order of magnitude faster than unbuffered
    ufunc.at scatters.
    """
    n, d = shape
    flat = (rows[:, None] * d + np.arange(d, dtype=np.int64)).ravel()
    return np.bincount(flat, weights=contrib.ravel(),
                       minlength=n * d).reshape(n, d)


def _branch_gradient(layers: list[np.ndarray], plan: PropagationPlan,
                     batch: np.ndarray, n_users: int, n_layers: int,
                     lam: float, reg_layer0: bool) -> np.ndarray:
    final = layers[-1]
    vu, vi, vj, x = _branch_scores(final, batch, n_users)
    b = batch.shape[0]
    coeff = (-expit(-x) / b)[:, None]

    rows = np.concatenate([batch[:, 0], n_users + batch[:, 1],
                           n_users + batch[:, 2]])
    contrib = np.concatenate([coeff * (vi - vj), coeff * vu, -coeff * vu])
    g_last = _scatter_rows(final.shape, rows, contrib)

    rows = _touched_rows(batch, n_users)
    if reg_layer0:
        g0 = backward(g_last, plan, n_layers)
        g0[rows] += (2.0 * lam / b) * layers[0][rows]
        return g0
    g_last[rows] += (2.0 * lam / b) * final[rows]
    return backward(g_last, plan, n_layers)


def compute_gradients(batch: np.ndarray,
                      layers1: list[np.ndarray] | None,
                      layers2: list[np.ndarray] | None,
                      plan1: PropagationPlan | None,
                      plan2: PropagationPlan | None,
                      config: TrainConfig,
                      n_params: int) -> np.ndarray:
    """Layer-0 gradient of the joint batch loss over the full parameter stack.

    Each branch's pairwise term contributes -sigmoid(-x) at its own score
    difference, scattered to the last-layer user/item rows, plus the L2
    pull on the rows the batch touched; both flow to layer 0 through the
    transposed propagation.
    """
    dim = (layers1 or layers2)[0].shape[1]
    grad = np.zeros((n_params, dim), dtype=np.float64)
    if config.use_g1_loss:
        g = _branch_gradient(layers1, plan1, batch, plan1.n_users,
                             config.layers, config.lambda1, config.reg_layer0)
        grad[:g.shape[0]] += g
    if config.use_g2_loss:
        g = _branch_gradient(layers2, plan2, batch, plan2.n_users,
                             config.layers, config.lambda2, config.reg_layer0)
        grad[:g.shape[0]] += g
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("joint gradient is non-finite")
    return grad


def predict(u_row_g1, i_row_g1, u_row_g2=None, i_row_g2=None) -> float:
    """Preference score: sum of the enabled branches' inner products."""
    score = 0.0
    if u_row_g1 is not None:
        score += float(np.dot(u_row_g1, i_row_g1))
    if u_row_g2 is not None:
        score += float(np.dot(u_row_g2, i_row_g2))
    return score


@dataclass
class TrainData:
    """Prepared inputs for :func:`fit`: training graphs plus eval split."""

    g1: InteractionGraph
    tg: TripartiteGraph | None = None
    item_sentiments: np.ndarray | None = None
    split: "evaluation.EvalSplit | None" = None

    @property
    def n_users(self) -> int:
        return self.g1.num_users

    @property
    def n_items(self) -> int:
        return self.g1.num_items

    @property
    def n_entities(self) -> int:
        return self.tg.num_entities if self.tg is not None else 0


@dataclass
class FitResult:
    table: EmbeddingTable
    log: list[dict] = field(default_factory=list)
    weights: SentimentWeights | None = None
    plan1: PropagationPlan | None = None
    plan2: PropagationPlan | None = None
    best_epoch: int | None = None


def build_weights(data: TrainData, config: TrainConfig) -> SentimentWeights:
    enabled = config.use_sentiment and data.item_sentiments is not None
    raw = data.item_sentiments if data.item_sentiments is not None \
        else np.ones(data.n_items)
    return normalize_weights(raw, config.gamma, enabled=enabled)


def build_plans(data: TrainData, config: TrainConfig,
                weights: SentimentWeights):
    alpha = config.effective_alpha
    plan1 = plan2 = None
    if config.use_g1_branch:
        plan1 = propagation.build_g1_plan(data.g1, weights, alpha,
                                          config.layers)
    if config.use_g2_branch:
        if data.tg is None:
            raise ValueError("g2 branch enabled but no tripartite graph given")
        plan2 = propagation.build_g2_plan(data.tg, weights, alpha,
                                          config.layers)
    return plan1, plan2


def final_representations(table: EmbeddingTable,
                          plan1: PropagationPlan | None,
                          plan2: PropagationPlan | None,
                          layers: int):
    """Last-layer (user, item) representations per enabled branch."""
    out = []
    for plan in (plan1, plan2):
        if plan is None:
            out.append((None, None))
            continue
        final = forward(table.data[:plan.n_nodes], plan, layers)[-1]
        out.append((final[:plan.n_users],
                    final[plan.n_users:plan.n_users + plan.n_items]))
    return out


def fit(data: TrainData, config: TrainConfig) -> FitResult:
    """Train the embedding table; returns layer-0 parameters plus the log.

    When a split with validation items is attached, validation NDCG@10 is
    tracked every ``eval_every`` epochs, training stops after ``patience``
    epochs without improvement, and the best parameters are restored.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    table = EmbeddingTable.xavier(data.n_users, data.n_items,
                                  data.n_entities, config.dim, rng)
    weights = build_weights(data, config)
    plan1, plan2 = build_plans(data, config, weights)
    sampler = TripletSampler(data.g1, rng)
    params = table.data
    state = AdamState.zeros_like(params)
    steps = max(1, -(-data.g1.num_edges // config.batch_size))
    n1 = data.n_users + data.n_items

    log: list[dict] = []
    best_metric = -np.inf
    best_params: np.ndarray | None = None
    best_epoch = None

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        sums = {"loss": 0.0, "loss_g1": 0.0, "loss_g2": 0.0}
        for _ in range(steps):
            batch = sampler.sample(config.batch_size)
            layers1 = forward(params[:n1], plan1, config.layers) \
                if plan1 is not None else None
            layers2 = forward(params, plan2, config.layers) \
                if plan2 is not None else None
            losses = batch_loss(batch, layers1, layers2, config, data.n_users)
            grad = compute_gradients(batch, layers1, layers2, plan1, plan2,
                                     config, params.shape[0])
            adam_step(params, grad, state, config.lr)
            for k in sums:
                sums[k] += losses[k]
        record = {"epoch": epoch,
                  "loss": sums["loss"] / steps,
                  "loss_g1": sums["loss_g1"] / steps,
                  "loss_g2": sums["loss_g2"] / steps,
                  "wall_time": time.perf_counter() - t0}

        if data.split is not None and epoch % config.eval_every == 0:
            reps = final_representations(table, plan1, plan2, config.layers)
            ranks = evaluation.rank_events(reps, data.split, which="validation")
            record["val_hr10"] = evaluation.hr_at_k(ranks, 10)
            record["val_ndcg10"] = evaluation.ndcg_at_k(ranks, 10)
            if record["val_ndcg10"] > best_metric:
                best_metric = record["val_ndcg10"]
                best_params = params.copy()
                best_epoch = epoch
            log.append(record)
            if config.patience and epoch - best_epoch >= config.patience:
                break
        else:
            log.append(record)

    if best_params is not None:
        params[...] = best_params
    return FitResult(table=table, log=log, weights=weights,
                     plan1=plan1, plan2=plan2, best_epoch=best_epoch)

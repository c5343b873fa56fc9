"""Dataset loading, filtering, id remapping, synthesis, and persistence.

File formats are plain UTF-8 tab-separated text with ``#`` comment lines:

* interactions: ``user<TAB>item``
* entities:     ``item<TAB>entity<TAB>kind`` with kind in {visual, textual}
* sentiments:   ``item<TAB>score`` with score in [0, 1]; repeated rows for
  one item are treated as per-review scores and averaged

Entity keys are namespaced by kind: a visual "backpack" and a textual
"backpack" are distinct nodes.  Checkpoints are a little-endian binary
container (versioned header, JSON metadata, raw arrays) that round-trips
embeddings, config, split, and id maps losslessly.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    CorruptFileError,
    DataError,
    EmptyAfterFilterError,
    InfeasibleSpecError,
    ScoreOutOfRangeError,
    ShapeMismatchError,
    VersionMismatchError,
)
from .evaluation import EvalSplit
from .graph import build_interaction_graph, build_tripartite_graph
from .propagation import EmbeddingTable
from .sentiment import aggregate_review_scores
from .training import TrainConfig, TrainData

logger = logging.getLogger(__name__)

ENTITY_KINDS = ("visual", "textual")
CHECKPOINT_MAGIC = b"MGCF"
CHECKPOINT_VERSION = 1


@dataclass
class RawDataset:
    """String-keyed records as read from disk or the generator."""

    interactions: list[tuple[str, str]]
    item_entities: list[tuple[str, str, str]] = field(default_factory=list)
    item_sentiments: list[tuple[str, float]] = field(default_factory=list)


@dataclass
class MappedDataset:
    """Dense-indexed dataset plus the key<->index dictionaries."""

    num_users: int
    num_items: int
    num_entities: int
    edges: np.ndarray  # (E, 2)
    item_entity_edges: np.ndarray  # (K, 2)
    entity_kinds: list[str]  # per entity index
    sentiments: np.ndarray | None  # per item, None when no sentiment data
    user_keys: list[str]
    item_keys: list[str]
    entity_keys: list[str]  # "kind:key"


# ---------------------------------------------------------------------------
# file loading


def _rows(path, expected_fields: int):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != expected_fields:
                raise DataError(
                    f"{path}:{lineno}: expected {expected_fields} "
                    f"tab-separated fields, got {len(fields)}")
            if any(not f for f in fields):
                raise DataError(f"{path}:{lineno}: empty field")
            yield lineno, fields


def load_interactions(path) -> list[tuple[str, str]]:
    seen = set()
    out = []
    dupes = 0
    for _, (user, item) in _rows(path, 2):
        if (user, item) in seen:
            dupes += 1
            continue
        seen.add((user, item))
        out.append((user, item))
    if dupes:
        logger.warning("%s: collapsed %d repeated (user, item) rows", path,
                       dupes)
    return out


def load_entities(path) -> list[tuple[str, str, str]]:
    seen = set()
    out = []
    dupes = 0
    for lineno, (item, entity, kind) in _rows(path, 3):
        if kind not in ENTITY_KINDS:
            raise DataError(
                f"{path}:{lineno}: kind must be one of {ENTITY_KINDS}, "
                f"got {kind!r}")
        if (item, entity, kind) in seen:
            dupes += 1
            continue
        seen.add((item, entity, kind))
        out.append((item, entity, kind))
    if dupes:
        logger.warning("%s: collapsed %d repeated entity rows", path, dupes)
    return out


def load_sentiments(path) -> list[tuple[str, float]]:
    out = []
    for lineno, (item, score) in _rows(path, 2):
        try:
            value = float(score)
        except ValueError:
            raise DataError(f"{path}:{lineno}: score {score!r} is not a "
                            "number") from None
        if not 0.0 <= value <= 1.0:
            raise ScoreOutOfRangeError(
                f"{path}:{lineno}: score {value} outside [0, 1]")
        out.append((item, value))
    return out


def load_dataset(directory) -> RawDataset:
    """Read interactions.tsv plus optional entities.tsv / sentiments.tsv."""
    inter = os.path.join(directory, "interactions.tsv")
    ents = os.path.join(directory, "entities.tsv")
    sents = os.path.join(directory, "sentiments.tsv")
    raw = RawDataset(interactions=load_interactions(inter))
    if os.path.exists(ents):
        raw.item_entities = load_entities(ents)
    if os.path.exists(sents):
        raw.item_sentiments = load_sentiments(sents)
    return raw


def write_dataset(raw: RawDataset, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "interactions.tsv"), "w",
              encoding="utf-8") as fh:
        for user, item in raw.interactions:
            fh.write(f"{user}\t{item}\n")
    with open(os.path.join(directory, "entities.tsv"), "w",
              encoding="utf-8") as fh:
        for item, entity, kind in raw.item_entities:
            fh.write(f"{item}\t{entity}\t{kind}\n")
    if raw.item_sentiments:
        with open(os.path.join(directory, "sentiments.tsv"), "w",
                  encoding="utf-8") as fh:
            for item, score in raw.item_sentiments:
                fh.write(f"{item}\t{score!r}\n")


# ---------------------------------------------------------------------------
# filtering and remapping


def five_core_filter(raw: RawDataset, min_degree: int = 5) -> RawDataset:
    """Iteratively drop users/items with fewer than ``min_degree`` edges.

    Runs to a fixed point (removing a user can push an item below the
    threshold and vice versa), then drops entity and sentiment records of
    removed items.  Idempotent.
    """
    inter = raw.interactions
    while True:
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        for user, item in inter:
            users[user] = users.get(user, 0) + 1
            items[item] = items.get(item, 0) + 1
        keep = [(u, i) for u, i in inter
                if users[u] >= min_degree and items[i] >= min_degree]
        if len(keep) == len(inter):
            break
        inter = keep
    if not inter:
        raise EmptyAfterFilterError(
            f"no interactions survive {min_degree}-core filtering")
    surviving = {item for _, item in inter}
    return RawDataset(
        interactions=inter,
        item_entities=[r for r in raw.item_entities if r[0] in surviving],
        item_sentiments=[r for r in raw.item_sentiments if r[0] in surviving],
    )


def filter_entity_kinds(raw: RawDataset, visual: bool = True,
                        textual: bool = True) -> RawDataset:
    """Keep only the requested entity kinds (the modality ablations)."""
    keep = {k for k, flag in zip(ENTITY_KINDS, (visual, textual)) if flag}
    return RawDataset(
        interactions=raw.interactions,
        item_entities=[r for r in raw.item_entities if r[2] in keep],
        item_sentiments=raw.item_sentiments,
    )


def remap_ids(raw: RawDataset) -> MappedDataset:
    """Assign contiguous indices in first-appearance order.

    Items mentioned only in entity or sentiment files (never interacted
    with) are dropped with a warning; entities whose items were all
    dropped disappear with them, so the result never contains dangling
    entities.
    """
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    for user, item in raw.interactions:
        users.setdefault(user, len(users))
        items.setdefault(item, len(items))
    edges = np.array([[users[u], items[i]] for u, i in raw.interactions],
                     dtype=np.int64).reshape(-1, 2)

    entities: dict[str, int] = {}
    ie_edges = []
    skipped = 0
    for item, entity, kind in raw.item_entities:
        if item not in items:
            skipped += 1
            continue
        key = f"{kind}:{entity}"
        entities.setdefault(key, len(entities))
        ie_edges.append((items[item], entities[key]))
    if skipped:
        logger.warning("dropped %d entity rows for items without "
                       "interactions", skipped)
    ie = np.array(ie_edges, dtype=np.int64).reshape(-1, 2)

    sentiments = None
    if raw.item_sentiments:
        per_item: list[list[float]] = [[] for _ in items]
        missing_rows = 0
        for item, score in raw.item_sentiments:
            if item not in items:
                missing_rows += 1
                continue
            per_item[items[item]].append(score)
        if missing_rows:
            logger.warning("dropped %d sentiment rows for items without "
                           "interactions", missing_rows)
        uncovered = sum(1 for scores in per_item if not scores)
        if uncovered:
            logger.warning("%d items have no sentiment score; "
                           "assigning 1.0", uncovered)
        sentiments = aggregate_review_scores(
            [scores if scores else [1.0] for scores in per_item])

    kinds = [key.split(":", 1)[0] for key in entities]
    return MappedDataset(
        num_users=len(users), num_items=len(items), num_entities=len(entities),
        edges=edges, item_entity_edges=ie, entity_kinds=kinds,
        sentiments=sentiments,
        user_keys=list(users), item_keys=list(items),
        entity_keys=list(entities))


def prepare_training_data(mapped: MappedDataset, split: EvalSplit,
                          config: TrainConfig) -> TrainData:
    """Build the training graphs from the split's training edges."""
    g1 = build_interaction_graph(split.train_edges, mapped.num_users,
                                 mapped.num_items)
    tg = None
    if config.use_g2_branch:
        tg = build_tripartite_graph(g1, mapped.item_entity_edges,
                                    mapped.num_entities)
    return TrainData(g1=g1, tg=tg, item_sentiments=mapped.sentiments,
                     split=split)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale dataset with plantable entity and sentiment structure."""

    num_users: int = 500
    num_items: int = 300
    num_entities: int = 60
    latent_dim: int = 8
    entity_signal: float = 0.8  # 0 = entities independent of interactions
    sentiment_signal: float = 0.8  # 0 = sentiment is pure noise
    target_density: float = 0.02
    seed: int = 0
    entities_per_item: int = 3


def generate_synthetic(spec: SyntheticSpec) -> RawDataset:
    """Draw a dataset whose interactions follow planted latent factors.

    Users and items get latent vectors; interaction probability scales
    with factor affinity times item quality.  Entities are anchored to
    latent-space directions, so at high ``entity_signal`` co-membership
    tracks item similarity, while at 0 membership is independent noise.
    Sentiment mirrors item quality, corrupted toward uniform noise as
    ``sentiment_signal`` drops.  Minimum degree 5 on both sides is
    enforced by construction; the target density is respected when it is
    compatible with that floor, otherwise the floor wins.
    """
    nu, ni, ne = spec.num_users, spec.num_items, spec.num_entities
    if nu < 5 or ni < 5:
        raise InfeasibleSpecError("need at least 5 users and 5 items for "
                                  "5-core feasibility")
    if not (0 < spec.target_density <= 1):
        raise InfeasibleSpecError("target_density must lie in (0, 1]")
    if ne > 0 and spec.entities_per_item > ne:
        raise InfeasibleSpecError("entities_per_item exceeds entity count")
    if not (0 <= spec.entity_signal <= 1 and 0 <= spec.sentiment_signal <= 1):
        raise InfeasibleSpecError("signal strengths must lie in [0, 1]")

    rng = np.random.default_rng(spec.seed)
    h = max(1, spec.latent_dim)
    zu = rng.normal(size=(nu, h))
    zi = rng.normal(size=(ni, h))
    quality = rng.uniform(0.3, 1.0, size=ni)

    total = int(round(spec.target_density * nu * ni))
    total = min(max(total, 5 * nu), nu * (ni - 1))
    base, extra = divmod(total, nu)
    per_user = np.full(nu, base, dtype=np.int64)
    per_user[:extra] += 1
    per_user = np.clip(per_user, 5, ni - 1)

    affinity = (zu @ zi.T) / np.sqrt(h)
    logits = 2.5 * affinity + np.log(quality)[None, :]
    adj = np.zeros((nu, ni), dtype=bool)
    for u in range(nu):
        p = np.exp(logits[u] - logits[u].max())
        p /= p.sum()
        picked = rng.choice(ni, size=int(per_user[u]), replace=False, p=p)
        adj[u, picked] = True

    # Repair items below the degree floor with their highest-affinity
    # users, swapping out one of the user's spare low-affinity edges so
    # the total edge count (and so the density) stays put when possible.
    item_deg = adj.sum(axis=0)
    user_deg = adj.sum(axis=1)
    for i in range(ni):
        for u in np.argsort(-affinity[:, i], kind="stable"):
            if item_deg[i] >= 5:
                break
            if adj[u, i] or user_deg[u] >= ni - 1:
                continue
            adj[u, i] = True
            item_deg[i] += 1
            user_deg[u] += 1
            owned = np.flatnonzero(adj[u])
            spare = owned[item_deg[owned] > 5]
            if spare.size:
                drop = spare[np.argmin(affinity[u, spare])]
                adj[u, drop] = False
                item_deg[drop] -= 1
                user_deg[u] -= 1

    interactions = [(f"u{u}", f"i{i}") for u, i in np.argwhere(adj)]

    item_entities: list[tuple[str, str, str]] = []
    if ne > 0:
        centers = rng.normal(size=(ne, h))
        ent_affinity = zi @ centers.T
        half = ne // 2
        for i in range(ni):
            ranked = np.argsort(-ent_affinity[i], kind="stable")
            chosen: list[int] = []
            for _ in range(spec.entities_per_item):
                if rng.random() < spec.entity_signal:
                    pick = next(e for e in ranked if e not in chosen)
                else:
                    remaining = np.setdiff1d(np.arange(ne), chosen)
                    pick = int(rng.choice(remaining))
                chosen.append(int(pick))
            for e in chosen:
                kind = "visual" if e < half else "textual"
                name = f"v{e}" if e < half else f"t{e - half}"
                item_entities.append((f"i{i}", name, kind))

    qn = (quality - quality.min()) / max(quality.max() - quality.min(), 1e-12)
    noise = rng.uniform(size=ni)
    scores = spec.sentiment_signal * (0.05 + 0.9 * qn) \
        + (1.0 - spec.sentiment_signal) * noise
    item_sentiments = [(f"i{i}", float(scores[i])) for i in range(ni)]

    return RawDataset(interactions=interactions, item_entities=item_entities,
                      item_sentiments=item_sentiments)


# ---------------------------------------------------------------------------
# checkpoint persistence


@dataclass
class Checkpoint:
    config: TrainConfig
    table: EmbeddingTable
    split: EvalSplit
    mapped: MappedDataset


def _array_meta(name, arr):
    return {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}


def save_checkpoint(path, config: TrainConfig, table: EmbeddingTable,
                    split: EvalSplit, mapped: MappedDataset) -> None:
    """Write a versioned binary checkpoint; byte-stable for fixed inputs."""
    arrays = {
        "embeddings": np.ascontiguousarray(table.data, dtype="<f8"),
        "edges": np.ascontiguousarray(mapped.edges, dtype="<i8"),
        "item_entity_edges": np.ascontiguousarray(mapped.item_entity_edges,
                                                  dtype="<i8"),
        "test_items": np.ascontiguousarray(split.test_items, dtype="<i8"),
        "val_items": np.ascontiguousarray(split.val_items, dtype="<i8"),
        "train_edges": np.ascontiguousarray(split.train_edges, dtype="<i8"),
        "negatives": np.ascontiguousarray(split.negatives, dtype="<i8"),
    }
    if mapped.sentiments is not None:
        arrays["sentiments"] = np.ascontiguousarray(mapped.sentiments,
                                                    dtype="<f8")
    header = {
        "config": asdict(config),
        "counts": {"users": mapped.num_users, "items": mapped.num_items,
                   "entities": mapped.num_entities, "dim": table.dim},
        "entity_kinds": mapped.entity_kinds,
        "user_keys": mapped.user_keys,
        "item_keys": mapped.item_keys,
        "entity_keys": mapped.entity_keys,
        "arrays": [_array_meta(k, v) for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(arr.tobytes())


def load_checkpoint(path, expect_dim: int | None = None) -> Checkpoint:
    """Read a checkpoint; refuses unknown versions and mismatched shapes."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != CHECKPOINT_MAGIC:
        raise CorruptFileError(f"{path}: not a checkpoint file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: checkpoint version {version}, expected "
            f"{CHECKPOINT_VERSION}")
    blob_len = struct.unpack("<Q", raw[8:16])[0]
    try:
        header = json.loads(raw[16:16 + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: bad header ({exc})") from None

    offset = 16 + blob_len
    arrays = {}
    for meta in header["arrays"]:
        dtype = np.dtype(meta["dtype"])
        shape = tuple(meta["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise CorruptFileError(f"{path}: truncated array "
                                   f"{meta['name']!r}")
        arrays[meta["name"]] = np.frombuffer(
            raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
            offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CorruptFileError(f"{path}: {len(raw) - offset} trailing bytes")

    counts = header["counts"]
    n = counts["users"] + counts["items"] + counts["entities"]
    emb = arrays["embeddings"]
    if emb.shape != (n, counts["dim"]):
        raise ShapeMismatchError(
            f"{path}: embeddings shaped {emb.shape}, header says "
            f"({n}, {counts['dim']})")
    if expect_dim is not None and counts["dim"] != expect_dim:
        raise ShapeMismatchError(
            f"{path}: checkpoint dim {counts['dim']} != requested "
            f"{expect_dim}")

    config = TrainConfig(**header["config"])
    table = EmbeddingTable(emb, counts["users"], counts["items"],
                           counts["entities"])
    split = EvalSplit(
        num_users=counts["users"], num_items=counts["items"],
        test_items=arrays["test_items"], val_items=arrays["val_items"],
        train_edges=arrays["train_edges"], negatives=arrays["negatives"])
    mapped = MappedDataset(
        num_users=counts["users"], num_items=counts["items"],
        num_entities=counts["entities"], edges=arrays["edges"],
        item_entity_edges=arrays["item_entity_edges"],
        entity_kinds=header["entity_kinds"],
        sentiments=arrays.get("sentiments"),
        user_keys=header["user_keys"], item_keys=header["item_keys"],
        entity_keys=header["entity_keys"])
    return Checkpoint(config=config, table=table, split=split, mapped=mapped)

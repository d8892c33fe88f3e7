"""Weighted-L2 training over synthetic scenes and the split evaluation protocol."""

import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .baseline import logic_predict
from .datagen import render_scene_inputs, scene_input_parts
from .errors import InvalidParameterError, TrainingDivergedError, UndefinedLossError
from .matcher import PairKind, decide, pair_accuracy, score_pairs
from .relgraph import build_graph, forward_graph, init_model, propagate_features, save_model


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    neg_weight scales negative candidates in the loss; neg_keep < 1 drops a
    fraction of negative candidates outright; small_object_mask toggles the
    too-small-object filter. These mirror the ablation knobs of the model.
    """

    epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.9
    neg_weight: float = 0.1
    neg_keep: float = 1.0
    batch_size: int = 4
    seed: int = 0
    feature_dim: int = 64
    gcn_depth: int = 2
    gat_hidden: int = 64
    extractor_hidden: tuple = (64,)
    small_object_mask: bool = True
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise InvalidParameterError("learning rate must be non-negative")
        if self.neg_weight < 0:
            raise InvalidParameterError("negative-sample weight must be >= 0")
        if not (0.0 < self.neg_keep <= 1.0):
            raise InvalidParameterError("neg_keep must lie in (0, 1]")
        if self.batch_size < 1:
            raise InvalidParameterError("batch size must be >= 1")


def build_targets(scene, graph):
    """Symmetric 0/1 target matrix over graph nodes from ground truth."""
    index = {obj_id: node for node, (obj_id, _) in enumerate(graph.object_index)}
    target = np.zeros((graph.n, graph.n))
    for wheel_id, vehicle_id in scene.gt_wheel_vehicle.items():
        i, j = index[wheel_id], index[vehicle_id]
        target[i, j] = target[j, i] = 1.0
    for couple in scene.gt_wheel_wheel:
        a, b = (index[x] for x in couple)
        target[a, b] = target[b, a] = 1.0
    return target


def _loss_weights(target, mask, neg_weight):
    if target.shape != mask.shape:
        raise InvalidParameterError("target and mask shapes differ")
    if not mask.any():
        raise UndefinedLossError("no masked candidate entries")
    weights = np.where(target > 0.5, 1.0, neg_weight) * mask
    total = weights.sum()
    if total <= 0.0:
        raise UndefinedLossError("all candidate weights are zero")
    return weights, total


def weighted_l2_loss(scores, target, mask, neg_weight):
    """Weighted mean squared error over masked candidates.

    Positives weigh 1, negatives `neg_weight`; the sum is normalized by the
    total weight so the value is comparable across scene sizes.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != np.asarray(target).shape:
        raise InvalidParameterError("scores and target shapes differ")
    weights, total = _loss_weights(np.asarray(target), np.asarray(mask, dtype=bool), neg_weight)
    diff = scores - target
    return float((weights * diff * diff).sum() / total)


def _loss_node(score_tensor, target, mask, neg_weight):
    """Tape version of weighted_l2_loss."""
    weights, total = _loss_weights(target, mask, neg_weight)
    diff = nn.sub(score_tensor, nn.constant(target))
    weighted = nn.mul(nn.mul(diff, diff), nn.constant(weights))
    return nn.scale(nn.sum_all(weighted), 1.0 / total)


def scene_scores(graph, inputs, model):
    """Forward pass through embeddings to the cosine score matrix, on the tape."""
    h = forward_graph(graph, inputs, model)
    normalized = nn.l2_normalize_rows(h)
    return nn.matmul(normalized, normalized, tb=True)


def _batch_features(bundles, model):
    """Extractor pass over a whole batch using the channel-structured op.

    Returns the stacked hidden features and per-bundle row ranges. Matches
    extract_node_features up to float associativity at a fraction of the
    GEMM width.
    """
    crops = np.vstack([b.crops for b in bundles])
    quads = np.vstack([b.quads for b in bundles])
    contexts = [b.context for b in bundles]
    slices = []
    offset = 0
    for b in bundles:
        n = b.crops.shape[0]
        slices.append((offset, offset + n))
        offset += n
    first = model.extractor[0]
    h = nn.dense_channels(crops, contexts, quads, slices, first.weight, first.bias)
    if len(model.extractor) > 1:
        h = nn.relu(h)
        for layer in model.extractor[1:-1]:
            h = nn.relu(layer.apply(h))
        h = model.extractor[-1].apply(h)
    return h, slices


def _subsample_negatives(mask, target, keep, rng):
    """Drop each negative candidate pair with probability 1 - keep."""
    out = mask.copy()
    n = mask.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if out[i, j] and target[i, j] == 0.0 and rng.random() >= keep:
                out[i, j] = out[j, i] = False
    return out


@dataclass
class _SceneBundle:
    """Per-scene training artifacts cached across epochs."""

    scene: object
    graph: object
    target: np.ndarray
    crops: np.ndarray
    context: np.ndarray
    quads: np.ndarray


def train(scenes, priors, config):
    """Fit model parameters on `scenes`; returns (model, per-epoch mean loss).

    Scenes are shuffled per epoch; each batch shares one extractor pass,
    gradients are accumulated over the batch and applied in one momentum-SGD
    step. Fully deterministic per seed.
    """
    if not scenes:
        raise InvalidParameterError("training needs at least one scene")
    model = init_model(
        feature_dim=config.feature_dim,
        gcn_depth=config.gcn_depth,
        gat_hidden=config.gat_hidden,
        extractor_hidden=config.extractor_hidden,
        seed=config.seed,
    )
    prepared = []
    for scene in scenes:
        graph = build_graph(scene, priors, small_object_mask=config.small_object_mask)
        target = build_targets(scene, graph)
        weights = np.where(target > 0.5, 1.0, config.neg_weight) * graph.mask
        if weights.sum() > 0.0:
            crops, context, quads = scene_input_parts(scene)
            # centered once here; mirrors the public extractor path
            prepared.append(
                _SceneBundle(scene, graph, target, crops - 0.5, context - 0.5, quads - 0.5)
            )
    if not prepared:
        raise UndefinedLossError("no scene contributes any weighted candidate pair")

    optimizer = nn.SGD(model.parameters(), lr=config.learning_rate, momentum=config.momentum)
    rng = np.random.default_rng([config.seed, 1])
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        losses = []
        for start in range(0, len(order), config.batch_size):
            optimizer.zero_grad()
            bundles = [prepared[idx] for idx in order[start:start + config.batch_size]]
            features, slices = _batch_features(bundles, model)
            batch_losses = []
            for bundle, (lo, hi) in zip(bundles, slices):
                mask = bundle.graph.mask
                if config.neg_keep < 1.0:
                    mask = _subsample_negatives(
                        bundle.graph.mask, bundle.target, config.neg_keep, rng
                    )
                    weights = np.where(bundle.target > 0.5, 1.0, config.neg_weight) * mask
                    if not weights.sum() > 0.0:
                        continue
                h = propagate_features(nn.rows(features, np.arange(lo, hi)), bundle.graph, model)
                normalized = nn.l2_normalize_rows(h)
                scores = nn.matmul(normalized, normalized, tb=True)
                batch_losses.append(_loss_node(scores, bundle.target, mask, config.neg_weight))
            if not batch_losses:
                continue
            total = batch_losses[0]
            for extra in batch_losses[1:]:
                total = nn.add(total, extra)
            nn.backward(total)
            optimizer.step()
            losses.extend(float(l.data) for l in batch_losses)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(epoch)
        history.append(mean_loss)
    if config.checkpoint_path:
        save_model(model, config.checkpoint_path)
    return model, history


def predict_scene(scene, priors, model, threshold=0.5, small_object_mask=True):
    """Retained pairs of one scene under the learned pipeline."""
    graph = build_graph(scene, priors, small_object_mask=small_object_mask)
    inputs = render_scene_inputs(scene)
    embeddings = forward_graph(graph, inputs, model).data
    return decide(score_pairs(embeddings, graph), threshold)


_KINDS = (("wv", PairKind.WHEEL_VEHICLE), ("ww", PairKind.WHEEL_WHEEL), ("all", None))


def evaluate(model, priors, splits, threshold=0.5, include_baseline=True,
             small_object_mask=True):
    """Mean pair accuracy per split, method and pair kind.

    Returns a list of row dicts ordered deterministically: method, split,
    pair kind (wv / ww / all), accuracy, and the number of scenes that had
    candidates of that kind.
    """
    methods = ["gcn"]
    if include_baseline:
        methods.append("logic")
    rows = []
    for method in methods:
        for split_name, scenes in splits.items():
            if not scenes:
                raise InvalidParameterError(f"split {split_name!r} is empty")
            sums = {label: 0.0 for label, _ in _KINDS}
            counts = {label: 0 for label, _ in _KINDS}
            for scene in scenes:
                if method == "gcn":
                    retained = predict_scene(
                        scene, priors, model, threshold=threshold,
                        small_object_mask=small_object_mask,
                    )
                else:
                    retained = logic_predict(scene, priors)
                for label, kind in _KINDS:
                    acc = pair_accuracy(
                        retained, scene, kind=kind, small_object_mask=small_object_mask
                    )
                    if acc is not None:
                        sums[label] += acc
                        counts[label] += 1
            for label, _ in _KINDS:
                rows.append({
                    "method": method,
                    "split": split_name,
                    "pairs": label,
                    "accuracy": sums[label] / counts[label] if counts[label] else None,
                    "scenes": counts[label],
                })
    return rows


def metrics_table(rows):
    """Fixed-width text rendering of evaluate() rows."""
    lines = [f"{'method':<8}{'split':<8}{'pairs':<7}{'accuracy':>9}  {'scenes':>6}"]
    for row in rows:
        acc = "   n/a" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
        lines.append(
            f"{row['method']:<8}{row['split']:<8}{row['pairs']:<7}{acc:>9}  {row['scenes']:>6}"
        )
    return "\n".join(lines) + "\n"


def metrics_json(rows):
    return json.dumps(rows, indent=2) + "\n"

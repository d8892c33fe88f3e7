"""Relation graph over detected objects and the graph-network forward pass.

Per scene: one node per box, edge weights seeded by the mixture priors,
attention-refined per layer, then aggregated with row-normalized message
passing. The final per-object embeddings are compared by cosine similarity
downstream.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .datagen import INPUT_CHANNELS, INPUT_SIZE, is_small
from .errors import FormatError, NormalizationError, ShapeError
from .geometry import BoxClass
from .priors import init_adjacency

INPUT_DIM = INPUT_SIZE * INPUT_SIZE * INPUT_CHANNELS

CHECKPOINT_MAGIC = "wheelgraph-checkpoint"
CHECKPOINT_VERSION = "v1"


@dataclass
class RelGraph:
    """Static structure of one scene's graph.

    adjacency is symmetric with a unit diagonal and structural zeros on
    vehicle-vehicle pairs (and, when small-object filtering is on, on any
    pair touching a too-small box). mask marks the candidate pairs that
    participate in scoring and loss.
    """

    adjacency: np.ndarray
    mask: np.ndarray
    object_index: tuple
    node_features: np.ndarray | None = None

    @property
    def n(self):
        return self.adjacency.shape[0]


def build_graph(scene, priors, small_object_mask=True):
    """Assemble the relation graph of a scene from the fitted priors."""
    adjacency = init_adjacency(scene, priors)
    n = len(scene.boxes)
    classes = np.array([box.cls is BoxClass.VEHICLE for box in scene.boxes])
    candidate = ~(classes[:, None] & classes[None, :])
    np.fill_diagonal(candidate, False)
    if small_object_mask:
        small = np.array([is_small(box, scene) for box in scene.boxes])
        keep = ~(small[:, None] | small[None, :])
        candidate &= keep
        off = ~np.eye(n, dtype=bool)
        adjacency[off & ~keep] = 0.0
    index = tuple((box.id, box.cls) for box in scene.boxes)
    return RelGraph(adjacency=adjacency, mask=candidate, object_index=index)


def graph_edges(adjacency):
    """Directed (src, dst) index arrays of all nonzero off-diagonal entries."""
    off = adjacency.copy()
    np.fill_diagonal(off, 0.0)
    return np.nonzero(off > 0.0)


@dataclass
class GatParams:
    """Edge scorer: concat(h_i, h_j) -> fc -> relu -> fc -> scalar."""

    fc1: nn.DenseLayer
    fc2: nn.DenseLayer

    def score_edges(self, h, src, dst):
        """Raw attention scores of the given directed edges, on the tape."""
        x = nn.concat_cols(nn.rows(h, src), nn.rows(h, dst))
        s = self.fc2.apply(nn.relu(self.fc1.apply(x)))
        return nn.reshape(s, (-1,))


@dataclass
class ModelParams:
    """All trainable weights: extractor stack, message-passing layers, edge scorer."""

    extractor: list
    gcn_layers: list
    gat: GatParams

    def __post_init__(self):
        if not self.extractor or not self.gcn_layers:
            raise ShapeError("model needs at least one extractor and one graph layer")
        dims = [self.extractor[0].in_dim]
        for layer in self.extractor:
            if layer.in_dim != dims[-1]:
                raise ShapeError("extractor layer dimensions do not chain")
            dims.append(layer.out_dim)
        f = dims[-1]
        for layer in self.gcn_layers:
            if layer.in_dim != f or layer.out_dim != f:
                raise ShapeError(f"graph layers must map {f} -> {f}")
        if self.gat.fc1.in_dim != 2 * f or self.gat.fc2.out_dim != 1:
            raise ShapeError("edge scorer must take 2F inputs and emit one score")
        if self.gat.fc2.in_dim != self.gat.fc1.out_dim:
            raise ShapeError("edge scorer layers do not chain")

    @property
    def feature_dim(self):
        return self.extractor[-1].out_dim

    @property
    def input_dim(self):
        return self.extractor[0].in_dim

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.extractor):
            out.append((f"extractor.{i}.weight", layer.weight))
            out.append((f"extractor.{i}.bias", layer.bias))
        for i, layer in enumerate(self.gcn_layers):
            out.append((f"gcn.{i}.weight", layer.weight))
            out.append((f"gcn.{i}.bias", layer.bias))
        out.append(("gat.fc1.weight", self.gat.fc1.weight))
        out.append(("gat.fc1.bias", self.gat.fc1.bias))
        out.append(("gat.fc2.weight", self.gat.fc2.weight))
        out.append(("gat.fc2.bias", self.gat.fc2.bias))
        return out

    def parameters(self):
        return [tensor for _, tensor in self.named_parameters()]


def init_model(
    feature_dim=64,
    gcn_depth=2,
    gat_hidden=64,
    extractor_hidden=(64,),
    input_dim=INPUT_DIM,
    seed=0,
):
    """Seeded balanced-uniform initialization of the full parameter set."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *extractor_hidden, feature_dim]
    extractor = [nn.DenseLayer.init(a, b, rng) for a, b in zip(dims, dims[1:])]
    gcn_layers = [nn.DenseLayer.init(feature_dim, feature_dim, rng) for _ in range(gcn_depth)]
    gat = GatParams(
        fc1=nn.DenseLayer.init(2 * feature_dim, gat_hidden, rng),
        fc2=nn.DenseLayer.init(gat_hidden, 1, rng),
    )
    return ModelParams(extractor=extractor, gcn_layers=gcn_layers, gat=gat)


def extract_node_features(inputs, extractor):
    """Flatten each object tensor and run the extractor stack.

    Inputs are centered to [-0.5, 0.5] before the first layer, which keeps
    plain SGD well conditioned. Hidden layers use relu; the final layer is
    linear. Returns the N x F feature tensor on the tape.
    """
    flat = []
    for tensor in inputs:
        arr = np.asarray(tensor, dtype=np.float64)
        if arr.shape != (INPUT_SIZE, INPUT_SIZE, INPUT_CHANNELS):
            raise ShapeError(
                f"node input must be {INPUT_SIZE}x{INPUT_SIZE}x{INPUT_CHANNELS}, got {arr.shape}"
            )
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise NormalizationError("node input values must lie in [0, 1]")
        # channel-major flatten keeps each channel a contiguous weight block
        flat.append(arr.transpose(2, 0, 1).reshape(-1) - 0.5)
    h = nn.constant(np.stack(flat))
    for layer in extractor[:-1]:
        h = nn.relu(layer.apply(h))
    return extractor[-1].apply(h)


def gat_scale(graph, node, gat, features=None):
    """Attention coefficients over one node's neighbors.

    Returns (neighbor_indices, coefficients); both empty for an isolated
    node. Coefficients are positive and sum to 1.
    """
    h = graph.node_features if features is None else features
    if h is None:
        raise ShapeError("graph has no node features")
    row = graph.adjacency[node].copy()
    row[node] = 0.0
    neighbors = np.nonzero(row > 0.0)[0]
    if neighbors.size == 0:
        return neighbors, np.zeros(0)
    h_t = nn.constant(h)
    src = np.full(neighbors.size, node, dtype=np.intp)
    scores = gat.score_edges(h_t, src, neighbors)
    coeffs = nn.softmax(scores)
    return neighbors, coeffs.data


def scale_matrix(graph, gat, features=None):
    """N x N matrix of attention coefficients, one softmax per source row."""
    n = graph.n
    scales = np.zeros((n, n))
    for node in range(n):
        neighbors, coeffs = gat_scale(graph, node, gat, features=features)
        scales[node, neighbors] = coeffs
    return scales


def refine_edges(adjacency, scales):
    """Rescale every edge by its attention coefficient.

    Structural zeros are preserved by the product; the diagonal self-loops
    are pinned back to 1.
    """
    refined = adjacency * scales
    np.fill_diagonal(refined, 1.0)
    return refined


def _propagate(h, adjacency, gat, layer, activate=True):
    """One graph layer on the tape: attention refine, row-normalize, aggregate."""
    n = adjacency.shape[0]
    src, dst = graph_edges(adjacency)
    if src.size > 0:
        scores = gat.score_edges(h, src, dst)
        coeffs = nn.edge_softmax(scores, src, n)
        refined_values = nn.mul(coeffs, nn.constant(adjacency[src, dst]))
        refined = nn.scatter_matrix(refined_values, src, dst, n, diag=1.0)
    else:
        refined = nn.constant(np.eye(n))
    a_hat = nn.normalize_rows(refined)
    pre = layer.apply(nn.matmul(a_hat, h))
    return nn.relu(pre) if activate else pre


def propagate_features(h, graph, model):
    """Run every graph layer over feature tensor `h`.

    The last graph layer is linear: embeddings feed a cosine comparison, and
    confining them to the non-negative orthant caps how far apart unrelated
    objects can score.
    """
    last = len(model.gcn_layers) - 1
    for i, layer in enumerate(model.gcn_layers):
        h = _propagate(h, graph.adjacency, model.gat, layer, activate=i != last)
    return h


def forward_graph(graph, inputs, model):
    """Tape forward pass: extractor then every graph layer. Returns N x F."""
    return propagate_features(extract_node_features(inputs, model.extractor), graph, model)


def gcn_layer(refined_adjacency, features, layer):
    """One aggregation step on plain arrays: relu(layer(row_norm(A) @ h))."""
    out = nn.relu(
        layer.apply(nn.matmul(nn.normalize_rows(nn.constant(refined_adjacency)), nn.constant(features)))
    )
    return out.data


def forward(scene, inputs, priors, model, small_object_mask=True):
    """Embeddings of every object in a scene, as a plain N x F array."""
    graph = build_graph(scene, priors, small_object_mask=small_object_mask)
    return forward_graph(graph, inputs, model).data


def _format_block(name, array):
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    lines = [f"param {name} {arr.shape[0]} {arr.shape[1]}"]
    for row in arr:
        lines.append(" ".join(repr(float(v)) for v in row))
    return lines


def serialize_model(model):
    hidden = [layer.out_dim for layer in model.extractor[:-1]]
    hidden_txt = ",".join(str(h) for h in hidden) if hidden else "-"
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"arch input={model.input_dim} extractor={hidden_txt} "
        f"feature={model.feature_dim} gcn={len(model.gcn_layers)} "
        f"gat={model.gat.fc1.out_dim}",
    ]
    for name, tensor in model.named_parameters():
        lines.extend(_format_block(name, tensor.data))
    return "\n".join(lines) + "\n"


def parse_model(text):
    lines = text.splitlines()
    if len(lines) < 2 or lines[0].split() != [CHECKPOINT_MAGIC, CHECKPOINT_VERSION]:
        if lines and lines[0].startswith(CHECKPOINT_MAGIC):
            raise FormatError(f"unsupported checkpoint version: {lines[0]!r}")
        raise FormatError("not a checkpoint file")
    arch = {}
    for item in lines[1].split()[1:]:
        key, value = item.split("=", 1)
        arch[key] = value
    try:
        hidden = () if arch["extractor"] == "-" else tuple(
            int(v) for v in arch["extractor"].split(",")
        )
        model = init_model(
            feature_dim=int(arch["feature"]),
            gcn_depth=int(arch["gcn"]),
            gat_hidden=int(arch["gat"]),
            extractor_hidden=hidden,
            input_dim=int(arch["input"]),
            seed=0,
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed architecture line: {lines[1]!r}") from exc

    expected = dict(model.named_parameters())
    pos = 2
    seen = set()
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        parts = lines[pos].split()
        if parts[0] != "param" or len(parts) != 4:
            raise FormatError(f"expected a param block at line {pos + 1}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        if name not in expected:
            raise FormatError(f"unknown parameter {name!r}")
        target = expected[name]
        declared = (rows, cols)
        actual = target.data.shape if target.data.ndim == 2 else (1, target.data.shape[0])
        if declared != actual:
            raise FormatError(f"shape mismatch for {name}: file {declared}, model {actual}")
        pos += 1
        block = np.empty((rows, cols))
        for r in range(rows):
            values = np.array(lines[pos].split(), dtype=np.float64)
            if values.shape[0] != cols:
                raise FormatError(f"row length mismatch in {name} at line {pos + 1}")
            block[r] = values
            pos += 1
        target.data[...] = block if target.data.ndim == 2 else block[0]
        seen.add(name)
    missing = set(expected) - seen
    if missing:
        raise FormatError(f"checkpoint is missing parameters: {sorted(missing)}")
    return model


def save_model(model, path):
    with open(str(path), "w", encoding="ascii") as fh:
        fh.write(serialize_model(model))


def load_model(path):
    with open(str(path), encoding="ascii") as fh:
        return parse_model(fh.read())

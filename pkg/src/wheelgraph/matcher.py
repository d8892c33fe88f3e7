"""Turn final embeddings into pair decisions and score them against ground truth."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .datagen import is_small
from .errors import FormatError, ShapeError
from .geometry import BoxClass

DEFAULT_THRESHOLD = 0.5

PREDICTIONS_MAGIC = "wheelgraph-predictions"
PREDICTIONS_VERSION = "v1"


class PairKind(Enum):
    WHEEL_VEHICLE = "wv"
    WHEEL_WHEEL = "ww"


@dataclass(frozen=True)
class PairPrediction:
    """A scored candidate pair; subject is always a wheel."""

    subject_id: int
    object_id: int
    kind: PairKind
    score: float

    def key(self):
        if self.kind is PairKind.WHEEL_VEHICLE:
            return (self.kind, self.subject_id, self.object_id)
        return (self.kind, *sorted((self.subject_id, self.object_id)))


def cosine(a, b):
    """Cosine similarity with zero-norm vectors scoring 0."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a / na, b / nb))


def score_pairs(embeddings, graph):
    """Cosine-score every mask-true candidate pair of a graph."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] != graph.n:
        raise ShapeError(
            f"embeddings rows ({embeddings.shape[0]}) must match graph nodes ({graph.n})"
        )
    predictions = []
    for i in range(graph.n):
        for j in range(i + 1, graph.n):
            if not graph.mask[i, j]:
                continue
            id_i, cls_i = graph.object_index[i]
            id_j, cls_j = graph.object_index[j]
            score = cosine(embeddings[i], embeddings[j])
            if cls_i is BoxClass.WHEEL and cls_j is BoxClass.WHEEL:
                a, b = sorted((id_i, id_j))
                predictions.append(PairPrediction(a, b, PairKind.WHEEL_WHEEL, score))
            else:
                wheel = id_i if cls_i is BoxClass.WHEEL else id_j
                vehicle = id_j if cls_i is BoxClass.WHEEL else id_i
                predictions.append(PairPrediction(wheel, vehicle, PairKind.WHEEL_VEHICLE, score))
    return predictions


def decide(predictions, threshold=DEFAULT_THRESHOLD):
    """Retain pairs scoring strictly above the threshold.

    Each wheel keeps at most its best-scoring vehicle; ties go to the lower
    vehicle id. Wheel-wheel pairs are kept by threshold alone.
    """
    retained = []
    best_vehicle = {}
    for pred in predictions:
        if not pred.score > threshold:
            continue
        if pred.kind is PairKind.WHEEL_WHEEL:
            retained.append(pred)
            continue
        cur = best_vehicle.get(pred.subject_id)
        if cur is None or (-pred.score, pred.object_id) < (-cur.score, cur.object_id):
            best_vehicle[pred.subject_id] = pred
    retained.extend(best_vehicle.values())
    return sorted(retained, key=lambda p: (p.kind.value, p.subject_id, p.object_id))


def candidate_pairs(scene, small_object_mask=True):
    """All candidate pair keys of a scene: wheel-vehicle and wheel-wheel
    combinations, minus pairs touching small objects when filtering is on."""
    wheels = scene.wheels()
    vehicles = scene.vehicles()
    if small_object_mask:
        wheels = [w for w in wheels if not is_small(w, scene)]
        vehicles = [v for v in vehicles if not is_small(v, scene)]
    keys = []
    for w in wheels:
        for v in vehicles:
            keys.append((PairKind.WHEEL_VEHICLE, w.id, v.id))
    for idx, a in enumerate(wheels):
        for b in wheels[idx + 1:]:
            keys.append((PairKind.WHEEL_WHEEL, *sorted((a.id, b.id))))
    return keys


def ground_truth_keys(scene):
    keys = {
        (PairKind.WHEEL_VEHICLE, wheel, vehicle)
        for wheel, vehicle in scene.gt_wheel_vehicle.items()
    }
    for couple in scene.gt_wheel_wheel:
        keys.add((PairKind.WHEEL_WHEEL, *sorted(couple)))
    return keys


def pair_accuracy(retained, scene, kind=None, small_object_mask=True):
    """Binary decision accuracy over the scene's candidate pairs.

    Counts a candidate as correct when its retained/not-retained status
    matches ground truth. Returns None when no candidates exist (the scene
    is then excluded from aggregates). `kind` restricts to one pair kind.
    """
    candidates = candidate_pairs(scene, small_object_mask=small_object_mask)
    if kind is not None:
        candidates = [c for c in candidates if c[0] is kind]
    if not candidates:
        return None
    truth = ground_truth_keys(scene)
    kept = {p.key() for p in retained}
    correct = sum(1 for c in candidates if (c in kept) == (c in truth))
    return correct / len(candidates)


def serialize_predictions(per_scene):
    """Prediction records: one scene header, then one line per retained pair."""
    lines = [f"{PREDICTIONS_MAGIC} {PREDICTIONS_VERSION}"]
    for scene_id, retained in per_scene:
        lines.append(f"scene {scene_id}")
        for pred in sorted(retained, key=lambda p: (p.kind.value, p.subject_id, p.object_id)):
            lines.append(
                f"{pred.kind.value} {pred.subject_id} {pred.object_id} {pred.score:.6f}"
            )
    return "\n".join(lines) + "\n"


def parse_predictions(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != [PREDICTIONS_MAGIC, PREDICTIONS_VERSION]:
        raise FormatError("not a predictions file")
    per_scene = []
    current = None
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "scene":
            current = (int(parts[1]), [])
            per_scene.append(current)
            continue
        if current is None or len(parts) != 4:
            raise FormatError(f"malformed prediction line: {line!r}")
        kind = PairKind(parts[0])
        current[1].append(
            PairPrediction(int(parts[1]), int(parts[2]), kind, float(parts[3]))
        )
    return per_scene

"""Geometry-only comparator: containment, IoU fallback, nearest-by-ratio.

Strong on clean scenes, deliberately fooled when several vehicle boxes
fully contain the same wheel, which is exactly the regime the learned
pipeline is meant to win.
"""

from .geometry import containment, distance_ratio, iou, normalized_distance
from .matcher import PairKind, PairPrediction

CONTAINMENT_THRESHOLD = 0.9


def logic_predict(scene, priors=None):
    """Rule-based pair decisions for one scene.

    Each wheel considers vehicles containing at least 90% of it, falling
    back to any overlapping vehicle; the winner is the candidate with the
    smallest size-normalized center distance. Wheels assigned to the same
    vehicle are coupled by horizontal adjacency. `priors` is accepted for
    interface parity with the learned pipeline and is not consulted.
    """
    del priors
    retained = []
    assigned = {}
    for wheel in scene.wheels():
        vehicles = scene.vehicles()
        candidates = [v for v in vehicles if containment(wheel, v) >= CONTAINMENT_THRESHOLD]
        if not candidates:
            candidates = [v for v in vehicles if iou(wheel, v) > 0.0]
        if not candidates:
            continue
        ranked = []
        for vehicle in candidates:
            d = normalized_distance(wheel, vehicle, scene.width, scene.height)
            ranked.append((distance_ratio(d, wheel, scene.width, scene.height), vehicle.id))
        _, winner = min(ranked)
        assigned.setdefault(winner, []).append(wheel)
        retained.append(PairPrediction(wheel.id, winner, PairKind.WHEEL_VEHICLE, 1.0))

    for _, wheels in sorted(assigned.items()):
        ordered = sorted(wheels, key=lambda w: (w.center()[0], w.id))
        for left, right in zip(ordered, ordered[1:]):
            a, b = sorted((left.id, right.id))
            retained.append(PairPrediction(a, b, PairKind.WHEEL_WHEEL, 1.0))
    return sorted(retained, key=lambda p: (p.kind.value, p.subject_id, p.object_id))

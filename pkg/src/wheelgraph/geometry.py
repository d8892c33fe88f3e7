"""Axis-aligned box arithmetic and size-normalized distance statistics.

Everything downstream (mixture priors, the heuristic baseline, scene
generation) shares these few primitives, so they are kept pure and
dependency-free.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import DomainError, InvalidBoxError, InvalidDimensionError


class BoxClass(Enum):
    VEHICLE = "vehicle"
    WHEEL = "wheel"


@dataclass(frozen=True)
class BoundingBox:
    """Pixel-space axis-aligned box with a class label and a scene-unique id."""

    id: int
    cls: BoxClass
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.id < 0:
            raise InvalidBoxError(f"box id must be non-negative, got {self.id}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidBoxError(
                f"degenerate box {self.id}: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height

    def center(self):
        """Center point (cx, cy); the position used in distance statistics."""
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0


@dataclass(frozen=True)
class Scene:
    """One annotated image: dimensions, boxes, and ground-truth pairings.

    gt_wheel_vehicle maps wheel id -> owning vehicle id; gt_wheel_wheel holds
    unordered front/rear couples as frozensets of two wheel ids.
    """

    scene_id: int
    width: float
    height: float
    boxes: tuple
    gt_wheel_vehicle: dict = field(default_factory=dict)
    gt_wheel_wheel: frozenset = field(default_factory=frozenset)
    difficulty: str = "easy"
    ambiguous: bool = False

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidDimensionError(
                f"scene {self.scene_id}: non-positive dimensions "
                f"{self.width}x{self.height}"
            )
        by_id = {}
        for box in self.boxes:
            if box.id in by_id:
                raise InvalidBoxError(f"duplicate box id {box.id}")
            if box.x_min < 0 or box.y_min < 0 or box.x_max > self.width or box.y_max > self.height:
                raise InvalidBoxError(
                    f"box {box.id} exceeds scene bounds {self.width}x{self.height}"
                )
            by_id[box.id] = box
        for wheel_id, vehicle_id in self.gt_wheel_vehicle.items():
            if by_id.get(wheel_id) is None or by_id[wheel_id].cls is not BoxClass.WHEEL:
                raise InvalidBoxError(f"gt wheel id {wheel_id} is not a wheel box")
            if by_id.get(vehicle_id) is None or by_id[vehicle_id].cls is not BoxClass.VEHICLE:
                raise InvalidBoxError(f"gt vehicle id {vehicle_id} is not a vehicle box")
        for couple in self.gt_wheel_wheel:
            if len(couple) != 2:
                raise InvalidBoxError(f"wheel couple {set(couple)} must have two ids")
            for wheel_id in couple:
                if by_id.get(wheel_id) is None or by_id[wheel_id].cls is not BoxClass.WHEEL:
                    raise InvalidBoxError(f"gt wheel id {wheel_id} is not a wheel box")
        object.__setattr__(self, "_by_id", by_id)

    def box(self, object_id):
        try:
            return self._by_id[object_id]
        except KeyError:
            raise KeyError(f"scene {self.scene_id} has no object {object_id}") from None

    def vehicles(self):
        return [b for b in self.boxes if b.cls is BoxClass.VEHICLE]

    def wheels(self):
        return [b for b in self.boxes if b.cls is BoxClass.WHEEL]


def normalized_distance(a, b, width, height):
    """Center distance between two boxes in image-normalized coordinates.

    Each center is divided by the image width/height first, so the result
    is dimensionless and lies in [0, sqrt(2)].
    """
    if width <= 0 or height <= 0:
        raise InvalidDimensionError(f"non-positive image size {width}x{height}")
    ax, ay = a.center()
    bx, by = b.center()
    return math.hypot(ax / width - bx / width, ay / height - by / height)


def distance_ratio(d, b, width, height):
    """Distance `d` expressed relative to the size of box `b`.

    Ratio = 2*d / (W_b + H_b) with the box dimensions normalized by the
    image size, which makes the ratio invariant under uniform rescaling of
    the whole scene.
    """
    if width <= 0 or height <= 0:
        raise InvalidDimensionError(f"non-positive image size {width}x{height}")
    if d < 0:
        raise DomainError(f"distance must be non-negative, got {d}")
    size = b.width / width + b.height / height
    if size <= 0:
        raise InvalidBoxError(f"box {b.id} has zero normalized size")
    return 2.0 * d / size


def log_ratio(ratio):
    """Natural log of a distance ratio; the quantity the priors are fit on."""
    if ratio <= 0:
        raise DomainError(f"ratio must be positive, got {ratio}")
    return math.log(ratio)


def iou(a, b):
    """Intersection-over-union of two boxes, in [0, 1]."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union


def containment(inner, outer):
    """Fraction of `inner`'s area covered by `outer`; 1.0 iff fully inside."""
    return _intersection_area(inner, outer) / inner.area


def _intersection_area(a, b):
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h

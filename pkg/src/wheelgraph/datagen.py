"""Synthetic detection scenes with ground-truth wheel/vehicle pairings.

Scenes imitate parked traffic seen by a driving camera: one or two
depth-ordered rows of vehicle rectangles, wheels in the bottom half of
their owner, optional containment-ambiguous cases where a neighbor's box
is enlarged until it fully swallows another vehicle's wheel, and optional
box jitter standing in for detector noise. The module also renders the
per-object 56x56x7 network inputs and provides the dataset file format.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, GenerationError, InvalidParameterError, PartitionError
from .geometry import BoundingBox, BoxClass, Scene

INPUT_SIZE = 56
INPUT_CHANNELS = 7
VEHICLE_INTENSITY = 0.5
WHEEL_INTENSITY = 1.0

# Candidate pairs involving boxes smaller than this fraction of the frame
# are masked out of scoring and loss.
SMALL_OBJECT_AREA_FRACTION = 0.0004

DATASET_MAGIC = "wheelgraph-dataset"
DATASET_VERSION = "v1"

EASY_MAX_VEHICLES = 3

_SCENE_ATTEMPTS = 50


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the scene generator.

    `ambiguity` is the probability, per adjacency slot (neighboring vehicles
    in a row, plus overlapping far/near row pairs), of enlarging one box
    until it fully contains the other vehicle's nearest wheel. `jitter` is
    the detector-noise sigma in pixels applied to every coordinate.
    """

    scenes: int = 100
    width: float = 800.0
    height: float = 600.0
    min_vehicles: int = 1
    max_vehicles: int = 3
    wheels_per_vehicle: int = 2
    ambiguity: float = 0.0
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.scenes < 0:
            raise InvalidParameterError(f"scene count must be non-negative, got {self.scenes}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("image size must be positive")
        if not (1 <= self.min_vehicles <= self.max_vehicles):
            raise InvalidParameterError(
                f"empty vehicle range [{self.min_vehicles}, {self.max_vehicles}]"
            )
        if self.wheels_per_vehicle not in (0, 1, 2):
            raise InvalidParameterError("wheels per vehicle must be 0, 1 or 2")
        if not (0.0 <= self.ambiguity <= 1.0):
            raise InvalidParameterError(f"ambiguity rate {self.ambiguity} outside [0, 1]")
        if self.jitter < 0:
            raise InvalidParameterError(f"jitter must be non-negative, got {self.jitter}")


def _place_row(rng, n, width, height, bottom_range, max_height_frac):
    """Left-to-right vehicle rectangles for one depth row, or None if unsatisfiable."""
    budget = rng.uniform(0.75, 0.97) * width
    shares = rng.uniform(0.8, 1.25, size=n)
    shares /= shares.sum()
    gaps = rng.uniform(0.004, 0.03, size=max(n - 1, 0)) * width
    avail = budget - gaps.sum()
    widths = shares * avail
    if np.any(widths < 24.0):
        return None
    y_bottom = rng.uniform(*bottom_range) * height
    aspects = rng.uniform(1.1, 1.9, size=n)
    heights = np.clip(widths / aspects, 24.0, max_height_frac * height)
    heights = np.minimum(heights, y_bottom)
    if np.any(heights < 24.0):
        return None
    x = rng.uniform(0.0, width - budget)
    boxes = []
    for i in range(n):
        boxes.append([x, y_bottom - heights[i], x + widths[i], y_bottom])
        x += widths[i]
        if i < n - 1:
            x += gaps[i]
    return boxes


def _place_wheels(rng, vehicle, count):
    """Wheel rectangles inside the bottom half of a vehicle rectangle."""
    x_min, y_min, x_max, y_max = vehicle
    vw = x_max - x_min
    vh = y_max - y_min
    slots = ["front", "rear"]
    if count == 1:
        slots = [slots[rng.integers(0, 2)]]
    elif count == 0:
        slots = []
    wheels = []
    for slot in slots:
        d = rng.uniform(0.22, 0.32) * vh
        frac = rng.uniform(0.15, 0.25)
        cx = x_min + frac * vw if slot == "front" else x_max - frac * vw
        cx = min(max(cx, x_min + d / 2), x_max - d / 2)
        bottom = y_max - rng.uniform(0.0, 0.04) * vh
        wheels.append([cx - d / 2, bottom - d, cx + d / 2, bottom])
    return wheels


def _steal_wheel(rng, thief, owner, wheel, width, height, extend_left):
    """Enlarge `thief` to fully contain `wheel`, placing the enlarged box's
    center closer to the wheel (in normalized coordinates) than the true
    owner's center whenever the geometry allows it. Mutates `thief`."""
    y0 = min(thief[1], max(0.0, wheel[1] - 1.0))
    y1 = max(thief[3], wheel[3])
    wcx = (wheel[0] + wheel[2]) / 2
    wcy = (wheel[1] + wheel[3]) / 2
    ocx = (owner[0] + owner[2]) / 2
    ocy = (owner[1] + owner[3]) / 2
    dist_owner = np.hypot((ocx - wcx) / width, (ocy - wcy) / height)
    dy = ((y0 + y1) / 2 - wcy) / height
    reach = dist_owner * dist_owner - dy * dy
    applied = False
    if reach > 0:
        # admissible center positions beat the owner's distance; intersect
        # with what the fixed opposite edge and the frame allow
        span = 0.9 * np.sqrt(reach) * width
        if extend_left:
            lo = max(wcx - span, thief[2] / 2)
            hi = min(wcx + span, (wheel[0] - 2.0 + thief[2]) / 2)
        else:
            lo = max(wcx - span, (thief[0] + wheel[2] + 2.0) / 2)
            hi = min(wcx + span, (thief[0] + width) / 2)
        if lo <= hi:
            cx = rng.uniform(lo, hi)
            # grow only: the thief may already span past the wheel from an
            # earlier enlargement, and its own wheels must stay contained
            if extend_left:
                thief[0] = min(thief[0], 2 * cx - thief[2])
            else:
                thief[2] = max(thief[2], 2 * cx - thief[0])
            applied = True
    if not applied:
        # no center placement can beat the owner; settle for containment
        margin = rng.uniform(0.2, 0.6) * (wheel[2] - wheel[0])
        if extend_left:
            thief[0] = min(thief[0], max(0.0, wheel[0] - margin))
        else:
            thief[2] = max(thief[2], min(width, wheel[2] + margin))
    thief[1] = y0
    thief[3] = y1


def _apply_ambiguity(rng, rows, vehicles, wheels_by_vehicle, rate, width, height):
    """Fire containment-ambiguous enlargements over the scene's adjacency slots.

    Slots are same-row neighbor pairs plus far-row/near-row pairs with
    overlapping horizontal extent; each fires independently with
    probability `rate`, and every vehicle grows at most once. Returns the
    number of enlargements applied.
    """
    slots = []
    for row in rows:
        for step in (1, 2):
            for left, right in zip(row, row[step:]):
                for nearest in (True, False):
                    slots.append((right, left, True, nearest))
                    slots.append((left, right, False, nearest))
    if len(rows) == 2:
        far, near = rows
        for f in far:
            fx = (vehicles[f][0] + vehicles[f][2]) / 2
            n = min(near, key=lambda i: abs((vehicles[i][0] + vehicles[i][2]) / 2 - fx))
            ncx = (vehicles[n][0] + vehicles[n][2]) / 2
            slots.append((n, f, ncx > fx, True))
    fired = 0
    for thief_idx, victim_idx, extend_left, nearest in slots:
        wheels = wheels_by_vehicle[victim_idx]
        if not wheels:
            continue
        if rng.random() >= rate:
            continue
        if extend_left == nearest:
            wheel = max(wheels, key=lambda w: w[2])
        else:
            wheel = min(wheels, key=lambda w: w[0])
        _steal_wheel(
            rng, vehicles[thief_idx], vehicles[victim_idx], wheel, width, height, extend_left
        )
        fired += 1
    return fired


def generate_scene(config, rng, scene_id=0):
    """One synthetic scene drawn from `rng`; retries placement a bounded number of times."""
    for _ in range(_SCENE_ATTEMPTS):
        n_vehicles = int(rng.integers(config.min_vehicles, config.max_vehicles + 1))
        if n_vehicles <= EASY_MAX_VEHICLES:
            row_counts = [(n_vehicles, (0.80, 0.95), 0.45)]
        else:
            far = n_vehicles // 2
            row_counts = [
                (far, (0.50, 0.62), 0.30),
                (n_vehicles - far, (0.80, 0.95), 0.45),
            ]
        rows_boxes = []
        for count, bottom_range, max_h in row_counts:
            placed = _place_row(rng, count, config.width, config.height, bottom_range, max_h)
            if placed is None:
                rows_boxes = None
                break
            rows_boxes.append(placed)
        if rows_boxes is None:
            continue

        vehicles = [box for row in rows_boxes for box in row]
        rows = []
        offset = 0
        for row in rows_boxes:
            rows.append(list(range(offset, offset + len(row))))
            offset += len(row)
        wheels_by_vehicle = [
            _place_wheels(rng, box, config.wheels_per_vehicle) for box in vehicles
        ]

        ambiguous = False
        if config.ambiguity > 0:
            fired = _apply_ambiguity(
                rng, rows, vehicles, wheels_by_vehicle,
                config.ambiguity, config.width, config.height,
            )
            ambiguous = fired > 0

        boxes = []
        gt_wv = {}
        gt_ww = set()
        next_id = 0
        for v_idx, vehicle in enumerate(vehicles):
            vehicle_id = next_id
            boxes.append((BoxClass.VEHICLE, vehicle))
            next_id += 1
            wheel_ids = []
            for wheel in wheels_by_vehicle[v_idx]:
                boxes.append((BoxClass.WHEEL, wheel))
                gt_wv[next_id] = vehicle_id
                wheel_ids.append(next_id)
                next_id += 1
            if len(wheel_ids) == 2:
                gt_ww.add(frozenset(wheel_ids))

        final = []
        ok = True
        for box_id, (cls, coords) in enumerate(boxes):
            coords = [float(c) for c in coords]
            if config.jitter > 0:
                coords = [c + rng.normal(0.0, config.jitter) for c in coords]
            x0 = min(max(coords[0], 0.0), config.width - 1.0)
            y0 = min(max(coords[1], 0.0), config.height - 1.0)
            x1 = min(max(coords[2], x0 + 1.0), config.width)
            y1 = min(max(coords[3], y0 + 1.0), config.height)
            if x1 <= x0 or y1 <= y0:
                ok = False
                break
            final.append(BoundingBox(box_id, cls, x0, y0, x1, y1))
        if not ok:
            continue

        return Scene(
            scene_id=scene_id,
            width=float(config.width),
            height=float(config.height),
            boxes=tuple(final),
            gt_wheel_vehicle=gt_wv,
            gt_wheel_wheel=frozenset(gt_ww),
            difficulty="easy" if n_vehicles <= EASY_MAX_VEHICLES else "hard",
            ambiguous=ambiguous,
        )
    raise GenerationError(f"could not place scene {scene_id} after {_SCENE_ATTEMPTS} attempts")


def generate_dataset(config):
    """All scenes of a config; each scene gets its own seed stream, so
    generation shards cleanly by index."""
    return [
        generate_scene(config, np.random.default_rng([config.seed, idx]), scene_id=idx)
        for idx in range(config.scenes)
    ]


def is_small(box, scene):
    return box.area < SMALL_OBJECT_AREA_FRACTION * scene.width * scene.height


def _rasterize(scene, region, size=INPUT_SIZE):
    """Class-coded silhouette image of every box intersecting `region`."""
    rx0, ry0, rx1, ry1 = region
    rw = rx1 - rx0
    rh = ry1 - ry0
    img = np.zeros((size, size))
    for intensity, cls in ((VEHICLE_INTENSITY, BoxClass.VEHICLE), (WHEEL_INTENSITY, BoxClass.WHEEL)):
        for box in scene.boxes:
            if box.cls is not cls:
                continue
            nx0 = (max(box.x_min, rx0) - rx0) / rw
            nx1 = (min(box.x_max, rx1) - rx0) / rw
            ny0 = (max(box.y_min, ry0) - ry0) / rh
            ny1 = (min(box.y_max, ry1) - ry0) / rh
            if nx1 <= nx0 or ny1 <= ny0:
                continue
            c0 = int(np.floor(nx0 * size))
            c1 = int(np.ceil(nx1 * size))
            r0 = int(np.floor(ny0 * size))
            r1 = int(np.ceil(ny1 * size))
            img[max(r0, 0):min(r1, size), max(c0, 0):min(c1, size)] = intensity
    return img


def _coordinate_channel(box, scene, size=INPUT_SIZE):
    half = size // 2
    channel = np.empty((size, size))
    channel[:half, :half] = box.x_min / scene.width
    channel[:half, half:] = box.y_min / scene.height
    channel[half:, :half] = box.x_max / scene.width
    channel[half:, half:] = box.y_max / scene.height
    return channel


def render_node_input(scene, object_id, _context=None):
    """The 56x56x7 input tensor of one object.

    Channels 0-2: silhouettes inside the object's own box; channels 3-5:
    whole-scene silhouettes; channel 6: the object's normalized corner
    coordinates as four constant quadrants.
    """
    box = scene.box(object_id)
    crop = _rasterize(scene, (box.x_min, box.y_min, box.x_max, box.y_max))
    context = _rasterize(scene, (0.0, 0.0, scene.width, scene.height)) if _context is None else _context
    tensor = np.empty((INPUT_SIZE, INPUT_SIZE, INPUT_CHANNELS))
    tensor[:, :, 0:3] = crop[:, :, None]
    tensor[:, :, 3:6] = context[:, :, None]
    tensor[:, :, 6] = _coordinate_channel(box, scene)
    return tensor


def render_scene_inputs(scene):
    """Node inputs for every box, in box order; the scene-level channels
    are rasterized once and shared."""
    context = _rasterize(scene, (0.0, 0.0, scene.width, scene.height))
    return [render_node_input(scene, box.id, _context=context) for box in scene.boxes]


def scene_input_parts(scene):
    """Compact equivalent of render_scene_inputs: per-object crop images,
    the shared context image, and the four normalized corner coordinates.

    The full tensor replicates the crop into channels 0-2, the context into
    3-5, and tiles the coordinates as quadrants of channel 6, so these
    pieces carry the same information at a seventh of the size.
    """
    context = _rasterize(scene, (0.0, 0.0, scene.width, scene.height)).reshape(-1)
    crops = np.stack([
        _rasterize(scene, (box.x_min, box.y_min, box.x_max, box.y_max)).reshape(-1)
        for box in scene.boxes
    ])
    quads = np.array([
        [box.x_min / scene.width, box.y_min / scene.height,
         box.x_max / scene.width, box.y_max / scene.height]
        for box in scene.boxes
    ])
    return crops, context, quads


def split_easy_hard(scenes, seed):
    """Partition into easy (<= 3 vehicles), hard (> 3) and a seeded
    half-and-half mixed sample."""
    easy = [s for s in scenes if len(s.vehicles()) <= EASY_MAX_VEHICLES]
    hard = [s for s in scenes if len(s.vehicles()) > EASY_MAX_VEHICLES]
    if not easy or not hard:
        raise PartitionError(
            f"need both kinds of scenes, got {len(easy)} easy / {len(hard)} hard"
        )
    half = min(len(easy), len(hard)) // 2
    if half == 0:
        raise PartitionError("too few scenes to build a mixed split")
    rng = np.random.default_rng(seed)
    easy_pick = sorted(rng.choice(len(easy), size=half, replace=False))
    hard_pick = sorted(rng.choice(len(hard), size=half, replace=False))
    mixed = [easy[i] for i in easy_pick] + [hard[i] for i in hard_pick]
    return easy, hard, mixed


def serialize_dataset(scenes):
    lines = [f"{DATASET_MAGIC} {DATASET_VERSION} {len(scenes)}"]
    for scene in scenes:
        lines.append(
            f"scene {scene.scene_id} {float(scene.width)!r} {float(scene.height)!r} "
            f"{len(scene.boxes)} {len(scene.gt_wheel_vehicle)} {len(scene.gt_wheel_wheel)}"
        )
        for box in scene.boxes:
            lines.append(
                f"box {box.id} {box.cls.value} {float(box.x_min)!r} {float(box.y_min)!r} "
                f"{float(box.x_max)!r} {float(box.y_max)!r}"
            )
        for wheel_id, vehicle_id in sorted(scene.gt_wheel_vehicle.items()):
            lines.append(f"pair wv {wheel_id} {vehicle_id}")
        for couple in sorted(scene.gt_wheel_wheel, key=sorted):
            a, b = sorted(couple)
            lines.append(f"pair ww {a} {b}")
        lines.append(f"tag {scene.difficulty} {'ambiguous' if scene.ambiguous else 'plain'}")
    return "\n".join(lines) + "\n"


def parse_dataset(text):
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty dataset file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != DATASET_MAGIC:
        raise FormatError(f"not a dataset file: {lines[0]!r}")
    if header[1] != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {header[1]!r}")
    n_scenes = int(header[2])

    scenes = []
    pos = 1
    for _ in range(n_scenes):
        if pos >= len(lines) or not lines[pos].startswith("scene "):
            raise FormatError(f"expected scene header at line {pos + 1}")
        _, sid, width, height, n_boxes, n_wv, n_ww = lines[pos].split()
        pos += 1
        boxes = []
        for _ in range(int(n_boxes)):
            parts = lines[pos].split()
            if parts[0] != "box" or len(parts) != 7:
                raise FormatError(f"malformed box line: {lines[pos]!r}")
            boxes.append(
                BoundingBox(
                    int(parts[1]),
                    BoxClass(parts[2]),
                    float(parts[3]),
                    float(parts[4]),
                    float(parts[5]),
                    float(parts[6]),
                )
            )
            pos += 1
        gt_wv = {}
        gt_ww = set()
        for _ in range(int(n_wv) + int(n_ww)):
            parts = lines[pos].split()
            if parts[0] != "pair" or len(parts) != 4:
                raise FormatError(f"malformed pair line: {lines[pos]!r}")
            if parts[1] == "wv":
                gt_wv[int(parts[2])] = int(parts[3])
            elif parts[1] == "ww":
                gt_ww.add(frozenset((int(parts[2]), int(parts[3]))))
            else:
                raise FormatError(f"unknown pair kind {parts[1]!r}")
            pos += 1
        parts = lines[pos].split()
        if parts[0] != "tag" or len(parts) != 3 or parts[1] not in ("easy", "hard"):
            raise FormatError(f"malformed tag line: {lines[pos]!r}")
        pos += 1
        scenes.append(
            Scene(
                scene_id=int(sid),
                width=float(width),
                height=float(height),
                boxes=tuple(boxes),
                gt_wheel_vehicle=gt_wv,
                gt_wheel_wheel=frozenset(gt_ww),
                difficulty=parts[1],
                ambiguous=parts[2] == "ambiguous",
            )
        )
    return scenes


def save_dataset(scenes, path):
    with open(str(path), "w", encoding="ascii") as fh:
        fh.write(serialize_dataset(scenes))


def load_dataset(path):
    with open(str(path), encoding="ascii") as fh:
        return parse_dataset(fh.read())

"""SVG visualization of a scene and its retained pairs.

Convention: red lines join coupled wheels, green lines join rear wheels to
their vehicle, blue lines front wheels. Within a couple the wheel with the
larger x-center counts as rear; wheels without a couple draw as front.
Object ids sit at the upper-left corner of each box.
"""

from .errors import RenderError
from .geometry import BoxClass
from .matcher import PairKind

VEHICLE_STROKE = "#444444"
WHEEL_STROKE = "#b36b00"
COUPLE_COLOR = "red"
REAR_COLOR = "green"
FRONT_COLOR = "blue"


def _center(scene, object_id):
    try:
        return scene.box(object_id).center()
    except KeyError as exc:
        raise RenderError(f"prediction references unknown object {object_id}") from exc


def render_svg(scene, pairs):
    """Serialize the scene and its pair predictions to an SVG document."""
    couples = [p for p in pairs if p.kind is PairKind.WHEEL_WHEEL]
    ownerships = [p for p in pairs if p.kind is PairKind.WHEEL_VEHICLE]

    rear_wheels = set()
    for pred in couples:
        a = scene.box(pred.subject_id) if _exists(scene, pred.subject_id) else None
        b = scene.box(pred.object_id) if _exists(scene, pred.object_id) else None
        if a is None or b is None:
            raise RenderError(
                f"couple ({pred.subject_id}, {pred.object_id}) references unknown objects"
            )
        rear = a if (a.center()[0], a.id) > (b.center()[0], b.id) else b
        rear_wheels.add(rear.id)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{scene.width:g}" '
        f'height="{scene.height:g}" viewBox="0 0 {scene.width:g} {scene.height:g}">'
    ]
    for box in scene.boxes:
        stroke = VEHICLE_STROKE if box.cls is BoxClass.VEHICLE else WHEEL_STROKE
        parts.append(
            f'  <rect x="{box.x_min:.3f}" y="{box.y_min:.3f}" '
            f'width="{box.width:.3f}" height="{box.height:.3f}" '
            f'fill="none" stroke="{stroke}" stroke-width="2"/>'
        )
        parts.append(
            f'  <text x="{box.x_min + 2:.3f}" y="{box.y_min + 12:.3f}" '
            f'font-size="12" fill="{stroke}">{box.id}</text>'
        )
    for pred in sorted(couples, key=lambda p: (p.subject_id, p.object_id)):
        parts.append(_line(scene, pred.subject_id, pred.object_id, COUPLE_COLOR))
    for pred in sorted(ownerships, key=lambda p: (p.subject_id, p.object_id)):
        color = REAR_COLOR if pred.subject_id in rear_wheels else FRONT_COLOR
        parts.append(_line(scene, pred.subject_id, pred.object_id, color))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _exists(scene, object_id):
    try:
        scene.box(object_id)
        return True
    except KeyError:
        return False


def _line(scene, id_a, id_b, color):
    (x1, y1), (x2, y2) = _center(scene, id_a), _center(scene, id_b)
    return (
        f'  <line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" '
        f'stroke="{color}" stroke-width="1.5"/>'
    )

"""Strict JSON scenario files.

Two document shapes are accepted. A grasp scenario has the top-level keys
``grasp_type``, ``fingers``, ``object``, ``excursion_schedule`` and the
optional ``hold_excursion`` and ``solver``::

    {
      "grasp_type": "OpposedPinch",
      "fingers": [
        {"base": {"position": [112.5, 0, 0], "azimuth_deg": 0},
         "params": {"preset": "default", "rest_angles": [0, 1.24]}},
        ...
      ],
      "object": {"kind": "cylinder", "width": 65, "center": [0, 0, 70]},
      "excursion_schedule": {"start": 5.0, "stop": 7.0, "count": 201},
      "solver": {"tolerance": 1e-8, "max_iterations": 500}
    }

``excursion_schedule`` is either an explicit list (mm) or an inclusive
``start/stop/count`` range. A single-finger equilibrium problem instead has
``finger``, ``tendon_excursion`` and optional ``obstacles`` and ``solver``.

Unknown keys anywhere are rejected. Errors name the offending field path.
"""

import copy
import json
import math
from importlib import resources

import numpy as np

from .equilibrium import Circle, EquilibriumProblem, HalfPlane
from .exceptions import ParseError, ValidationError
from .finger import FingerParams
from .grasp import FingerBase, FingerSpec, GraspObject, GraspScenario

_GRASP_KEYS = {"grasp_type", "fingers", "object", "excursion_schedule", "hold_excursion", "solver"}
_GRASP_REQUIRED = {"grasp_type", "fingers", "object", "excursion_schedule"}
_PROBLEM_KEYS = {"finger", "tendon_excursion", "obstacles", "solver"}
_SOLVER_DEFAULTS = {"tolerance": 1e-8, "max_iterations": 500}


def _obj(value, path, allowed, required=()):
    if not isinstance(value, dict):
        raise ValidationError(path or "<root>", "expected an object")
    for key in value:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ValidationError(where, "unknown key")
    for key in required:
        if key not in value:
            where = f"{path}.{key}" if path else key
            raise ValidationError(where, "required key missing")
    return value


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(path, "must be finite")
    return float(value)


def _numbers(value, path, size=None):
    if not isinstance(value, list):
        raise ValidationError(path, "expected a list of numbers")
    if size is not None and len(value) != size:
        raise ValidationError(path, f"expected {size} entries, got {len(value)}")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _prefixed(path, fn, *args, **kw):
    """Call ``fn``, re-rooting any ValidationError field under ``path``."""
    try:
        return fn(*args, **kw)
    except ValidationError as exc:
        field = exc.field.split(".")[-1]
        raise ValidationError(f"{path}.{field}", exc.constraint) from None


def _params(value, path):
    value = _obj(value, path, {f for f in FingerParams.__dataclass_fields__} | {"preset"})
    data = dict(value)
    preset = data.pop("preset", "default")
    if not isinstance(preset, str):
        raise ValidationError(f"{path}.preset", "expected a string")
    if "rest_angles" in data:
        data["rest_angles"] = tuple(_numbers(data["rest_angles"], f"{path}.rest_angles", 2))
    for key, v in data.items():
        if key != "rest_angles" and not (key == "travel_limit_stiffness" and v is None):
            data[key] = _number(v, f"{path}.{key}")
    return _prefixed(path, FingerParams.preset, preset, **data)


def _solver(value):
    value = _obj(value if value is not None else {}, "solver", set(_SOLVER_DEFAULTS))
    tol = _number(value.get("tolerance", _SOLVER_DEFAULTS["tolerance"]), "solver.tolerance")
    it = value.get("max_iterations", _SOLVER_DEFAULTS["max_iterations"])
    if isinstance(it, bool) or not isinstance(it, int):
        raise ValidationError("solver.max_iterations", "expected an integer")
    return tol, it


def _schedule(value):
    path = "excursion_schedule"
    if isinstance(value, dict):
        _obj(value, path, {"start", "stop", "count"}, {"start", "stop", "count"})
        start = _number(value["start"], f"{path}.start")
        stop = _number(value["stop"], f"{path}.stop")
        count = value["count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ValidationError(f"{path}.count", "expected an integer >= 1")
        # rounding keeps decimal grids exact, so files and outputs agree
        return tuple(float(v) for v in np.round(np.linspace(start, stop, count), 9))
    return tuple(_numbers(value, path))


def _grasp(doc):
    _obj(doc, "", _GRASP_KEYS, sorted(_GRASP_REQUIRED))
    if not isinstance(doc["fingers"], list):
        raise ValidationError("fingers", "expected a list")
    fingers = []
    for i, f in enumerate(doc["fingers"]):
        path = f"fingers[{i}]"
        _obj(f, path, {"base", "params"}, ("base",))
        base = _obj(f["base"], f"{path}.base", {"position", "azimuth_deg"}, ("position",))
        pos = _numbers(base["position"], f"{path}.base.position", 3)
        az = _number(base.get("azimuth_deg", 0.0), f"{path}.base.azimuth_deg")
        params = _params(f.get("params", {}), f"{path}.params")
        fingers.append(FingerSpec(_prefixed(f"{path}.base", FingerBase, tuple(pos), az), params))
    ob = _obj(doc["object"], "object", {"kind", "width", "center"}, ("kind", "width"))
    center = _numbers(ob.get("center", [0.0, 0.0, 0.0]), "object.center", 3)
    obj = GraspObject(ob["kind"], _number(ob["width"], "object.width"), tuple(center))
    tol, it = _solver(doc.get("solver"))
    hold = doc.get("hold_excursion")
    hold = None if hold is None else _number(hold, "hold_excursion")
    return GraspScenario(doc["grasp_type"], tuple(fingers), obj, _schedule(doc["excursion_schedule"]),
                         tol, it, hold)


def _obstacle(value, path):
    if not isinstance(value, dict) or "type" not in value:
        raise ValidationError(f"{path}.type", "required key missing")
    kind = value["type"]
    links = value.get("links", ["Proximal", "Distal"])
    if not isinstance(links, list):
        raise ValidationError(f"{path}.links", "expected a list")
    if kind == "half_plane":
        _obj(value, path, {"type", "point", "normal", "links"}, ("point", "normal"))
        return _prefixed(path, HalfPlane, tuple(_numbers(value["point"], f"{path}.point", 2)),
                         tuple(_numbers(value["normal"], f"{path}.normal", 2)), tuple(links))
    if kind == "circle":
        _obj(value, path, {"type", "center", "radius", "links"}, ("center", "radius"))
        return _prefixed(path, Circle, tuple(_numbers(value["center"], f"{path}.center", 2)),
                         _number(value["radius"], f"{path}.radius"), tuple(links))
    raise ValidationError(f"{path}.type", "expected half_plane or circle")


def _problem(doc):
    _obj(doc, "", _PROBLEM_KEYS, ("finger", "tendon_excursion"))
    params = _params(doc["finger"], "finger")
    obstacles = doc.get("obstacles", [])
    if not isinstance(obstacles, list):
        raise ValidationError("obstacles", "expected a list")
    obs = tuple(_obstacle(o, f"obstacles[{i}]") for i, o in enumerate(obstacles))
    tol, it = _solver(doc.get("solver"))
    e = _number(doc["tendon_excursion"], "tendon_excursion")
    return EquilibriumProblem(params, e, obs, tol, it)


def load_document(text):
    """Decode JSON text, raising ParseError on malformed input."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ParseError(f"malformed scenario: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object")
    return doc


def parse_document(doc):
    """Build a GraspScenario or EquilibriumProblem from a decoded document."""
    if "grasp_type" in doc:
        return _grasp(doc)
    if "finger" in doc:
        return _problem(doc)
    raise ValidationError("grasp_type", "required key missing")


def parse_scenario(text):
    """Parse scenario JSON text into a validated domain object.

    Raises
    ------
    ParseError
        The text is not a JSON object.
    ValidationError
        A field is missing, unknown or violates an invariant; ``field`` holds
        its dotted path.
    """
    return parse_document(load_document(text))


def _params_dict(p):
    d = p.to_dict()
    d["rest_angles"] = list(d["rest_angles"])
    return d


def to_document(obj):
    """Inverse of :func:`parse_document`; presets are expanded to explicit fields."""
    if isinstance(obj, GraspScenario):
        doc = {
            "grasp_type": obj.grasp_type.value,
            "fingers": [{"base": {"position": list(f.base.position), "azimuth_deg": f.base.azimuth_deg},
                         "params": _params_dict(f.params)} for f in obj.fingers],
            "object": {"kind": obj.object.kind.value, "width": obj.object.width,
                       "center": list(obj.object.center)},
            "excursion_schedule": list(obj.excursion_schedule),
            "solver": {"tolerance": obj.solver_tolerance, "max_iterations": int(obj.max_iterations)},
        }
        if obj.hold_excursion is not None:
            doc["hold_excursion"] = obj.hold_excursion
        return doc
    if isinstance(obj, EquilibriumProblem):
        obstacles = []
        for o in obj.obstacles:
            links = [l.value for l in o.links]
            if isinstance(o, HalfPlane):
                obstacles.append({"type": "half_plane", "point": list(o.point), "normal": list(o.normal),
                                  "links": links})
            else:
                obstacles.append({"type": "circle", "center": list(o.center), "radius": o.radius,
                                  "links": links})
        return {"finger": _params_dict(obj.params), "tendon_excursion": obj.tendon_excursion,
                "obstacles": obstacles,
                "solver": {"tolerance": obj.solver_tolerance, "max_iterations": int(obj.max_iterations)}}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def serialize_scenario(obj):
    return json.dumps(to_document(obj), indent=2) + "\n"


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(item):
    """Split ``key=value`` into a dotted path and a list of sweep values.

    Values are JSON when they decode, strings otherwise; ``|`` separates the
    values of a sweep.
    """
    if "=" not in item:
        raise ValidationError(item, "override must look like key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if not key:
        raise ValidationError(item, "empty override key")
    return key, [_parse_value(v) for v in raw.split("|")]


def apply_override(doc, key, value):
    """Return a copy of ``doc`` with the dotted ``key`` set to ``value``.

    List elements are addressed by index (``fingers.0.params.k_proximal``);
    ``*`` applies to every element. Keys must already be allowed by the
    schema; the strict parse catches anything else.
    """
    doc = copy.deepcopy(doc)
    parts = key.split(".")

    def walk(node, i):
        part = parts[i]
        last = i == len(parts) - 1
        if isinstance(node, list):
            if part == "*":
                targets = range(len(node))
            else:
                try:
                    targets = [int(part)]
                    node[targets[0]]
                except (ValueError, IndexError):
                    raise ValidationError(key, f"bad list index {part!r}") from None
            for t in targets:
                if last:
                    node[t] = copy.deepcopy(value)
                else:
                    walk(node[t], i + 1)
        elif isinstance(node, dict):
            if last:
                node[part] = copy.deepcopy(value)
            else:
                if part not in node:
                    node[part] = {}
                walk(node[part], i + 1)
        else:
            raise ValidationError(key, f"cannot descend into {type(node).__name__}")

    walk(doc, 0)
    return doc


def bundled_names():
    """Names of the scenario files shipped with the package."""
    root = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_text(name):
    path = resources.files(__package__) / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ValidationError("scenario", f"no bundled scenario {name!r}; choose from {bundled_names()}")
    return path.read_text(encoding="utf-8")


def bundled_scenario(name):
    """Parse one of the bundled scenario files by name (e.g. ``"power_65mm"``)."""
    return parse_scenario(bundled_text(name))

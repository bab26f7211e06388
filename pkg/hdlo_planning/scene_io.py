# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Scene, goal and result files.

All three are JSON documents carrying ``schema_version``. Scene and goal
files are parsed strictly: unknown keys are rejected with the dotted path of
the offending element.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from hdlo_planning import __version__
from hdlo_planning.assembly import Assembly, ClosureSpec, FrameRef, JointSpec, LinkSpec
from hdlo_planning.config import get_settings
from hdlo_planning.env_constraints import Aperture, validate_apertures
from hdlo_planning.exceptions import SceneFileError
from hdlo_planning.gvs_rod import MODE_NAMES, LinkGeometry, ReferenceStrain, StrainBasis
from hdlo_planning.liegroup import make_pose
from hdlo_planning.planners.keyframe import Goal

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENES_DIR = os.path.join(os.path.dirname(__file__), "scenes")

_SCENE_KEYS = {"schema_version", "name", "description", "gravity", "defaults", "links", "closures",
               "end_effector", "markers", "apertures", "start"}
_DEFAULT_KEYS = {"num_points", "basis_order", "statics_tol", "statics_max_iter", "goal_tol", "keyframes"}
_LINK_KEYS = {"name", "parent", "offset", "geometry", "joint", "basis", "num_points", "reference_strain"}
_GEOMETRY_KEYS = {"length", "kind", "section", "outer_diameter", "inner_diameter", "thickness",
                  "youngs_modulus", "poisson_ratio", "density", "mass"}
_JOINT_KEYS = {"kind", "axis", "actuated", "lower", "upper"}
_BASIS_KEYS = {"order", "modes"}
_FRAME_KEYS = {"link", "x", "offset"}
_CLOSURE_KEYS = {"kind", "frame_a", "frame_b"}
_APERTURE_KEYS = {"name", "center", "height", "radius", "link"}
_START_KEYS = {"q_a"}
_GOAL_KEYS = {"schema_version", "name", "kind", "target"}
_POSE_KEYS = {"rotation", "translation"}


@dataclass
class Scene:
    assembly: Assembly
    apertures: tuple = ()
    start_q_a: Optional[np.ndarray] = None
    defaults: dict = field(default_factory=dict)
    scene_hash: str = ""
    source: str = ""

    def settings(self):
        """Settings with the scene defaults applied on top of the environment."""
        keys = ("num_points", "basis_order", "statics_tol", "statics_max_iter", "goal_tol")
        return get_settings().with_overrides(**{k: self.defaults.get(k) for k in keys})


def _check_keys(doc, allowed, path, required=()):
    if not isinstance(doc, dict):
        raise SceneFileError(f"{path}: expected an object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SceneFileError(f"{path}: unknown key(s) {', '.join(unknown)}")
    for key in required:
        if key not in doc:
            raise SceneFileError(f"{path}: missing required key {key!r}")


def _array(value, shape, path):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise SceneFileError(f"{path}: expected numbers") from err
    if shape is not None and arr.shape != shape:
        raise SceneFileError(f"{path}: expected shape {shape}, got {arr.shape}")
    return arr


def _pose(value, path):
    if value is None:
        return None
    if isinstance(value, dict):
        _check_keys(value, _POSE_KEYS, path)
        rotation = _array(value["rotation"], (3, 3), f"{path}.rotation") if "rotation" in value else None
        translation = _array(value["translation"], (3,), f"{path}.translation") if "translation" in value else None
        return make_pose(rotation, translation)
    return _array(value, (4, 4), path)


def _frame(doc, path):
    _check_keys(doc, _FRAME_KEYS, path, required=("link",))
    return FrameRef(link=str(doc["link"]), x=float(doc.get("x", 1.0)), offset=_pose(doc.get("offset"), f"{path}.offset"))


def _modes(value, path):
    if value is None:
        return (True,) * 6
    if all(isinstance(v, bool) for v in value) and len(value) == 6:
        return tuple(value)
    unknown = [v for v in value if v not in MODE_NAMES]
    if unknown:
        raise SceneFileError(f"{path}: unknown strain mode(s) {unknown}; choose from {list(MODE_NAMES)}")
    return tuple(name in value for name in MODE_NAMES)


def _link(doc, path, defaults):
    _check_keys(doc, _LINK_KEYS, path, required=("name", "geometry"))
    geom_doc = doc["geometry"]
    _check_keys(geom_doc, _GEOMETRY_KEYS, f"{path}.geometry", required=("length",))
    geometry = LinkGeometry(**{k: (v if k in ("kind", "section") else float(v)) for k, v in geom_doc.items()})

    joint_doc = doc.get("joint", {})
    _check_keys(joint_doc, _JOINT_KEYS, f"{path}.joint")
    joint = JointSpec(
        kind=joint_doc.get("kind", "fixed"),
        axis=tuple(_array(joint_doc.get("axis", (0.0, 0.0, 1.0)), (3,), f"{path}.joint.axis")),
        actuated=bool(joint_doc.get("actuated", False)),
        lower=None if joint_doc.get("lower") is None else tuple(np.atleast_1d(_array(joint_doc["lower"], None, f"{path}.joint.lower"))),
        upper=None if joint_doc.get("upper") is None else tuple(np.atleast_1d(_array(joint_doc["upper"], None, f"{path}.joint.upper"))),
    )

    basis = None
    if geometry.kind == "deformable":
        basis_doc = doc.get("basis", {})
        _check_keys(basis_doc, _BASIS_KEYS, f"{path}.basis")
        order = int(basis_doc.get("order", defaults.get("basis_order", get_settings().basis_order)))
        basis = StrainBasis(order=order, modes=_modes(basis_doc.get("modes"), f"{path}.basis.modes"))
    elif "basis" in doc:
        raise SceneFileError(f"{path}.basis: rigid links take no strain basis")

    reference = ReferenceStrain()
    if doc.get("reference_strain") is not None:
        reference = ReferenceStrain(value=tuple(_array(doc["reference_strain"], (6,), f"{path}.reference_strain")))
    return LinkSpec(
        name=str(doc["name"]), geometry=geometry, joint=joint, parent=doc.get("parent"),
        offset=_pose(doc.get("offset"), f"{path}.offset"), basis=basis,
        num_points=None if doc.get("num_points") is None else int(doc["num_points"]),
        reference_strain=reference,
    )


def parse_scene(doc, source="<memory>"):
    """Build a validated Scene from a decoded JSON document."""
    _check_keys(doc, _SCENE_KEYS, "scene", required=("schema_version", "links"))
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SceneFileError(f"scene.schema_version: unsupported version {doc['schema_version']!r}")
    defaults = doc.get("defaults", {})
    _check_keys(defaults, _DEFAULT_KEYS, "scene.defaults")
    try:
        links = tuple(_link(l, f"links[{i}]", defaults) for i, l in enumerate(doc["links"]))
        closures = []
        for c, cdoc in enumerate(doc.get("closures", [])):
            _check_keys(cdoc, _CLOSURE_KEYS, f"closures[{c}]", required=("frame_a", "frame_b"))
            closures.append(ClosureSpec(frame_a=_frame(cdoc["frame_a"], f"closures[{c}].frame_a"),
                                        frame_b=_frame(cdoc["frame_b"], f"closures[{c}].frame_b"),
                                        kind=cdoc.get("kind", "fixed")))
        asm = Assembly(
            links=links, closures=tuple(closures),
            end_effector=_frame(doc["end_effector"], "end_effector") if doc.get("end_effector") else None,
            gravity=tuple(_array(doc.get("gravity", (0.0, 0.0, -9.81)), (3,), "gravity")),
            markers=tuple(_frame(m, f"markers[{i}]") for i, m in enumerate(doc.get("markers", []))),
            num_points=None if defaults.get("num_points") is None else int(defaults["num_points"]),
            name=str(doc.get("name", os.path.splitext(os.path.basename(source))[0])),
        )
        asm.layout  # validates
        apertures = []
        for k, adoc in enumerate(doc.get("apertures", [])):
            _check_keys(adoc, _APERTURE_KEYS, f"apertures[{k}]", required=("center", "height", "radius", "link"))
            apertures.append(Aperture(center=tuple(_array(adoc["center"], (2,), f"apertures[{k}].center")),
                                      height=float(adoc["height"]), radius=float(adoc["radius"]),
                                      link=str(adoc["link"]), name=str(adoc.get("name", f"aperture{k}"))))
        validate_apertures(asm, apertures)
    except (TypeError, KeyError) as err:
        raise SceneFileError(f"{source}: {err}") from err

    start = None
    if doc.get("start") is not None:
        _check_keys(doc["start"], _START_KEYS, "start", required=("q_a",))
        start = _array(doc["start"]["q_a"], (asm.layout.n_a,), "start.q_a")
    return Scene(assembly=asm, apertures=tuple(apertures), start_q_a=start, defaults=dict(defaults),
                 scene_hash=scene_hash(doc), source=source)


def scene_hash(doc):
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as err:
        raise SceneFileError(f"{path}: {err.strerror or err}") from err
    except json.JSONDecodeError as err:
        raise SceneFileError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err


def bundled(name):
    """Path of a bundled scene or goal file."""
    return os.path.join(SCENES_DIR, name if name.endswith(".json") else f"{name}.json")


def load_scene(path, num_points=None):
    """
    Parse a scene file; input problems surface as SceneFileError or
    MalformedAssembly. ``num_points`` overrides the scene default and enters the hash.
    """
    doc = _read_json(path)
    if num_points is not None and isinstance(doc, dict):
        doc.setdefault("defaults", {})["num_points"] = int(num_points)
    scene = parse_scene(doc, source=os.path.abspath(path))
    logger.debug("loaded scene %s (%s)", scene.assembly.name, scene.scene_hash[:12])
    return scene


def parse_goal(doc, source="<memory>"):
    _check_keys(doc, _GOAL_KEYS, "goal", required=("schema_version", "kind", "target"))
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SceneFileError(f"goal.schema_version: unsupported version {doc['schema_version']!r}")
    kind = doc["kind"]
    target = doc["target"]
    if kind == "position":
        value = _array(target, (3,), "goal.target")
    elif isinstance(target, dict):
        value = _pose(target, "goal.target")
    else:
        value = _array(target, None, "goal.target")
    return Goal(kind=kind, target=value, name=str(doc.get("name", os.path.basename(source))))


def load_goal(path):
    return parse_goal(_read_json(path), source=str(path))


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def result_document(command, scene, options, payload, seed=None):
    return to_jsonable({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "scene": scene.source,
        "scene_hash": scene.scene_hash,
        "options": options,
        "seed": seed,
        "version": __version__,
        **payload,
    })


def write_result(path, document):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_result(path):
    doc = _read_json(path)
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION or "command" not in doc:
        raise SceneFileError(f"{path}: not a result file")
    return doc


"""JSON serialization of domain objects and scenario parsing.

Floats go through Python's shortest round-trip repr, so parse(serialize(x))
reproduces every array bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .algebra import CylinderIsometry, MaximalNeckResult
from .detection import NeckCertificate, NeckParams, default_params
from .errors import InputError, ScenarioParseError
from .flow import FlowConfig, SurgeryConfig
from .graph import CylinderGraph, section_from_positions
from .history import SurgeryRecord
from .normal import Leaf, NormalityCertificate, NormalNeck
from .profile import (RadialProfile, cylinder_profile, dumbbell_profile, function_profile,
                      sphere_profile, waist_profile)
from .sphere_mesh import SphereMesh, icosphere

FORMAT_VERSION = 1


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _np(v, shape=None):
    a = np.asarray(v, dtype=float)
    return a.reshape(shape) if shape is not None else a


# ---- profiles and graphs ----------------------------------------------------------

def profile_to_dict(p: RadialProfile):
    return {"type": "RadialProfile", "n": p.n, "x": _arr(p.axis_samples), "r": _arr(p.radius),
            "ends": {"left": p.ends[0], "right": p.ends[1]}, "period": p.period}


def profile_from_dict(d):
    ends = d["ends"]
    if isinstance(ends, dict):
        ends = (ends["left"], ends["right"])
    return RadialProfile(int(d["n"]), _np(d["x"]), _np(d["r"]), tuple(ends), d.get("period"))


def mesh_to_dict(mesh: SphereMesh):
    if mesh.level >= 0 and mesh is icosphere(mesh.level):
        return {"level": mesh.level}
    return {"level": mesh.level, "vertices": _arr(mesh.vertices),
            "faces": np.asarray(mesh.faces).tolist()}


def mesh_from_dict(d):
    if "vertices" not in d:
        return icosphere(int(d["level"]))
    return SphereMesh(_np(d["vertices"]), np.asarray(d["faces"], dtype=np.int64), int(d["level"]))


def graph_to_dict(g: CylinderGraph):
    return {"type": "CylinderGraph", "a": g.a, "b": g.b, "mesh": mesh_to_dict(g.sphere_mesh),
            "heights": _arr(g.heights), "u": _arr(g.u), "scale": g.scale, "n": g.n,
            "u_norm": g.u_norm}


def graph_from_dict(d):
    mesh = mesh_from_dict(d["mesh"])
    return CylinderGraph(float(d["a"]), float(d["b"]), mesh, _np(d["heights"]),
                         _np(d["u"]), float(d["scale"]), int(d["n"]), d.get("u_norm"))


# ---- normal necks and certificates -------------------------------------------------

def _leaf_to_dict(lf: Leaf):
    return {"z": lf.z, "phi": _arr(lf.phi), "positions": _arr(lf.positions),
            "normals": _arr(lf.normals), "H": _arr(lf.H_values),
            "G": None if lf.G is None else _arr(lf.G), "label": lf.label,
            "rotation": _arr(lf.rotation), "energies": [float(e) for e in lf.energies],
            "newton_steps": lf.newton_steps}


def _leaf_from_dict(d, mesh):
    pos = _np(d["positions"])
    sec = section_from_positions(float(d["z"]), pos, mesh)
    return Leaf(float(d["z"]), _np(d["phi"]), pos, _np(d["normals"]), _np(d["H"]), sec,
                None if d["G"] is None else _np(d["G"]), d["label"], _np(d["rotation"]),
                [float(e) for e in d["energies"]], int(d["newton_steps"]))


def neck_to_dict(neck: NormalNeck):
    return {"type": "NormalNeck", "version": FORMAT_VERSION, "graph": graph_to_dict(neck.graph),
            "leaves": [_leaf_to_dict(lf) for lf in neck.foliation],
            "z_coordinate": _arr(neck.z_coordinate),
            "rotation_log": [_arr(r) for r in neck.rotation_log],
            "tolerances": dict(neck.tolerances)}


def neck_from_dict(d):
    if d.get("type") != "NormalNeck":
        raise InputError("not a NormalNeck document")
    graph = graph_from_dict(d["graph"])
    leaves = [_leaf_from_dict(lf, graph.sphere_mesh) for lf in d["leaves"]]
    return NormalNeck(graph, leaves, _np(d["z_coordinate"]),
                      [_np(r) for r in d["rotation_log"]], dict(d["tolerances"]))


def maximal_to_dict(res: MaximalNeckResult):
    out = res.to_dict()
    out["type"] = "MaximalNeckResult"
    out["neck"] = neck_to_dict(res.neck)
    return out


def maximal_from_dict(d):
    deck = d.get("deck_isometry")
    return MaximalNeckResult(d["kind"], neck_from_dict(d["neck"]), d.get("period"),
                             None if deck is None else CylinderIsometry.from_dict(deck),
                             d.get("label_period"), tuple(d["ends"]), tuple(d["end_reasons"]),
                             tuple(d["ends_capped"]))


def surgery_to_dict(rec: SurgeryRecord):
    cert = rec.pre_neck_certificate
    return {"time": rec.time, "region": list(rec.region), "cap_params": _plain(rec.cap_params),
            "pre_neck_certificate": None if cert is None else cert.to_dict()}


def surgery_from_dict(d):
    cert = d.get("pre_neck_certificate")
    return SurgeryRecord(d["time"], tuple(d["region"]), d["cap_params"],
                         None if cert is None else NeckCertificate.from_dict(cert))


def _plain(obj):
    """Nested numpy values -> JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def certificate_to_dict(cert):
    d = cert.to_dict()
    d["type"] = type(cert).__name__
    return d


def certificate_from_dict(d):
    if d.get("type") == "NormalityCertificate":
        return NormalityCertificate.from_dict(d)
    return NeckCertificate.from_dict(d)


# ---- files -----------------------------------------------------------------------

def dumps(obj, indent=1):
    return json.dumps(_plain(obj), indent=indent, allow_nan=True)


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(obj))


def read_json(path, error=InputError):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise error(f"cannot read {path}: {exc}") from exc


def save_neck(path, neck):
    write_json(path, neck_to_dict(neck))


def load_neck(path):
    d = read_json(path)
    try:
        return neck_from_dict(d)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed neck file {path}: {exc}") from exc


# ---- scenarios -------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    profile: RadialProfile
    detection: NeckParams
    flow: FlowConfig = field(default_factory=FlowConfig)
    surgery: SurgeryConfig = field(default_factory=SurgeryConfig)
    out: str | None = None
    raw: dict = field(default_factory=dict)


_BUILDERS = {
    "sphere": sphere_profile,
    "dumbbell": dumbbell_profile,
    "cylinder": cylinder_profile,
    "waist": waist_profile,
}


def _build_profile(spec):
    if "x" in spec and "r" in spec:
        return profile_from_dict(spec)
    kind = spec.get("kind")
    args = {k: v for k, v in spec.items() if k != "kind"}
    if kind in _BUILDERS:
        return _BUILDERS[kind](**args)
    if kind == "cosine":
        a, b = float(args.pop("mean", 1.0)), float(args.pop("amplitude", 0.01))
        length = float(args.pop("length", 2 * np.pi))
        return function_profile(lambda x: a + b * np.cos(2 * np.pi * x / length), 0.0, length,
                                ends=("periodic", "periodic"), **args)
    raise ScenarioParseError(f"unknown profile kind {kind!r}")


def _section(cls, d, name):
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ScenarioParseError(f"'{name}' must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ScenarioParseError(f"unknown keys in '{name}': {sorted(extra)}")
    return d


def parse_scenario(data, base_dir=None) -> Scenario:
    """Scenario from a parsed JSON object; profile given inline, as a builder
    spec ({"kind": ...}) or as a path to a profile file."""
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a JSON object")
    try:
        spec = data["profile"]
        if isinstance(spec, str):
            path = Path(spec) if base_dir is None else Path(base_dir) / spec
            if not path.exists():
                raise ScenarioParseError(f"profile file {path} does not exist")
            spec = read_json(path, ScenarioParseError)
        profile = _build_profile(spec)
        det = _section(NeckParams, data.get("detection"), "detection")
        detection = default_params(profile, **det)
        flow = FlowConfig(**_section(FlowConfig, data.get("flow"), "flow"))
        surgery = SurgeryConfig(**_section(SurgeryConfig, data.get("surgery"), "surgery"))
    except ScenarioParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioParseError(f"invalid scenario: {exc}") from exc
    return Scenario(str(data.get("name", "scenario")), profile, detection, flow, surgery,
                    data.get("out"), data)


def load_scenario(path) -> Scenario:
    data = read_json(path, ScenarioParseError)
    return parse_scenario(data, Path(path).parent)


def scenario_to_dict(sc: Scenario):
    from dataclasses import asdict
    return {"name": sc.name, "profile": profile_to_dict(sc.profile),
            "detection": asdict(sc.detection), "flow": asdict(sc.flow),
            "surgery": asdict(sc.surgery)}

"""Assemble a full hand from a design point and export it as URDF + STL."""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
import tempfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import palm as palm_mod
from .finger import build_chain, expand_structure, parse_finger_code
from .mesh import (
    DEFAULT_DENSITY,
    MassProps,
    TriMesh,
    ear_clip,
    extrude_polygon,
    is_convex,
    mass_props,
    read_stl,
    stl_bytes,
    watertight_check,
)
from .palm import BasePoseParams, PalmBody, PalmParams
from .space import DesignPoint
from .surface import DEFAULT_RESOLUTION, PadMesh, PadSpec, build_pad, decompose_pad, pad_kernels_from_point

FINGERS = ("index", "middle", "pinky")
EFFORT = 2.0  # N m
VELOCITY = 5.0  # rad/s


@dataclass(frozen=True)
class DigitSpec:
    code: str
    is_thumb: bool
    pose: BasePoseParams
    arc: float


@dataclass(frozen=True, eq=False)
class HandModel:
    name: str
    palm: PalmBody
    pad: PadMesh
    pad_pieces: tuple[TriMesh, ...]
    palm_colliders: tuple[TriMesh, ...]
    palm_mass: MassProps
    chains: dict  # digit -> FingerChain
    point: DesignPoint | None = None

    @property
    def joints(self):
        return [j for c in self.chains.values() for j in c.joints]

    @property
    def links(self):
        return [l for c in self.chains.values() for l in c.links]

    @property
    def n_links(self) -> int:
        return 1 + len(self.links)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def fingers(self) -> list[str]:
        return [d for d in self.chains if d != "thumb"]

    def collision_meshes(self) -> dict[str, list[TriMesh]]:
        out = {"palm": list(self.palm_colliders) + list(self.pad_pieces)}
        for l in self.links:
            out[l.name] = list(l.colliders)
        return out

    def visual_meshes(self) -> dict[str, TriMesh]:
        out = {"palm": self.palm.mesh}
        for l in self.links:
            out[l.name] = l.mesh
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, m in sorted(self.visual_meshes().items()):
            h.update(name.encode())
            h.update(stl_bytes(m))
        for name, ms in sorted(self.collision_meshes().items()):
            for m in ms:
                h.update(stl_bytes(m))
        return h.hexdigest()


def combine_mass(parts: list[MassProps]) -> MassProps:
    m = sum(p.mass for p in parts)
    com = sum(p.mass * p.com for p in parts) / m
    inertia = np.zeros((3, 3))
    for p in parts:
        d = p.com - com
        inertia += p.inertia + p.mass * (d @ d * np.eye(3) - np.outer(d, d))
    return MassProps(m, com, inertia)


def digit_specs_from_point(values) -> dict[str, DigitSpec]:
    fingers = FINGERS if values["finger_number"] == 3 else ("index", "pinky")
    specs = {}
    for f in fingers:
        pose = BasePoseParams(
            angle=values.get(f"{f}_angle", 0.0),
            normal_offset=values[f"{f}_normal_offset"],
            side_offset=values.get(f"{f}_side_offset", 0.0),
        )
        specs[f] = DigitSpec(values["finger_code"], False, pose, palm_mod.FINGER_ARCS[f])
    specs["thumb"] = DigitSpec(
        values["thumb_code"],
        True,
        BasePoseParams(values["thumb_angle"], values["thumb_normal_offset"], values["thumb_side_offset"]),
        palm_mod.THUMB_ARC,
    )
    return specs


def assemble(
    digits: dict[str, DigitSpec],
    pad: PadSpec,
    added_lengths=(0.0, 0.0, 0.0, 0.0),
    tip_scale=(1.0, 1.0),
    palm_params: PalmParams = PalmParams(),
    density: float = DEFAULT_DENSITY,
    name: str = "hand",
    point: DesignPoint | None = None,
) -> HandModel:
    """Build a hand from explicit digit specs; raises InfeasibleDesign."""
    outline = palm_mod.build_outline(palm_params.size, palm_params.sides, palm_params.aspect)
    poses = {d: s.pose for d, s in digits.items()}
    frames = palm_mod.place_bases(
        outline, {d: s.arc for d, s in digits.items()}, poses, z_top=palm_params.thickness
    )
    final = palm_mod.finalize_outline(outline, frames, poses)
    body = palm_mod.extrude_palm(final, palm_params.thickness)
    pad_mesh = build_pad(final, pad, z0=palm_params.thickness)
    pieces = tuple(decompose_pad(pad_mesh))
    colliders = tuple(
        extrude_polygon(final[tri], palm_params.thickness) for tri in ear_clip(final)
    )
    palm_mass = combine_mass([mass_props(body.mesh, density)] + [mass_props(p, density) for p in pieces])
    chains = {}
    for frame in frames:
        spec = digits[frame.digit]
        code = parse_finger_code(spec.code, spec.is_thumb)
        structure = expand_structure(code, added_lengths, tuple(tip_scale))
        chains[frame.digit] = build_chain(structure, frame, density)
    return HandModel(name, body, pad_mesh, pieces, colliders, palm_mass, chains, point)


def assemble_hand(point: DesignPoint, resolution: int = DEFAULT_RESOLUTION, name: str = "hand", **kw) -> HandModel:
    v = point.values
    pad = pad_kernels_from_point(v)
    pad = PadSpec(pad.max_height, pad.kernels, resolution)
    return assemble(
        digit_specs_from_point(v),
        pad,
        added_lengths=tuple(v[f"link{i}_added"] for i in range(4)),
        tip_scale=(v["tip_scale_y"], v["tip_scale_z"]),
        name=name,
        point=point,
        **kw,
    )


# ---------------------------------------------------------------- URDF


def _f(x) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return " ".join(_f(x) for x in v)


def matrix_to_rpy(R: np.ndarray) -> tuple[float, float, float]:
    """URDF fixed-axis roll/pitch/yaw with R = Rz(yaw) Ry(pitch) Rx(roll)."""
    sy = -R[2, 0]
    pitch = math.asin(max(-1.0, min(1.0, sy)))
    if abs(sy) < 1 - 1e-12:
        roll = math.atan2(R[2, 1], R[2, 2])
        yaw = math.atan2(R[1, 0], R[0, 0])
    else:
        roll = 0.0
        yaw = math.atan2(-R[0, 1], R[1, 1])
    return roll, pitch, yaw


def _inertial(parent, mp: MassProps):
    el = ET.SubElement(parent, "inertial")
    ET.SubElement(el, "origin", xyz=_vec(mp.com * 1e-3), rpy="0 0 0")
    ET.SubElement(el, "mass", value=_f(mp.mass))
    I = mp.inertia * 1e-6  # kg mm^2 -> kg m^2
    ET.SubElement(
        el,
        "inertia",
        ixx=_f(I[0, 0]),
        ixy=_f(I[0, 1]),
        ixz=_f(I[0, 2]),
        iyy=_f(I[1, 1]),
        iyz=_f(I[1, 2]),
        izz=_f(I[2, 2]),
    )


def _mesh_el(parent, tag, filename):
    el = ET.SubElement(parent, tag)
    ET.SubElement(el, "origin", xyz="0 0 0", rpy="0 0 0")
    geom = ET.SubElement(el, "geometry")
    ET.SubElement(geom, "mesh", filename=filename, scale="0.001 0.001 0.001")


def check_model(model: HandModel) -> None:
    """Structural and geometric invariants checked before export."""
    names = {"palm"} | {l.name for l in model.links}
    children = set()
    for j in model.joints:
        if j.parent not in names or j.child not in names:
            raise ValueError(f"joint {j.name} references a missing link")
        if j.child in children:
            raise ValueError(f"link {j.child} has two parents")
        children.add(j.child)
    if "palm" in children or children != names - {"palm"}:
        raise ValueError("joint tree must have the palm as single root")
    for name, m in model.visual_meshes().items():
        if not watertight_check(m):
            raise ValueError(f"visual mesh {name} is not watertight")
    for name, ms in model.collision_meshes().items():
        for m in ms:
            if not is_convex(m):
                raise ValueError(f"collision mesh of {name} is not convex")


def build_urdf(model: HandModel) -> tuple[ET.Element, dict[str, TriMesh]]:
    files: dict[str, TriMesh] = {}
    robot = ET.Element("robot", name=model.name)
    link_mass = {"palm": model.palm_mass}
    for l in model.links:
        link_mass[l.name] = l.mass
    visuals = model.visual_meshes()
    collisions = model.collision_meshes()
    for name in ["palm"] + [l.name for l in model.links]:
        el = ET.SubElement(robot, "link", name=name)
        _inertial(el, link_mass[name])
        vis = f"meshes/visual/{name}.stl"
        files[vis] = visuals[name]
        _mesh_el(el, "visual", vis)
        for i, m in enumerate(collisions[name]):
            col = f"meshes/collision/{name}_{i:03d}.stl"
            files[col] = m
            _mesh_el(el, "collision", col)
    for j in model.joints:
        el = ET.SubElement(robot, "joint", name=j.name, type="revolute")
        T = j.origin
        ET.SubElement(el, "origin", xyz=_vec(T[:3, 3] * 1e-3), rpy=_vec(matrix_to_rpy(T[:3, :3])))
        ET.SubElement(el, "parent", link=j.parent)
        ET.SubElement(el, "child", link=j.child)
        ET.SubElement(el, "axis", xyz=_vec(j.spec.axis))
        lo, hi = (math.radians(a) for a in j.spec.limits)
        ET.SubElement(el, "limit", lower=_f(lo), upper=_f(hi), effort=_f(EFFORT), velocity=_f(VELOCITY))
    ET.indent(robot)
    return robot, files


def export(model: HandModel, directory, design_json: bool = True) -> Path:
    """Write hand.urdf and meshes into ``directory`` (replaced atomically)."""
    check_model(model)
    robot, files = build_urdf(model)
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".export-", dir=directory.parent))
    try:
        for rel, m in files.items():
            p = tmp / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(stl_bytes(m))
        xml = ET.tostring(robot, encoding="unicode")
        (tmp / "hand.urdf").write_text('<?xml version="1.0"?>\n' + xml + "\n")
        if design_json and model.point is not None:
            (tmp / "design.json").write_text(json.dumps(model.point.to_json(), indent=2, sort_keys=True) + "\n")
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory / "hand.urdf"


@dataclass
class UrdfSummary:
    links: list[str]
    joints: list[dict]
    mesh_files: list[str]
    collision_files: list[str] = field(default_factory=list)


def read_urdf(path) -> UrdfSummary:
    root = ET.parse(path).getroot()
    links = [l.get("name") for l in root.findall("link")]
    joints = []
    for j in root.findall("joint"):
        lim = j.find("limit")
        joints.append(
            {
                "name": j.get("name"),
                "type": j.get("type"),
                "parent": j.find("parent").get("link"),
                "child": j.find("child").get("link"),
                "axis": [float(x) for x in j.find("axis").get("xyz").split()],
                "lower": float(lim.get("lower")),
                "upper": float(lim.get("upper")),
            }
        )
    meshes = [m.get("filename") for m in root.iter("mesh")]
    cols = [c.find("geometry/mesh").get("filename") for l in root.findall("link") for c in l.findall("collision")]
    return UrdfSummary(links, joints, meshes, cols)


def directory_digest(directory) -> str:
    h = hashlib.sha256()
    base = Path(directory)
    for p in sorted(base.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(base)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def load_exported_meshes(directory) -> dict[str, TriMesh]:
    s = read_urdf(Path(directory) / "hand.urdf")
    return {f: read_stl(Path(directory) / f) for f in s.mesh_files}

import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from handforge.finger import build_chain, expand_structure, parse_finger_code
from handforge.hand import (
    FINGERS,
    DigitSpec,
    assemble,
    assemble_hand,
    directory_digest,
    export,
    matrix_to_rpy,
    read_urdf,
)
from handforge.mesh import is_convex, read_stl, watertight_check
from handforge.palm import FINGER_ARCS, THUMB_ARC, BasePoseParams
from handforge.space import build_power_grasp_space
from handforge.surface import PadSpec


def test_assembly_is_deterministic(space):
    p = space.sample_uniform(11)
    assert assemble_hand(p).digest() == assemble_hand(p).digest()


def test_single_joint_codes_count():
    digits = {f: DigitSpec("0", False, BasePoseParams(), FINGER_ARCS[f]) for f in FINGERS}
    digits["thumb"] = DigitSpec("0", True, BasePoseParams(), THUMB_ARC)
    hand = assemble(digits, PadSpec())
    assert len(hand.chains) == 4
    # one Grasp joint per finger, one lateral base joint for the thumb
    assert hand.n_joints == 3 * 1 + 1
    assert all(j.spec.jtype == "Grasp" for c in hand.fingers for j in hand.chains[c].joints)


def test_two_finger_hand_drops_middle(space, reference_point):
    values = dict(reference_point.values)
    values["finger_number"] = 2
    del values["middle_normal_offset"]
    hand = assemble_hand(space.make_point(values))
    assert sorted(hand.chains) == ["index", "pinky", "thumb"]


def test_chain_structure_matches_codes(reference_hand):
    h = reference_hand
    assert [j.spec.jtype for j in h.chains["index"].joints] == ["Side", "Grasp", "Grasp", "Grasp"]
    assert [j.spec.jtype for j in h.chains["thumb"].joints] == ["Side", "Axial", "Side", "Side"]
    assert h.n_links == 1 + sum(len(c.links) for c in h.chains.values())


def test_export_round_trip(reference_hand, tmp_path):
    urdf = export(reference_hand, tmp_path / "hand")
    s = read_urdf(urdf)
    assert len(s.links) == reference_hand.n_links
    assert len(s.joints) == reference_hand.n_joints
    assert all(j["type"] == "revolute" for j in s.joints)
    for rel in s.mesh_files:
        m = read_stl(urdf.parent / rel)
        assert m.n_triangles > 0
    for rel in s.collision_files:
        assert is_convex(read_stl(urdf.parent / rel), tol=1e-3)  # f32 storage
    visual = sorted((urdf.parent / "meshes" / "visual").glob("*.stl"))
    assert len(visual) == reference_hand.n_links
    for p in visual:
        assert watertight_check(read_stl(p))


def test_joint_limits_in_radians(reference_hand, tmp_path):
    s = read_urdf(export(reference_hand, tmp_path / "hand"))
    by_name = {j.name: j for j in reference_hand.joints}
    for j in s.joints:
        lo, hi = by_name[j["name"]].spec.limits
        assert abs(j["lower"] - math.radians(lo)) <= 1e-12
        assert abs(j["upper"] - math.radians(hi)) <= 1e-12


def test_export_is_byte_identical(reference_hand, tmp_path):
    export(reference_hand, tmp_path / "a")
    export(reference_hand, tmp_path / "b")
    first = directory_digest(tmp_path / "a")
    assert first == directory_digest(tmp_path / "b")
    export(reference_hand, tmp_path / "a")
    assert directory_digest(tmp_path / "a") == first


def test_urdf_units_and_tree(reference_hand, tmp_path):
    root = ET.parse(export(reference_hand, tmp_path / "h")).getroot()
    scales = {m.get("scale") for m in root.iter("mesh")}
    assert scales == {"0.001 0.001 0.001"}
    parents = {j.find("child").get("link"): j.find("parent").get("link") for j in root.findall("joint")}
    for link in parents:
        seen = set()
        while link != "palm":
            assert link not in seen
            seen.add(link)
            link = parents[link]
    for inertia in root.iter("inertia"):
        I = np.array(
            [
                [float(inertia.get("ixx")), float(inertia.get("ixy")), float(inertia.get("ixz"))],
                [float(inertia.get("ixy")), float(inertia.get("iyy")), float(inertia.get("iyz"))],
                [float(inertia.get("ixz")), float(inertia.get("iyz")), float(inertia.get("izz"))],
            ]
        )
        assert np.linalg.eigvalsh(I).min() > 0


def test_joint_origin_rpy_reproduces_rotation(reference_hand):
    for j in reference_hand.joints:
        r, p, y = matrix_to_rpy(j.origin[:3, :3])
        cr, sr, cp, sp, cy, sy = math.cos(r), math.sin(r), math.cos(p), math.sin(p), math.cos(y), math.sin(y)
        Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        np.testing.assert_allclose(Rz @ Ry @ Rx, j.origin[:3, :3], atol=1e-12)


def test_invalid_model_writes_nothing(reference_hand, tmp_path):
    broken = build_chain(expand_structure(parse_finger_code("0")), np.eye(4))
    chains = dict(reference_hand.chains)
    chains["index"] = broken  # link names clash with a joint tree rooted elsewhere
    object.__setattr__(broken.joints[0], "parent", "nowhere")
    bad = type(reference_hand)(
        "bad",
        reference_hand.palm,
        reference_hand.pad,
        reference_hand.pad_pieces,
        reference_hand.palm_colliders,
        reference_hand.palm_mass,
        chains,
    )
    with pytest.raises(ValueError):
        export(bad, tmp_path / "bad")
    assert not (tmp_path / "bad").exists()
    assert list(tmp_path.iterdir()) == []


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_sampled_hands_export_clean(seed):
    import tempfile

    space = build_power_grasp_space()
    hand = assemble_hand(space.sample_uniform(seed))
    with tempfile.TemporaryDirectory() as d:
        s = read_urdf(export(hand, Path(d) / "h"))
        assert len(s.links) == hand.n_links and len(s.joints) == hand.n_joints
        assert all((Path(d) / "h" / f).is_file() for f in s.mesh_files)
    for name, ms in hand.collision_meshes().items():
        assert all(is_convex(m) for m in ms), name
    for m in hand.visual_meshes().values():
        assert watertight_check(m) and m.signed_volume() > 0

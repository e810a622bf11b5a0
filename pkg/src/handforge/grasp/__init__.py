from .closing import (
    Contact,
    ContactSet,
    GraspConfig,
    PerturbBounds,
    close_fingers,
    make_grasp,
    sample_grasp,
)
from .tools import ToolModel, builtin_tools, load_tools
from .wrench import StabilityScore, WrenchTestSpec, grasp_score, hand_score, resist_magnitude

__all__ = [
    "Contact",
    "ContactSet",
    "GraspConfig",
    "PerturbBounds",
    "StabilityScore",
    "ToolModel",
    "WrenchTestSpec",
    "builtin_tools",
    "close_fingers",
    "grasp_score",
    "hand_score",
    "load_tools",
    "make_grasp",
    "resist_magnitude",
    "sample_grasp",
]

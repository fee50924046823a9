"""Shape-aware planning and learned control for hybrid rigid/soft manipulators."""

from contiplan.kinematics import (
    ArmGeometry,
    BackboneSample,
    HybridConfig,
    Pose,
    RigidConfig,
    SoftConfig,
    actuation_to_soft,
    default_geometry,
    hybrid_backbone,
    rigid_forward,
    soft_transform,
)

__version__ = "0.1.0"

__all__ = [
    "ArmGeometry",
    "BackboneSample",
    "HybridConfig",
    "Pose",
    "RigidConfig",
    "SoftConfig",
    "actuation_to_soft",
    "default_geometry",
    "hybrid_backbone",
    "rigid_forward",
    "soft_transform",
]

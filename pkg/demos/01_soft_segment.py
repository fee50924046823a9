"""Bend the soft segment through a few chamber pressures and look at where the tip goes.

Run: python3 demos/01_soft_segment.py
"""

import numpy as np

from contiplan.kinematics import SoftConfig, actuation_to_soft, default_geometry, hybrid_backbone, soft_transform, tip_pose

geo = default_geometry()
print(f"soft segment: length {geo.soft_length} m, gain {geo.actuation_gain}, curvature cap {geo.kappa_limit} 1/m")

# one chamber at a time, then two together; the tip bends away from the pressurized side
for u in [(0, 0, 0), (0.5, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (1, 1, 1)]:
    soft = actuation_to_soft(u, geo.actuation_gain, geo.kappa_limit, geo.soft_length)
    T = soft_transform(soft)
    print(f"u={u}  kappa={soft.kappa:5.2f}  phi={np.degrees(soft.phi):7.1f} deg  tip={np.round(T.translation, 4)}")

# a quarter circle: the tip lands at (-r, 0, r) for phi = 0
r = 0.2
q = soft_transform(SoftConfig(1 / r, 0.0, np.pi * r / 2))
print("quarter circle tip:", np.round(q.translation, 6), "tangent:", np.round(q.rotation[:, 2], 6))

home = geo.home()
bb = hybrid_backbone(geo, home, 50)
print(f"home tip {np.round(tip_pose(geo, home).translation, 4)}; backbone has "
      f"{int(bb.rigid_mask.sum())} rigid and {int((~bb.rigid_mask).sum())} soft sample points")

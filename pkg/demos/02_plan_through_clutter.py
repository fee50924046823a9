"""Plan into a cluttered scene at three soft-contact budgets, then shortcut and recheck.

Run: python3 demos/02_plan_through_clutter.py [archetype] [seed]
"""

import sys
from dataclasses import replace

from contiplan.kinematics import default_geometry, tip_pose
from contiplan.occupancy import SceneParams, generate_scene, goal_candidates, rasterize_scene
from contiplan.planner import PlannerConfig, PlanningFailure, plan, shortcut, validate_plan

archetype = sys.argv[1] if len(sys.argv) > 1 else "Clutter"
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 3

geo = default_geometry()
scene = generate_scene(archetype, seed, SceneParams.for_geometry(geo))
grid = rasterize_scene(scene, 0.01)
home = tip_pose(geo, geo.home()).translation
cands = goal_candidates(scene.goal_position, 0.01, grid, home_tip=home)
print(f"{scene.scene_id}: {len(scene.primitives)} primitives, {int(grid.cells.sum())} occupied voxels, "
      f"{len(cands)} free approach poses")

for tau in (0, 5, 12):
    cfg = replace(PlannerConfig(), tau=tau)
    try:
        p = plan(geo.home(), cands, grid, geo, cfg, seed=seed)
    except PlanningFailure as exc:
        print(f"tau={tau:2d}: no plan ({exc})")
        continue
    rep = validate_plan(p, grid, geo, tau, cfg.edge_check_resolution)
    s = shortcut(p, grid, geo, cfg, seed=seed)
    rep_s = validate_plan(s, grid, geo, tau, cfg.edge_check_resolution)
    print(f"tau={tau:2d}: {len(p)} waypoints cost {p.cost:.3f} after {p.iterations_used} iterations, "
          f"soft contacts {rep.soft_contacts}, valid {rep.ok}; shortcut -> {len(s)} waypoints "
          f"cost {s.cost:.3f}, valid {rep_s.ok}")

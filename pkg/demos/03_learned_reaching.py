"""Train the desk-scale controller and follow a handful of open-space plans with it.

Takes about half a minute for training on one core.
Run: python3 demos/03_learned_reaching.py
"""

import time

import numpy as np

from contiplan.controller import LearnedController, OracleController, execute_waypoints
from contiplan.harness import train_desk_controller
from contiplan.kinematics import default_geometry, tip_pose
from contiplan.occupancy import SceneParams, generate_scene, goal_candidates, rasterize_scene
from contiplan.planner import plan

geo = default_geometry()
t0 = time.perf_counter()
model = train_desk_controller(geo, seed=0)
print(f"trained {model.input_format} model in {time.perf_counter() - t0:.0f}s, final loss {model.final_loss:.4f}")

params = SceneParams.for_geometry(geo)
home = tip_pose(geo, geo.home()).translation
learned, oracle = LearnedController(model), OracleController(geo)
errs = []
for seed in range(10):
    scene = generate_scene("Open", seed, params)
    grid = rasterize_scene(scene, 0.01)
    p = plan(geo.home(), goal_candidates(scene.goal_position, 0.01, grid, home_tip=home), grid, geo, seed=seed)
    a = execute_waypoints(p, learned, geo, grid, tolerance=0.002)
    b = execute_waypoints(p, oracle, geo, grid, tolerance=0.002)
    errs.append(a.final_error)
    print(f"seed {seed}: {len(p)} waypoints, learned error {1000 * a.final_error:6.2f} mm "
          f"({sum(a.waypoint_steps)} steps), oracle {1000 * b.final_error:.3f} mm")
print(f"median learned error {1000 * np.median(errs):.2f} mm")

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from contiplan.controller import (
    Actuation,
    ControllerModel,
    LearnedController,
    OracleController,
    PoseSample,
    TrainConfig,
    TrainingDiverged,
    actuation_limits,
    actuation_to_config,
    build_input,
    collect_sweep,
    config_to_actuation,
    execute_waypoints,
    infer,
    init_params,
    input_size,
    layer_shapes,
    load_dataset,
    loss_and_grad,
    oracle_actuation,
    samples_to_arrays,
    save_dataset,
    train,
)
from contiplan.harness import desk_sweep
from contiplan.kinematics import Pose, actuation_to_soft, soft_transform, tip_pose
from contiplan.occupancy import generate_scene, goal_candidates, rasterize_scene
from contiplan.planner import PlannerConfig, plan, validate_plan
from oracles import chain_fk_reverse


def _random_poses(n, seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(n, random_state=seed).as_matrix()
    return [Pose(r, t) for r, t in zip(R, rng.uniform(-0.5, 0.5, (n, 3)))]


def _constant_model(fmt, out):
    shapes = layer_shapes(input_size(fmt), 8, 4)
    params = [[np.zeros(s), np.zeros(s[1])] for s in shapes]
    n_in = input_size(fmt)
    lo = np.concatenate([np.full(6, -np.pi), np.zeros(3)])
    hi = np.concatenate([np.full(6, np.pi), np.ones(3)])
    return ControllerModel(fmt, params, np.zeros(n_in), np.ones(n_in), np.asarray(out, float), np.ones(9), lo, hi)


# -- actuation -----------------------------------------------------------------


def test_actuation_validation(geometry):
    with pytest.raises(ValueError):
        Actuation((0.0,) * 6, (0.5, 1.2, 0.0))
    with pytest.raises(ValueError):
        Actuation((0.0,) * 5, (0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        Actuation((math.nan,) + (0.0,) * 5, (0.5, 0.5, 0.0))
    a = Actuation((0.0,) * 6, (0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        a.check_limits(geometry)  # zero elbow is below its lower limit
    assert Actuation.from_vector(a.to_vector()) == a


def test_config_actuation_round_trip(geometry):
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.uniform(*geometry.config_bounds())
        cfg = actuation_to_config(geometry, config_to_actuation(geometry, actuation_to_config(
            geometry, Actuation.from_vector(np.r_[q[:6], rng.uniform(0, 1, 3)]))))
        direct = actuation_to_config(geometry, Actuation.from_vector(np.r_[q[:6], 0, 0, 0]))
        assert cfg.rigid == direct.rigid


# -- data collection -------------------------------------------------------------


def test_single_sample_sweep_is_lower_corner(geometry):
    data = collect_sweep(geometry, (1,) * 9)
    lo, _ = actuation_limits(geometry)
    assert len(data) == 1
    np.testing.assert_array_equal(data[0].actuation.to_vector(), lo)


def test_two_sample_sweep_varies_only_first_joint(geometry):
    a, b = collect_sweep(geometry, (2,) + (1,) * 8)
    diff = a.actuation.to_vector() != b.actuation.to_vector()
    assert diff.tolist() == [True] + [False] * 8


def test_sweep_cap_and_step_validation(geometry):
    with pytest.raises(ValueError):
        collect_sweep(geometry, (10,) * 9, cap=1000)
    with pytest.raises(ValueError):
        collect_sweep(geometry, (0,) + (1,) * 8)


def test_sweep_poses_match_independent_fk(geometry):
    data = desk_sweep(geometry, 0)
    assert 4000 <= len(data) <= 10000
    rng = np.random.default_rng(0)
    for k in rng.choice(len(data), 300, replace=False):
        s = data[k]
        u = s.actuation.to_vector()
        soft = actuation_to_soft(u[6:], geometry.actuation_gain, geometry.kappa_limit, geometry.soft_length)
        T = chain_fk_reverse(geometry, u[:6]) @ geometry.soft_mount.as_matrix() @ soft_transform(soft).as_matrix()
        np.testing.assert_allclose(s.pose.as_matrix(), T, atol=1e-9)


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_dataset_round_trip(geometry, tmp_path, suffix):
    data = collect_sweep(geometry, (2, 2, 1, 1, 1, 1, 2, 1, 2), seed=1, jitter=0.2)
    save_dataset(data, tmp_path / f"d{suffix}")
    back = load_dataset(tmp_path / f"d{suffix}")
    P0, A0 = samples_to_arrays(data)
    P1, A1 = samples_to_arrays(back)
    np.testing.assert_array_equal(A0, A1)
    np.testing.assert_array_equal(P0, P1)


# -- features --------------------------------------------------------------------


def test_identical_poses_give_identity_relative_block():
    p = _random_poses(1, 3)[0]
    x = build_input(p, p, "RelativeOnly")
    np.testing.assert_allclose(x, [0, 0, 0, 1, 0, 0, 0, 1, 0], atol=1e-12)


def test_feature_lengths():
    p = Pose()
    assert len(build_input(p, p, "GoalOnly")) == 9
    assert len(build_input(p, p, "RelativeOnly")) == 9
    assert len(build_input(p, p, "CurrentPlusGoal")) == 18
    assert len(build_input(p, p, "CurrentPlusRelative")) == 18
    with pytest.raises(ValueError):
        build_input(p, p, "Everything")


def test_relative_block_matches_matrix_algebra():
    a, b = _random_poses(2, 4)
    rel = np.linalg.inv(a.as_matrix()) @ b.as_matrix()
    x = build_input(a, b, "CurrentPlusRelative")
    np.testing.assert_allclose(x[9:], np.r_[rel[:3, 3], rel[:3, 0], rel[:3, 1]], atol=1e-12)
    np.testing.assert_allclose(x[:9], build_input(b, a, "GoalOnly"), atol=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_relative_features_invariant_to_world_frame(seed):
    a, b, w = _random_poses(3, seed % (2**32))
    x0 = build_input(a, b, "RelativeOnly")
    x1 = build_input(w @ a, w @ b, "RelativeOnly")
    np.testing.assert_allclose(x0, x1, atol=1e-9)


# -- network ---------------------------------------------------------------------


def test_layer_shapes_chain():
    shapes = layer_shapes(18, 256, 6)
    assert shapes == [(18, 256), (256, 128), (128, 256), (256, 128), (128, 256), (256, 9)]
    with pytest.raises(ValueError):
        TrainConfig(n_layers=5)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    big = TrainConfig.paper_preset()
    assert (big.n_layers, big.hidden_size, big.batch_size, big.learning_rate) == (20, 15000, 2000, 1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 4, 6]))
def test_gradients_match_finite_differences(seed, n_layers):
    rng = np.random.default_rng(seed)
    params = init_params(layer_shapes(5, 6, n_layers), rng)
    x, t = rng.normal(size=(7, 5)), rng.normal(size=(7, 9))
    _, grads = loss_and_grad(params, x, t)
    h = 1e-6
    for li in range(len(params)):
        for k in range(2):
            flat = params[li][k].reshape(-1)
            for idx in rng.choice(flat.size, min(3, flat.size), replace=False):
                old = flat[idx]
                flat[idx] = old + h
                up = loss_and_grad(params, x, t)[0]
                flat[idx] = old - h
                down = loss_and_grad(params, x, t)[0]
                flat[idx] = old
                num = (up - down) / (2 * h)
                ana = grads[li][k].reshape(-1)[idx]
                assert abs(num - ana) <= 1e-4 * max(abs(num), abs(ana), 1e-3)


def test_constant_dataset_fits_constant():
    c = Actuation((0.1, 0.2, -0.3, 0.4, 0.5, -0.6), (0.2, 0.5, 0.9))
    data = [PoseSample(p, c) for p in _random_poses(1024, 1)]
    m = train(data, "random", TrainConfig(epochs=100, hidden_size=32, n_layers=4, batch_size=64, learning_rate=1e-2))
    assert m.final_loss < 1e-4
    for a, b in zip(_random_poses(10, 2), _random_poses(10, 3)):
        np.testing.assert_allclose(infer(m, a, b).to_vector(), c.to_vector(), atol=1e-2)


def test_training_is_deterministic():
    data = [PoseSample(p, Actuation((0.1,) * 6, (0.2, 0.5, 0.9))) for p in _random_poses(300, 5)]
    cfg = TrainConfig(epochs=2, hidden_size=16, n_layers=4, batch_size=64)
    a, b = train(data, "mixed", cfg), train(data, "mixed", cfg)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_divergence_is_reported():
    rng = np.random.default_rng(0)
    data = [PoseSample(p, Actuation.from_vector(np.r_[rng.normal(size=6), rng.uniform(size=3)]))
            for p in _random_poses(256, 6)]
    with pytest.raises(TrainingDiverged, match="epoch"):
        train(data, "random", TrainConfig(epochs=50, hidden_size=16, n_layers=2, batch_size=64,
                                          learning_rate=1e12, optimizer="sgd"))


def test_training_needs_a_full_batch():
    data = [PoseSample(p, Actuation((0.1,) * 6, (0.2, 0.5, 0.9))) for p in _random_poses(10, 7)]
    with pytest.raises(ValueError):
        train(data, "random", TrainConfig(batch_size=64))
    with pytest.raises(ValueError):
        train(data * 10, "sideways", TrainConfig(batch_size=64))


def test_clamping_soft_channel():
    m = _constant_model("CurrentPlusRelative", [0, 0, 0, 0, 0, 0, 1.7, 0.3, -0.4])
    u = infer(m, Pose(), Pose())
    assert u.soft_commands == (1.0, 0.3, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9), st.integers(0, 1000))
def test_output_normalization_round_trip(u, seed):
    rng = np.random.default_rng(seed)
    m = _constant_model("GoalOnly", rng.normal(size=9))
    m.out_scale = rng.uniform(0.1, 3, 9)
    np.testing.assert_allclose(m.denormalize_output(m.normalize_output(np.array(u))), u, atol=1e-9)


def test_model_file_round_trip_and_version(tmp_path):
    m = _constant_model("GoalOnly", np.arange(9) / 10)
    m.save(tmp_path / "m.json")
    back = ControllerModel.load(tmp_path / "m.json")
    p = Pose()
    assert infer(back, p, p) == infer(m, p, p)
    d = json.loads((tmp_path / "m.json").read_text())
    d["format_version"] = 99
    (tmp_path / "bad.json").write_text(json.dumps(d))
    with pytest.raises(ValueError, match="version"):
        ControllerModel.load(tmp_path / "bad.json")
    d["format_version"] = 1
    d["layers"][1]["W"] = np.zeros((3, 3)).tolist()
    with pytest.raises(ValueError, match="chain"):
        ControllerModel.from_dict(d)


def test_hold_prediction_reproduces_current_actuation(geometry, desk_model):
    held = desk_sweep(geometry, 1)
    P, A = samples_to_arrays(held)
    idx = np.random.default_rng(0).choice(len(held), 500, replace=False)
    r = desk_model.predict_raw(P[idx], P[idx]) - A[idx]
    assert float(np.mean(np.sum(r * r, axis=1))) <= desk_model.final_loss


# -- oracle and closed loop --------------------------------------------------------


def test_oracle_keeps_reached_target(geometry):
    init = config_to_actuation(geometry, geometry.home())
    res = oracle_actuation(geometry, tip_pose(geometry, geometry.home()), init)
    assert res.converged
    np.testing.assert_allclose(res.actuation.to_vector(), init.to_vector(), atol=1e-12)


def test_oracle_reaches_random_targets(geometry):
    rng = np.random.default_rng(1)
    lo, hi = actuation_limits(geometry)
    init = config_to_actuation(geometry, geometry.home())
    for _ in range(15):
        u = init.to_vector() + rng.normal(0, 0.2, 9) * (hi - lo) / 2
        target = tip_pose(geometry, actuation_to_config(geometry, Actuation.from_vector(np.clip(u, lo, hi))))
        res = oracle_actuation(geometry, target, init)
        reached = tip_pose(geometry, actuation_to_config(geometry, res.actuation))
        assert res.converged
        assert np.linalg.norm(reached.translation - target.translation) < 1e-4


def test_oracle_reports_unreachable_residual(geometry):
    target = Pose.from_translation([2.0, 0.0, 0.3])
    res = oracle_actuation(geometry, target, config_to_actuation(geometry, geometry.home()), restarts=1)
    reach = 0.87 + geometry.soft_length
    assert not res.converged
    assert res.position_error >= np.linalg.norm(target.translation) - reach


def test_single_waypoint_plan_reached_immediately(geometry):
    trace = execute_waypoints([geometry.home()], OracleController(geometry), geometry)
    assert trace.reached and trace.waypoint_steps[0] <= 1


def test_oracle_closed_loop_on_obstacle_plans(geometry, scene_params):
    for seed in range(3):
        spec = generate_scene("Obstacle", seed, scene_params)
        g = rasterize_scene(spec)
        cands = goal_candidates(spec.goal_position, 0.01, g, home_tip=scene_params.home_tip)
        cfg = PlannerConfig()
        p = plan(geometry.home(), cands, g, geometry, cfg, seed=seed)
        assert validate_plan(p, g, geometry, cfg.tau, cfg.edge_check_resolution).ok
        trace = execute_waypoints(p, OracleController(geometry), geometry, g, tolerance=1e-4, max_steps_per_waypoint=3)
        assert trace.final_error < 1e-3
        assert all(s.c_rigid == 0 for s in trace.contacts)


def test_learned_controller_modes(desk_model):
    with pytest.raises(ValueError):
        LearnedController(desk_model, mode="psychic")
    assert LearnedController(desk_model).mode == "incremental"


def test_desk_preset_beats_label_variance_tenfold(geometry):
    # 6 layers, hidden 256, lr 1e-4, batch 256, random (current, goal) pairs; judged on a second jittered sweep
    model = train(desk_sweep(geometry, 0), "random",
                  TrainConfig(n_layers=6, hidden_size=256, learning_rate=1e-4, batch_size=256), geometry)
    P, A = samples_to_arrays(desk_sweep(geometry, 1))
    rng = np.random.default_rng(0)
    i, j = rng.integers(len(P), size=(2, 4000))
    r = model.predict_raw(P[i], P[j]) - A[j]
    mse = float(np.mean(np.sum(r * r, axis=1)))
    var = float(np.sum(A[j].var(axis=0)))
    assert mse * 10 <= var, f"held-out MSE {mse:.3f} vs label variance {var:.3f}"

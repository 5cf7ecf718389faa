"""Smoke test for the socnav extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/socnav-*.whl
"""

import json
import math
import pathlib
import tempfile

import socnav


def check_env_loop():
    env = socnav.Env("WALLS-A", pedestrians=4, seed=3)
    obs = env.observation()
    assert len(obs["lidar"]) == 128
    assert obs["goal_distance"] > 0
    assert len(env.pedestrians) == 4
    reward, termination = 0.0, "none"
    while termination == "none":
        obs, r, termination = env.step(0.5, 0.1)
        reward += r
    assert env.is_done() and env.steps <= 500
    log = env.log()
    assert len(log) == env.steps
    assert math.isclose(log.episode_return(), reward, abs_tol=1e-9)
    assert log.verify() == "ok"


def check_agents():
    assert sorted(socnav.AGENTS) == ["dwa", "orca", "tracker"]
    for name in socnav.AGENTS:
        env = socnav.Env("CIRCLE", seed=11)
        agent = socnav.Agent(name)
        agent.reset(env)
        v, omega = agent.act(env)
        assert -0.2 <= v <= 1.0 and abs(omega) <= 0.5
        log = socnav.run_episode(env, agent)
        assert log.outcome() in {"success", "pedestrian_collision", "obstacle_collision", "timeout"}
        assert log.pso() >= 0
        again = socnav.EpisodeLog.from_jsonl(log.to_jsonl())
        assert again.verify() == "ok"
        assert log.render().startswith("<svg")
    try:
        socnav.Agent("teleport")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown agent accepted")


def check_layouts_and_metrics():
    names = socnav.layouts()
    assert "WALLS-I" in names and "CIRCLE" in names
    doc = json.loads(socnav.export_layout("WALLS-B"))
    assert doc["name"] == "WALLS-B"
    assert socnav.pso_step([0.05, 0.2]) == 5.0
    assert socnav.pso_step([0.3]) == 0.0


def check_batch():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        scenario = tmp / "s.toml"
        scenario.write_text(
            'name = "smoke"\nlayouts = ["WALLS-C"]\nagent = "tracker"\n'
            "episodes = 4\npedestrians = 2\nseed = 1\n"
        )
        csv = socnav.run_batch(str(scenario), str(tmp / "out"), jobs=2)
        lines = csv.strip().splitlines()
        assert lines[0] == "Test,#ped,S,C,PC,OC,TO,PSO"
        assert len(lines) == 2
        logs = sorted((tmp / "out" / "logs").iterdir())
        assert len(logs) == 4
        assert socnav.EpisodeLog.read(str(logs[0])).verify() == "ok"


if __name__ == "__main__":
    check_env_loop()
    check_agents()
    check_layouts_and_metrics()
    check_batch()
    print("smoke test passed")

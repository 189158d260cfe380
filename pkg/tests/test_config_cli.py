import csv
import json

import pytest
import yaml

from baseplace.cli import main
from baseplace.config import load_config, parse_config
from baseplace.errors import ConfigError, InputError
from baseplace.nsga2 import Individual
from baseplace.objectives import ObjectiveVector
from baseplace.pipeline import map_cache_key, select_solution
from baseplace.sld import CSV_HEADER
from conftest import DESK_DELTA, DESK_STEPS

TINY_GA = {"population_size": 6, "generations": 2, "tournament_size": 4}


@pytest.fixture(scope="module")
def demo_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    assert main(["make-demo", "--out", str(out)]) == 0
    return out


def write_scenario(path, demo_dir, map_path, **extra):
    data = {
        "robot": str(demo_dir / "desk_arm.yaml"),
        "scene": str(demo_dir / "washbasin.yaml"),
        "output_dir": str(path.parent / "out"),
        "map": {"delta": DESK_DELTA, "steps_per_joint": DESK_STEPS, "path": str(map_path)},
        "ga": TINY_GA,
        "finetune": {"enabled": False},
    }
    data.update(extra)
    path.write_text(yaml.safe_dump(data))
    return path


# -- config parsing ---------------------------------------------------------------


def test_demo_scenario_parses(demo_dir):
    cfg = load_config(demo_dir / "scenario.yaml")
    assert cfg.map.delta == 0.05 and cfg.ga.population_size == 40 and cfg.policy == "max-coverage"
    assert cfg.map.cache_dir == demo_dir / ".rm-cache"
    assert cfg.to_dict()["finetune"]["theta_step_deg"] == 15.0


def test_seed_drives_the_ga(demo_dir):
    cfg = parse_config({"robot": "desk_arm.yaml", "scene": "washbasin.yaml", "seed": 9}, demo_dir)
    assert cfg.ga.rng_seed == 9


@pytest.mark.parametrize(
    "patch",
    [
        {"robot": None},
        {"ga": {"population_size": 7}},
        {"ga": {"mystery": 1}},
        {"colour": "red"},
        {"map": {"delta": -1}},
        {"select": {"policy": "whatever"}},
        {"objectives": {"v_ee": 0}},
        {"scene": "nowhere.yaml"},
    ],
)
def test_bad_configs(demo_dir, patch):
    data = {"robot": "desk_arm.yaml", "scene": "washbasin.yaml"}
    data.update(patch)
    data = {k: v for k, v in data.items() if v is not None}
    with pytest.raises(ConfigError):
        parse_config(data, demo_dir)


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


# -- selection --------------------------------------------------------------------


def member(f1, f2, genes):
    return Individual(tuple(genes), ObjectiveVector(f1, f2, 0.0))


def test_select_policies():
    front = [member(0.975, 30.0, (4, 9, 0)), member(0.985, 45.0, (1, 4, 9)), member(0.2, 0.0, (3, 0, 0))]
    assert select_solution(front, "max-coverage").genes == (1, 4, 9)
    assert select_solution(front, "min-time").genes == (3, 0, 0)
    assert select_solution(front, "knee").genes == (3, 0, 0)  # zero time, positive coverage
    assert select_solution(front[:2], "knee").genes == (4, 9, 0)
    single = [member(0.5, 5.0, (2, 0, 0))]
    for policy in ("max-coverage", "min-time", "knee"):
        assert select_solution(single, policy) is single[0]
    with pytest.raises(InputError):
        select_solution([], "knee")


def test_select_tie_prefers_fewer_placements():
    front = [member(0.9, 30.0, (1, 2, 3)), member(0.9, 30.0, (1, 2, 0))]
    assert select_solution(front, "max-coverage").genes == (1, 2, 0)


# -- CLI --------------------------------------------------------------------------


def test_version_and_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "baseplace" in capsys.readouterr().out


def test_bad_config_exits_2(tmp_path):
    (tmp_path / "s.yaml").write_text("robot: a.yaml\n")
    assert main(["run", "--config", str(tmp_path / "s.yaml")]) == 2
    assert not (tmp_path / "out").exists()


def test_missing_scene_writes_nothing(tmp_path, demo_dir, desk_map_and_path):
    cfg = write_scenario(tmp_path / "s.yaml", demo_dir, desk_map_and_path[1])
    data = yaml.safe_load(cfg.read_text())
    data["scene"] = str(tmp_path / "gone.yaml")
    cfg.write_text(yaml.safe_dump(data))
    assert main(["run", "--config", str(cfg)]) == 2
    assert not (tmp_path / "out").exists()


def test_no_favoured_placements_exits_3(tmp_path, demo_dir, desk_map_and_path):
    scene = yaml.safe_load((demo_dir / "washbasin.yaml").read_text())
    scene["surface"] = str(demo_dir / scene["surface"])
    if scene.get("obstacle_cloud"):
        scene["obstacle_cloud"] = str(demo_dir / scene["obstacle_cloud"])
    scene["sampling"]["x_range"] = [20.0, 20.1]
    (tmp_path / "far.yaml").write_text(yaml.safe_dump(scene))
    cfg = write_scenario(tmp_path / "s.yaml", demo_dir, desk_map_and_path[1], scene=str(tmp_path / "far.yaml"))
    assert main(["run", "--config", str(cfg)]) == 3
    assert not (tmp_path / "out").exists()


def test_map_mismatch_exits_4(tmp_path, demo_dir, desk_map_and_path):
    cfg = write_scenario(tmp_path / "s.yaml", demo_dir, desk_map_and_path[1])
    data = yaml.safe_load(cfg.read_text())
    data["map"]["steps_per_joint"] = DESK_STEPS + 1
    cfg.write_text(yaml.safe_dump(data))
    assert main(["run", "--config", str(cfg)]) == 4
    robot = yaml.safe_load((demo_dir / "desk_arm.yaml").read_text())
    (tmp_path / "other.bprm").write_bytes(b"garbage" * 20)
    data["map"] = {"delta": DESK_DELTA, "steps_per_joint": DESK_STEPS, "path": str(tmp_path / "other.bprm")}
    cfg.write_text(yaml.safe_dump(data))
    assert main(["run", "--config", str(cfg)]) == 4
    assert robot  # robot file untouched


def test_bad_worker_env_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("BASEPLACE_WORKERS", "many")
    assert main(["run", "--config", str(tmp_path / "x.yaml")]) == 2


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_artifacts_with_schemas(tmp_path, demo_dir, desk_map_and_path, capsys):
    cfg = write_scenario(tmp_path / "s.yaml", demo_dir, desk_map_and_path[1])
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert read_rows(out / "stats.csv")[0] == ["generation", "mean_f1", "var_f1", "mean_f2", "var_f2", "mean_f3", "var_f3"]
    assert len(read_rows(out / "stats.csv")) == TINY_GA["generations"] + 2
    assert read_rows(out / "front.csv")[0] == ["gene_0", "gene_1", "gene_2", "f1", "f2", "f3"]
    assert read_rows(out / "solution.csv")[0] == ["id", "x", "y", "theta"]
    assert read_rows(out / "fbps.csv")[0] == ["id", "x", "y", "theta"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["map"]["built_this_run"] is False
    assert manifest["config"]["ga"]["population_size"] == TINY_GA["population_size"]
    assert manifest["counts"]["fbps"] == len(read_rows(out / "fbps.csv")) - 1

    # select from the written front and resolve genes to placements
    assert main(["select", "--front", str(out / "front.csv"), "--policy", "knee",
                 "--fbps", str(out / "fbps.csv"), "--out", str(tmp_path / "pick.csv")]) == 0
    assert read_rows(tmp_path / "pick.csv")[0] == ["id", "x", "y", "theta"]


def test_small_subcommands(tmp_path, demo_dir, desk_map_and_path, capsys):
    scene, robot = str(demo_dir / "washbasin.yaml"), str(demo_dir / "desk_arm.yaml")
    assert main(["decompose", "--scene", scene, "--out", str(tmp_path / "slds.csv")]) == 0
    assert read_rows(tmp_path / "slds.csv")[0] == CSV_HEADER
    assert main(["sample", "--scene", scene, "--robot", robot, "--slds", str(tmp_path / "slds.csv"),
                 "--out", str(tmp_path / "fbps.csv")]) == 0
    capsys.readouterr()
    assert main(["query-rm", "--map", str(desk_map_and_path[1]), "--robot", robot,
                 "--center", "0.3", "0", "-0.3", "--normal", "0", "0", "1", "--max-angle-deg", "90"]) == 0
    assert capsys.readouterr().out.strip()


def test_build_rm_voxel_alias(tmp_path, demo_dir):
    robot = str(demo_dir / "desk_arm.yaml")
    assert main(["build-rm", "--robot", robot, "--steps", "3", "--voxel", "0.1", "--workers", "1",
                 "--out", str(tmp_path / "m.bprm")]) == 0
    assert main(["build-rm", "--robot", robot, "--steps", "20", "--max-records", "10",
                 "--out", str(tmp_path / "big.bprm")]) == 2


def test_cache_key_depends_on_grid(desk_model):
    assert map_cache_key(desk_model, 0.05, 20) != map_cache_key(desk_model, 0.05, 21)
    assert map_cache_key(desk_model, 0.05, 20) == map_cache_key(desk_model, 0.05, 20)

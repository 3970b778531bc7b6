import math
from pathlib import Path

import numpy as np
import pytest

from app.errors import ConfigError, IllPosedError, ScenarioError
from app.models.schemas import GridField
from app.solvers.orchestrator import run
from app.tools.exports import parse_grid, render_grid, write_grid
from app.tools.scenario_config import build_model_params, load_config, parse_config, render_config

SCENARIOS = sorted((Path(__file__).resolve().parents[1] / "data" / "scenarios").glob("*.cfg"))

MINIMAL = """
[domain]
length_L = 1.0
height_H = 2.0

[model]
rho = 0.5
horizon_T = 1.0
"""


def test_minimal_scenario_takes_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.problem.kind == "simulate"
    assert cfg.domain.modes_M == 8 and cfg.domain.quad_points == 64
    assert cfg.model.gamma is None and math.isinf(cfg.model.cap_R)
    assert cfg.effectiveness.constant == 1.0
    assert cfg.x0.constant == 0.0 and cfg.target is None


def test_fields_sum_constant_and_modes():
    cfg = parse_config(MINIMAL + "\n[x0]\nconstant = 2.0\nmode 1 0 = 0.5\nmode 0 2 = -0.25  # trailing comment\n")
    domain, params, _ = build_model_params(cfg)
    assert params.x0.coeff(0, 0) == pytest.approx(2.0 * math.sqrt(2.0))
    assert params.x0.coeff(1, 0) == 0.5
    assert params.x0.coeff(0, 2) == -0.25
    assert params.gamma == 1.0


def test_negative_gamma_is_reported_with_its_line():
    text = MINIMAL + "gamma = -1\n\n[problem]\nkind = p1\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    (violation,) = [v for v in info.value.violations if v.key == "gamma"]
    assert violation.line == 9
    assert violation.section == "model"


def test_every_violation_is_collected():
    text = """
    [domain]
    length_L = -1
    height_H = 1.0
    colour = blue

    [model]
    horizon_T = 1.0

    [weather]
    sunny = yes

    [x0]
    mode 1 = 3
    """
    with pytest.raises(ConfigError) as info:
        parse_config(text.replace("\n    ", "\n"))
    messages = [str(v) for v in info.value.violations]
    assert any("length_L" in m for m in messages)
    assert any("colour" in m and "unknown key" in m for m in messages)
    assert any("rho" in m for m in messages)
    assert any("weather" in m and "unknown section" in m for m in messages)
    assert any("mode m n" in m for m in messages)
    assert len(messages) >= 5


@pytest.mark.parametrize("section", ["x0", "model"])
def test_empty_key_is_reported_with_its_line(section):
    text = MINIMAL + "gamma = 1.0\n" if section == "model" else MINIMAL + "\n[x0]\n"
    text += "= 3\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    (violation,) = info.value.violations
    assert violation.line == len(text.splitlines())
    assert violation.section == section
    assert "unknown key" in violation.message


def test_missing_required_sections():
    with pytest.raises(ConfigError) as info:
        parse_config("[problem]\nkind = simulate\n")
    sections = {v.section for v in info.value.violations}
    assert {"domain", "model"} <= sections


def test_repeated_keys_and_modes_are_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "rho = 0.7\n\n[x0]\nmode 1 1 = 1\nmode 1 1 = 2\n")
    messages = " ".join(str(v) for v in info.value.violations)
    assert "key given twice" in messages and "mode given twice" in messages


def test_mode_outside_the_truncation():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("height_H = 2.0", "height_H = 2.0\nmodes_M = 2\nmodes_N = 2") + "\n[target]\nmode 3 0 = 1.0\n")
    (violation,) = info.value.violations
    assert violation.section == "target" and "truncation" in violation.message


@pytest.mark.parametrize(
    "kind, extra, missing",
    [
        ("p1", "", "gamma"),
        ("p2", "gamma = 1.0\n", "target"),
        ("p2_sweep", "gamma = 1.0\n", "k0_list"),
        ("budget", "", "budget_M"),
        ("mp_quadratic", "", "cap_R"),
        ("mp_linear", "", "cap_R"),
    ],
)
def test_problem_kinds_demand_their_inputs(kind, extra, missing):
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + extra + f"\n[problem]\nkind = {kind}\n")
    assert any(missing in str(v) for v in info.value.violations)


def test_unknown_problem_kind():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[problem]\nkind = p3\n")


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_bundled_scenarios_render_and_parse_back(path):
    cfg = load_config(path)
    assert cfg.problem.kind == path.stem
    assert parse_config(render_config(cfg)) == cfg


def test_grid_file_cannot_be_mixed_with_modes(write_scenario):
    path = write_scenario(MINIMAL + "\n[effectiveness]\ngrid_file = b.grid\nconstant = 1.0\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert any("grid_file" in str(v) for v in info.value.violations)


def test_grid_files_resolve_next_to_the_scenario(write_scenario, tmp_path):
    values = np.ones((4, 8))
    values[:2] = 0.0
    write_grid(tmp_path / "b.grid", GridField(nx=4, ny=8, length_L=1.0, height_H=2.0, values=values))
    path = write_scenario(MINIMAL + "\n[effectiveness]\ngrid_file = b.grid\n")
    cfg = load_config(path)
    assert cfg.effectiveness.grid_file == (tmp_path / "b.grid").resolve()
    _, params, _ = build_model_params(cfg)
    assert isinstance(params.effectiveness_b, GridField)
    np.testing.assert_array_equal(params.effectiveness_b.values, values)


def test_grid_dump_round_trip():
    grid = GridField(nx=3, ny=2, length_L=1.5, height_H=0.5, values=np.arange(6.0) / 7.0)
    again = parse_grid(render_grid(grid))
    np.testing.assert_array_equal(again.values, grid.values)
    assert (again.nx, again.ny, again.length_L, again.height_H) == (3, 2, 1.5, 0.5)


def test_ill_posed_scenario_fails_with_the_margin(write_scenario, tmp_path):
    path = write_scenario(MINIMAL + "gamma = 2.0\n\n[problem]\nkind = p1\n\n[x0]\nconstant = 1.0\n")
    with pytest.raises(ScenarioError) as info:
        run(load_config(path), out_dir=tmp_path / "out")
    assert info.value.problem == "p1"
    assert isinstance(info.value.cause, IllPosedError)
    assert info.value.cause.margin == pytest.approx(1.0 - 2.0 * (1.0 - math.exp(-1.0)))

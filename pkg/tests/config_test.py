import configparser

import pytest
from utils import CONFIGS
from utils import write_config

from pinnobs.config import AblationConfig
from pinnobs.config import ExperimentConfig
from pinnobs.exceptions import ConfigError
from pinnobs.network import Activation
from pinnobs.trainer import Collocation

EXPERIMENTS = [
    "reverse_duffing.cfg",
    "harmonic.cfg",
    "induction_motor.cfg",
    "academic_ex3.cfg",
    "academic_ex4.cfg",
    "rigid_body.cfg",
]


def test_reverse_duffing_config():
    config = ExperimentConfig.load(CONFIGS / "reverse_duffing.cfg")
    sys = config.build_system()
    assert sys.name == "reverse_duffing"
    assert tuple(sys.x0) == (2.0, -1.0)
    assert sys.horizon == 20.0
    assert config.layer_spec(sys).widths == (1,) + (20,) * 9 + (4,)

    train_config = config.train_config(sys)
    assert train_config.lr == 1e-3
    assert train_config.max_iters == 200_000
    assert train_config.patience == 20_000
    assert train_config.seed == 42
    assert train_config.collocation is Collocation.train
    assert config.split_seed == 42


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_bundled_experiments_build(name):
    config = ExperimentConfig.load(CONFIGS / name)
    sys = config.build_system()
    assert config.layer_spec(sys).output_width == sys.n_x + sys.n_x * sys.m


def test_overrides():
    config = ExperimentConfig.load(
        CONFIGS / "reverse_duffing.cfg", {"seed": 7, "max_iters": 2000, "out": None}
    )
    assert config.experiment.seed == 7
    assert config.training.max_iters == 2000
    assert config.training.patience == 2000
    assert str(config.output_dir) == "runs/reverse_duffing"


def test_negative_learning_rate_names_the_field():
    sections = {"experiment": {"system": "reverse_duffing"}, "training": {"lr": "-1"}}
    with pytest.raises(ConfigError) as error:
        ExperimentConfig.from_sections(sections)
    assert error.value.field == "lr"
    assert "lr" in str(error.value)


def test_unknown_system_names_the_field():
    with pytest.raises(ConfigError) as error:
        ExperimentConfig.from_sections({"experiment": {"system": "pendulum"}})
    assert error.value.field == "system"


@pytest.mark.parametrize(
    "sections",
    [
        {"training": {"lr": "0.1"}},
        {"experiment": {"system": "reverse_duffing"}, "optimizer": {"lr": "0.1"}},
        {"experiment": {"system": "reverse_duffing"}, "training": {"learning_rate": "0.1"}},
    ],
)
def test_malformed_sections(sections):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_sections(sections)


def test_simulation_lists():
    config = ExperimentConfig.from_sections(
        {
            "experiment": {"system": "rigid_body"},
            "simulation": {"x0": "1, 2, 3", "inertia": "4.0, 2.0, 1.0"},
        }
    )
    sys = config.build_system()
    assert tuple(sys.x0) == (1.0, 2.0, 3.0)
    assert sys.params["I1"] == 4.0


def test_wrong_initial_state_length():
    config = ExperimentConfig.from_sections(
        {"experiment": {"system": "reverse_duffing"}, "simulation": {"x0": "1, 2, 3"}}
    )
    with pytest.raises(ConfigError):
        config.build_system()


def test_inapplicable_system_option():
    config = ExperimentConfig.from_sections(
        {"experiment": {"system": "reverse_duffing"}, "simulation": {"inertia": "1, 2, 3"}}
    )
    with pytest.raises(ConfigError) as error:
        config.build_system()
    assert error.value.field == "inertia"


def test_manifest_reproduces_the_config(tmp_path):
    config = ExperimentConfig.load(CONFIGS / "induction_motor.cfg")
    resolved = config.resolved(config.build_system())
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(resolved.manifest())
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    assert ExperimentConfig.from_sections(sections) == resolved
    assert parser.get("simulation", "dt") == "0.002"
    assert parser.get("simulation", "substeps") == "64"
    assert parser.get("training", "squared_initial_loss") == "true"


def test_with_updates():
    config = ExperimentConfig.load(CONFIGS / "reverse_duffing.cfg")
    updated = config.with_updates(network={"activation": "sine", "width": 7})
    assert updated.network.activation is Activation.sine
    assert updated.network.width == 7
    assert config.network.width == 20
    with pytest.raises(ConfigError):
        config.with_updates(training={"lr": 0.0})


def test_architecture_grid():
    grid = AblationConfig.load(CONFIGS / "ablation_depth.cfg")
    cells = grid.cells()
    assert len(cells) == 16
    assert cells[0].cell_id == "depth4_width10"
    assert cells[-1].updates == {"network": {"depth": 15, "width": 30}}
    assert grid.base == CONFIGS / "reverse_duffing.cfg"


def test_activation_grid():
    cells = AblationConfig.load(CONFIGS / "ablation_activation.cfg").cells()
    assert [cell.cell_id for cell in cells] == [
        "activation_relu",
        "activation_sigmoid",
        "activation_tanh",
        "activation_sine",
    ]


def test_weight_grid():
    cells = AblationConfig.load(CONFIGS / "ablation_weights.cfg").cells()
    assert len(cells) == 7
    assert cells[2].cell_id == "case3"
    assert cells[2].updates == {"training": {"w0": 1.5, "w_ode": 0.5, "w_y": 1.0}}


def test_grid_validation(tmp_path):
    path = write_config(
        tmp_path / "grid.cfg",
        {"ablation": {"base": "base.cfg", "axis": "weights", "weight_cases": "1, 9"}},
    )
    with pytest.raises(ConfigError):
        AblationConfig.load(path)

    path = write_config(tmp_path / "grid.cfg", {"ablation": {"base": "base.cfg", "axis": "seed"}})
    with pytest.raises(ConfigError) as error:
        AblationConfig.load(path)
    assert error.value.field == "axis"

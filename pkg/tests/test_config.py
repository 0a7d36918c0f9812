import textwrap

import pytest

from models.config import OUTPUT_DIR_ENV, load_config, validate_config
from models.errors import ConfigError
from models.responses import ErrorCode


def write_ini(tmp_path, text):
    path = tmp_path / "experiment.ini"
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def no_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


def test_defaults_and_generated_id():
    config = load_config(overrides={"experiment": {"seed": 3}})
    assert config.experiment.pipeline == "verify"
    assert config.experiment.id == "verify-cat3-s3"
    assert config.experiment.output_dir == "results"
    assert config.tolerances.invariance == 1e-8
    assert config.contact.sizes == [0.003, 0.006, 0.012, 0.024, 0.03]


def test_missing_seed_names_the_field():
    with pytest.raises(ConfigError) as info:
        load_config()
    assert info.value.code == ErrorCode.CONFIG_MISSING_FIELD
    assert info.value.field == "experiment.seed"
    assert info.value.exit_code == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "absent.ini")
    assert info.value.code == ErrorCode.CONFIG_FILE_NOT_FOUND


def test_ini_file_sections(tmp_path):
    path = write_ini(tmp_path, """
        [experiment]
        pipeline = contact
        seed = 5
        samples = 40

        [map]
        name = F

        [params]
        eps = 0.02

        [contact]
        sizes = 0.01, 0.02, 0.04
        base_point = 0.1, 0.2, 0.3

        [tolerances]
        reeb = 1e-5
    """)
    config = load_config(path)
    assert config.experiment.id == "contact-F-s5"
    assert config.experiment.samples == 40
    assert config.contact.sizes == [0.01, 0.02, 0.04]
    assert config.contact.base_point == [0.1, 0.2, 0.3]
    assert config.tolerances.reeb == 1e-5
    spec = config.map_spec()
    assert spec.name == "F"
    assert spec.params["eps"] == 0.02


def test_environment_and_flags_override_the_file(tmp_path, monkeypatch):
    path = write_ini(tmp_path, """
        [experiment]
        seed = 1
        output_dir = from-file
    """)
    monkeypatch.setenv(OUTPUT_DIR_ENV, "from-env")
    assert load_config(path).experiment.output_dir == "from-env"
    flagged = load_config(path, {"experiment": {"output_dir": "from-flag", "seed": None}})
    assert flagged.experiment.output_dir == "from-flag"
    assert flagged.experiment.seed == 1


def test_unknown_builtin_name():
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": {"seed": 1}, "map": {"name": "horseshoe"}})
    assert info.value.field == "map.name"
    assert info.value.code == ErrorCode.CONFIG_INVALID


def test_custom_map_with_form(tmp_path):
    path = write_ini(tmp_path, """
        [experiment]
        seed = 2

        [map]
        name =
        manifold = heisenberg
        x = 2*x + y
        y = x + y
        z = z + x^2 + x*y + y^2/2
        base_x = 2*x + y
        base_y = x + y
        volume_preserving = true

        [form]
        a = 0
        b = -x
        c = 1
    """)
    config = load_config(path)
    assert config.experiment.id == "verify-custom-s2"
    spec = config.map_spec()
    assert spec.name == "custom"
    assert spec.manifold.is_heisenberg
    assert spec.volume_preserving
    assert spec.inverse is None
    assert spec.contact_form is not None


def test_custom_map_needs_every_component():
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": {"seed": 1}, "map": {"name": "", "x": "x", "y": "y"}})
    assert info.value.field == "map"


def test_bad_expression_surfaces_as_config_error():
    config = validate_config({"experiment": {"seed": 1}, "map": {"name": "", "x": "x+", "y": "y", "z": "z"}})
    with pytest.raises(ConfigError) as info:
        config.map_spec()
    assert info.value.code == ErrorCode.EXPR_SYNTAX


def test_heisenberg_step_range():
    with pytest.raises(ConfigError) as info:
        validate_config({"experiment": {"seed": 1}, "heisenberg": {"step": "0.01"}})
    assert info.value.field == "heisenberg.step"


def test_heisenberg_pipeline_id_names_the_family():
    config = validate_config({"experiment": {"seed": 4, "pipeline": "heisenberg"}})
    assert config.experiment.id == "heisenberg-F-s4"

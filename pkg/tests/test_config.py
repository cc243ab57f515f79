import textwrap
from pathlib import Path

import pytest

from reskam.config import PipelineConfig, load_config, parse_config, parse_overrides
from reskam.hambuild import OrbitalConfig

CONFIGS = Path(__file__).parent.parent / "configs"


def test_shipped_config_is_the_default():
    assert load_config(CONFIGS / "hd60532.ini") == PipelineConfig()


def test_when_empty_then_hd60532_defaults():
    config = parse_config("")

    assert config.system == OrbitalConfig.hd60532()
    assert config.kolmogorov.steps == 5
    assert config.ledger_steps == 9
    assert config.certify.converge.r_i == 20
    assert config.certify.check_steps == 3


def test_default_truncation_keeps_a_block_for_every_birkhoff_step():
    config = PipelineConfig()

    assert config.series.sqrt_degree - 2 >= config.birkhoff.steps
    assert config.birkhoff.intermediate_steps == 5
    assert config.birkhoff.intermediate_steps < config.birkhoff.steps


def test_intermediate_steps_are_read_from_the_birkhoff_section():
    config = parse_config("[birkhoff]\nsteps = 4\nintermediate_steps = 3")

    assert config.birkhoff.steps == 4
    assert config.birkhoff.intermediate_steps == 3


def test_when_sections_are_given_then_values_are_converted():
    config = parse_config(
        textwrap.dedent(
            """
        [system]
        resonance = 2:1
        mass_unit = 0.5

        [caps]
        fourier = 8
        sqrt_degree = 4
        method = stencil

        [kolmogorov]
        steps = 3
        ledger_steps = 4
        carry_frequency_shift = no

        [calibrate]
        target = -0.027

        [converge]
        tau = 1.5
        check_steps = 0
            """
        )
    )

    assert config.system.resonance == (2, 1)
    assert config.system.mass_unit == 0.5
    assert config.expansion.fourier == 8
    assert config.expansion.method == "stencil"
    assert config.series.sqrt_degree == 4
    assert config.kolmogorov.steps == 3
    assert config.kolmogorov.carry_frequency_shift is False
    assert config.ledger_steps == 4
    assert config.calibrate.target == -0.027
    assert config.certify.converge.tau == 1.5
    assert config.certify.check_steps == 0


def test_when_planets_are_given_then_they_replace_the_defaults():
    config = parse_config(
        textwrap.dedent(
            """
        [planet.inner]
        mass = 1.0
        a = 1.0
        e = 0.1
        omega = 10
        mean_anomaly = 20

        [planet.outer]
        mass = 2.0
        a = 2.08
        e = 0.05
        omega = 30
        mean_anomaly = 40
            """
        )
    )

    assert [p.name for p in config.system.planets] == ["inner", "outer"]
    assert config.system.planets[1].a == 2.08


@pytest.mark.parametrize(
    "text",
    [
        "[unknown]\nx = 1",
        "[birkhoff]\nsteps = many",
        "[birkhoff]\norder = 3",
        "[caps]\ndegree = 3",
        "[system]\nresonance = three",
        "[system]\ncolour = red",
        "[kolmogorov]\ncarry_frequency_shift = maybe",
        "[planet.b]\nmass = 1\na = 1\ne = 0.1\nomega = 0\nmean_anomaly = 0",
        "[planet.b]\nmass = 1\na = 1",
    ],
)
def test_when_config_is_invalid_then_value_error(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_when_ledger_is_shorter_than_the_steps_then_assertion_error():
    with pytest.raises(AssertionError):
        parse_config("[kolmogorov]\nsteps = 6\nledger_steps = 5")


def test_with_caps_splits_between_expansion_and_series():
    config = PipelineConfig().with_caps(parse_overrides("fourier=8, action_degree=3"))

    assert config.expansion.fourier == 8
    assert config.series.action_degree == 3
    assert config.series.sqrt_degree == PipelineConfig().series.sqrt_degree


def test_when_cap_is_unknown_then_value_error():
    with pytest.raises(ValueError):
        PipelineConfig().with_caps({"depth": "3"})


def test_with_steps():
    config = PipelineConfig()

    assert config.with_steps("birkhoff", 4).birkhoff.steps == 4
    assert config.with_steps("certify", 10).certify.converge.r_i == 10
    longer = config.with_steps("kolmogorov", 12)
    assert longer.kolmogorov.steps == 12
    assert longer.ledger_steps == 12


def test_when_stage_has_no_steps_then_value_error():
    with pytest.raises(ValueError):
        PipelineConfig().with_steps("expand", 3)


def test_sections_feed_stage_keys():
    config = PipelineConfig()

    assert config.section("kolmogorov")["ledger_steps"] == 9
    assert config.section("converge")["check_steps"] == 3
    assert set(config.as_dict()) >= {"system", "expansion", "series", "converge"}
    with pytest.raises(ValueError):
        config.section("caps")


def test_parse_overrides():
    assert parse_overrides(None) == {}
    assert parse_overrides("a=1,b = 2") == {"a": "1", "b": "2"}
    with pytest.raises(ValueError):
        parse_overrides("a")

import textwrap

import pytest

from novikov.diagnostics.weights import default_scale
from shared.run_config import ConfigError, config_hash, parse_config, parse_text, serialize


def _parse(text):
    return parse_text(textwrap.dedent(text))


def test_minimal_config_takes_defaults():
    config = _parse("experiment: simulate\n")
    assert config.seed == 0
    assert config.step.cfl == 0.3
    assert config.step.scheme == "particles"
    assert config.initial.kind == "mollified"
    assert config.initial.w == 0.2
    assert len(config.initial.peakons) == 1
    assert config.diagnostics.K == 4.0
    assert config.sweep is None
    assert config.output.directory is None


def test_train_scale_follows_the_separation():
    config = _parse(
        """
        experiment: train
        initial:
          kind: train
          L: 6400
          peakons:
            - {a: 1, b: 1, x0: 0}
            - {a: 2, b: 2, x0: 6400}
        """
    )
    assert config.diagnostics.K == pytest.approx(default_scale(6400.0))
    assert config.initial.train_spec().L == 6400.0


def test_unknown_key_reports_its_line():
    with pytest.raises(ConfigError) as e:
        _parse(
            """
            experiment: simulate
            grid:
              n: 1025
              spacing: 3
            """
        )
    assert e.value.field == "grid.spacing"
    assert e.value.line == 5
    assert "unknown key" in str(e.value)


def test_unordered_train_names_the_peakon():
    with pytest.raises(ConfigError) as e:
        _parse(
            """
            experiment: train
            initial:
              kind: train
              L: 10
              peakons:
                - {a: 2, b: 1, x0: 0}
                - {a: 1, b: 2, x0: 20}
            """
        )
    assert e.value.field == "initial.peakons[1].a"
    assert e.value.line == 8


@pytest.mark.parametrize(
    "body, field",
    [
        ("experiment: simulate\nstep:\n  t_end: -1\n", "step.t_end"),
        ("experiment: simulate\nstep:\n  scheme: spectral\n", "step.scheme"),
        ("experiment: simulate\ndiagnostics:\n  K: 2\n", "diagnostics.K"),
        ("experiment: simulate\ninitial:\n  amplitude: -0.1\n", "initial.amplitude"),
        ("experiment: simulate\ntolerances:\n  key: 0\n", "tolerances.key"),
        ("experiment: simulate\ngrid:\n  n: 10\n", "grid"),
        ("experiment: explode\n", "experiment"),
        ("seed: 3\n", "experiment"),
        ("experiment: train\n", "initial.kind"),
        ("experiment: stability-sweep\n", "sweep"),
        ("experiment: simulate\ninitial:\n  kind: train\n", "initial"),
        ("experiment: simulate\nsweep:\n  axis: seed\n  values: [1.5]\n", "sweep.values"),
    ],
)
def test_invalid_fields_are_located(body, field):
    with pytest.raises(ConfigError) as e:
        parse_text(body)
    assert e.value.field == field


def test_malformed_yaml_is_a_config_error():
    with pytest.raises(ConfigError) as e:
        parse_text("experiment: [simulate\n")
    assert "malformed YAML" in str(e.value)


def test_exponent_strings_are_numbers():
    config = _parse(
        """
        experiment: identities
        tolerances:
          pointwise: 1e-3
          one_sided: 5.0e-3
        """
    )
    assert config.tolerances.pointwise == 1e-3
    assert config.tolerances.one_sided == 5e-3


def test_serialized_config_parses_back_unchanged():
    config = _parse(
        """
        experiment: stability-sweep
        seed: 11
        grid: {x_left: -30, x_right: 30, n: 2049}
        initial:
          kind: perturbed
          amplitude: 0.05
          peakons:
            - {a: 1.5, b: 0.5, x0: 2}
        step: {t_end: 4, record_every: 5, scheme: grid}
        sweep:
          axis: delta
          values: [0.02, 0.04]
        output:
          directory: runs/sweep
        """
    )
    again = parse_text(serialize(config))
    assert again == config
    assert config_hash(again) == config_hash(config)
    assert config_hash(config.with_seed(12)) != config_hash(config)


def test_config_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.yaml")
    path = tmp_path / "run.yaml"
    path.write_text("experiment: simulate\nseed: 5\n")
    assert parse_config(path).seed == 5

import pytest
from hypothesis import given, settings, strategies as st

from qlorentz.config import ExperimentConfig
from qlorentz.errors import ConfigError

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=50)
@given(finite, finite, st.integers(0, 2**31), st.lists(finite, max_size=4), st.booleans())
def test_serialize_parse_is_identity(width, lam, seed, values, hierarchy):
    text = f"""
[run]
seed = {seed}
[potential]
width = {width!r}
[coupling]
lam_max = {lam!r}
[duhamel]
r_values = {", ".join(repr(v) for v in values)}
[vn]
hierarchy = {str(hierarchy).lower()}
"""
    cfg = ExperimentConfig.from_string(text)
    again = ExperimentConfig.from_string(cfg.to_string())
    assert again == cfg
    assert again.to_string() == cfg.to_string()
    assert cfg.duhamel.r_values == tuple(values)


def test_defaults_validate_for_every_command():
    for command in ("tmatrix", "kernel", "lbe-run", "duhamel-check", "vn-run", "validate", "scatterers"):
        ExperimentConfig().validate(command)


@pytest.mark.parametrize("text", [
    "[nonsense]\nx = 1\n",
    "[run]\ncolour = blue\n",
    "[run]\ndim = three\n",
    "[vn]\nhierarchy = maybe\n",
])
def test_malformed_configs_are_rejected_on_parse(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_string(text)


@pytest.mark.parametrize("text,command", [
    ("[run]\ndim = 4\n", None),
    ("[potential]\nfamily = square\n", None),
    ("[potential]\nwidth = 0\n", None),
    ("[a]\nx0 = 0, 0\n", None),
    ("[transport]\ngeometry = slab\n", None),
    ("[coupling]\nlam_max = -1\n", None),
    ("[duhamel]\ninner_radius = 1.0\n", None),
    ("[scatterers]\neps_values = 0.5, 1.5\n", None),
    ("[scattering]\ntmatrix_file = missing.txt\n", "kernel"),
    ("[vn]\nscatterer_file = missing.txt\n", "vn-run"),
])
def test_inconsistent_configs_fail_validation(text, command):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_string(text).validate(command)


def test_referenced_files_resolve_against_the_config_directory(tmp_path):
    (tmp_path / "t.txt").write_text("x")
    (tmp_path / "c.ini").write_text("[scattering]\ntmatrix_file = t.txt\n")
    ExperimentConfig.from_file(tmp_path / "c.ini").validate("kernel")

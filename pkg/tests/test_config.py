import pytest

from geoflow.chain import VarianceRule
from geoflow.config import RunConfig, load_config, parse_overrides
from geoflow.errors import ConfigError, ExcludedConfigurationError


def test_defaults():
    cfg = load_config(text="")
    assert cfg == RunConfig()
    assert len(cfg.morph.alpha_list()) == 18
    assert cfg.features.n_features == 15
    assert cfg.chain_indices() == [(1, 18), tuple(range(1, 19))]


def test_chain_spec():
    cfg = load_config(text="chain:\n  subspace_dim: {variance_threshold: 0.9, cap: 7}\n  aligner: wrms\n")
    spec = cfg.chain_spec((1, 5, 18), "gfk")
    assert spec.subspace_dim == VarianceRule(0.9, 7)
    assert spec.aligner == "wrms" and spec.k == 1


def test_unknown_key_has_line():
    text = "seed: 1\nfeatures:\n  n_modes: 10\n  noise_fraction: 0.01\n"
    with pytest.raises(ConfigError) as e:
        load_config(text=text)
    assert str(e.value) == "<config>:4: features.noise_fraction: unknown key 'noise_fraction'"


def test_bad_value_has_line():
    text = "chain:\n  methods: [linear, svm]\n"
    with pytest.raises(ConfigError) as e:
        load_config(text=text)
    assert str(e.value).startswith("<config>:2: chain.methods.1:")


def test_union_location_is_clean():
    text = "chain:\n  subspace_dim: {variance_threshold: 2.0}\n"
    with pytest.raises(ConfigError) as e:
        load_config(text=text)
    msg = str(e.value)
    assert "chain.subspace_dim" in msg and "VarianceCfg" not in msg
    assert msg.startswith("<config>:2:")


def test_alpha_below_floor_names_alpha():
    text = "morph:\n  alphas: [0.0, 0.05, 0.5, 1.0]\n"
    with pytest.raises(ConfigError) as e:
        load_config(text=text)
    assert "alpha=0.05" in str(e.value) and "<config>:2" in str(e.value)


def test_alphas_method_raises_excluded():
    cfg = RunConfig()
    bad = cfg.model_copy(update={"morph": cfg.morph.model_copy(update={"alphas": [0.0, 0.05, 1.0]})})
    with pytest.raises(ExcludedConfigurationError):
        bad.alphas()


def test_harness_exactly_one_rule():
    with pytest.raises(ConfigError):
        load_config(text="harness:\n  sem_target: 0.01\n")
    cfg = load_config(text="harness:\n  n_realisations: null\n  sem_target: 0.01\n")
    assert cfg.harness.sem_target == 0.01


def test_chain_list_validated():
    with pytest.raises(ConfigError):
        load_config(text="chain:\n  chains: [[1, 5, 4, 18]]\n")
    cfg = load_config(text="chain:\n  chains: [[1, 4, 18]]\n")
    assert cfg.chain_indices() == [(1, 4, 18)]


def test_search_k_checked_against_pool():
    cfg = load_config(text="morph:\n  n_intermediates: 2\nsearch:\n  k_values: [0, 3]\n")
    with pytest.raises(ConfigError, match="k=3"):
        cfg.check_search()


def test_overrides():
    ov = parse_overrides(["features.noise_frac=0.01", "chain.methods=[gfk]", "seed=5"])
    cfg = load_config(text="seed: 1\n", overrides=ov)
    assert cfg.features.noise_frac == 0.01 and cfg.chain.methods == ["gfk"] and cfg.seed == 5


def test_override_errors_name_the_flag():
    with pytest.raises(ConfigError) as e:
        load_config(text="", overrides=parse_overrides(["chain.svm_c=-1"]))
    assert str(e.value).startswith("--set chain.svm_c: chain.svm_c:")
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])


def test_yaml_syntax_error_line():
    with pytest.raises(ConfigError) as e:
        load_config(text="seed: 1\nchain: [\n")
    assert "YAML syntax error" in str(e.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_digest_tracks_generation_blocks_only():
    a = load_config(text="")
    b = load_config(text="chain:\n  svm_c: 2.0\nharness:\n  n_realisations: 7\n")
    c = load_config(text="features:\n  noise_frac: 0.01\n")
    assert a.generation_digest() == b.generation_digest() != c.generation_digest()


def test_example_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.yaml")):
        cfg = load_config(path)
        cfg.check_search()

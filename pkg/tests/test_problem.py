import json

import pytest

from conftest import CONFIGS, config_path
from drchance.problem import ConfigError, load_spec, spec_from_json

ALL = sorted(p.stem for p in CONFIGS.glob("*.json"))


def test_shipped_configs_present():
    assert {"ex1", "ex2", "ex3", "joint1", "momentbox1"} <= set(ALL)


@pytest.mark.parametrize("name", ALL)
def test_round_trip_is_identity(name):
    spec = load_spec(config_path(name))
    again = spec_from_json(json.loads(json.dumps(spec.to_json())))
    assert again == spec
    assert again.canonical_hash() == spec.canonical_hash()


def _raw(name="ex1"):
    return json.loads(config_path(name).read_text())


@pytest.mark.parametrize("field,mutate", [
    ("epsilon", lambda d: d.pop("epsilon")),
    ("epsilon", lambda d: d.update(epsilon=1.5)),
    ("epsilon", lambda d: d.update(epsilon="often")),
    ("variant", lambda d: d.update(variant="robust")),
    ("n", lambda d: d.pop("n")),
    ("X", lambda d: d.pop("X")),
    ("f", lambda d: d.pop("f_list", None) or d.pop("f", None)),
    ("schema", lambda d: d.update(schema="drchance-problem/99")),
    ("family", lambda d: d.update(family={"family": "cauchy"})),
    ("family", lambda d: d.update(variant="stokes", family={"family": "exponential"}, t=1,
                                  A={"box": [[0.5, 1.0]]},
                                  f_list=[[{"exps": [1, 0, 0], "coef": 1.0}]])),
    ("f_list", lambda d: d.update(variant="joint")),
])
def test_errors_name_the_field(field, mutate):
    data = _raw()
    mutate(data)
    with pytest.raises(ConfigError) as err:
        spec_from_json(data)
    assert str(err.value).startswith(field + ":") or str(err.value).startswith(field + ".")


def test_missing_epsilon_message():
    data = _raw()
    del data["epsilon"]
    with pytest.raises(ConfigError, match=r"^epsilon: required$"):
        spec_from_json(data)


def test_unreadable_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError, match="^config:"):
        load_spec(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="^config:"):
        load_spec(bad)


def test_hash_changes_with_content():
    a = load_spec(config_path("ex1"))
    b = a.with_(epsilon=0.25)
    assert a.canonical_hash() != b.canonical_hash()
    assert a.with_(epsilon=0.3).canonical_hash() == a.canonical_hash()


def test_order_is_half_the_degree():
    spec = load_spec(config_path("ex1"))
    assert spec.degree == 8 and spec.order == 4
    assert spec.with_(degree=12).order == 6

import json

import pytest

from bridgelab.config import ConfigError, load, locate

BASE = {
    "experiment": "figure1",
    "instance": {
        "process": {"kind": "ou", "alpha": 1.0},
        "grid": {"lower": -6.0, "upper": 6.0, "n_points": 201},
        "mu": {"family": "gaussian", "mean": 0.0, "variance": 0.25},
        "nu": "stationary",
    },
}


def write(tmp_path, obj_or_text):
    p = tmp_path / "c.json"
    p.write_text(obj_or_text if isinstance(obj_or_text, str) else json.dumps(obj_or_text, indent=2))
    return p


def test_valid_config(tmp_path):
    cfg = load(write(tmp_path, BASE))
    assert cfg.experiment == "figure1" and cfg.times().size == 41
    assert cfg.raw == BASE


def test_json_syntax_error_has_line(tmp_path):
    with pytest.raises(ConfigError) as e:
        load(write(tmp_path, '{\n  "experiment": "figure1",\n  "instance": ,\n}'))
    assert e.value.line == 3


@pytest.mark.parametrize("mutate, key", [
    (lambda d: d["instance"]["grid"].update(n_points=2), "n_points"),
    (lambda d: d["instance"]["process"].update(alpha=-1.0), "alpha"),
    (lambda d: d["instance"]["mu"].update(variance=0.0), "variance"),
    (lambda d: d.update(experiment="nope"), "experiment"),
    (lambda d: d.update(epsilons=[1.0, 0.5, 0.7]), "0.7"),
    (lambda d: d.update(unknown_key=1), "unknown_key"),
    (lambda d: d["instance"]["process"].update(kind="levy"), "kind"),
])
def test_semantic_errors_point_at_the_key(tmp_path, mutate, key):
    d = json.loads(json.dumps(BASE))
    mutate(d)
    p = write(tmp_path, d)
    with pytest.raises(ConfigError) as e:
        load(p)
    lines = p.read_text().splitlines()
    # list elements are located at the element itself
    assert (key if key[0].isdigit() else f'"{key}"') in lines[e.value.line - 1]


def test_brownian_cannot_have_stationary_marginal(tmp_path):
    d = json.loads(json.dumps(BASE))
    d["instance"]["process"] = {"kind": "brownian"}
    with pytest.raises(ConfigError):
        load(write(tmp_path, d))


def test_missing_tabulated_file(tmp_path):
    d = json.loads(json.dumps(BASE))
    d["instance"]["mu"] = {"family": "tabulated", "file": "nope.csv"}
    with pytest.raises(ConfigError, match="file not found"):
        load(write(tmp_path, d))


def test_locate_list_elements():
    text = '{\n "epsilons": [\n  1,\n  0.5,\n  0.7\n ]\n}'
    assert locate(text, ("epsilons", 2)) == 5

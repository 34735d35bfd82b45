# Copyright (c) 2025 HHG-Stokes contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from hhgstokes.utils.file import (
    DEFAULT_BENCH_CONFIG,
    ConfigError,
    bench_config,
    config_to_dict,
    format_value,
    load_config,
    read_json,
    read_key_value_config,
    read_triplets,
    write_csv,
    write_json,
    write_triplets,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "example" / "configs"


def test_key_value_config(tmp_path):
    path = tmp_path / "a.conf"
    path.write_text("# header\nmax_level = 4\n\nparams = 1,2,1,1,F,3  # trailing\nsweep.kappa = [1, 2]\n")
    config = read_key_value_config(path)
    assert config.max_level == 4
    assert config.params == "1,2,1,1,F,3"
    assert list(config.sweep.kappa) == [1, 2]


@pytest.mark.parametrize("text, message", [("max_level 4\n", ":1: expected"), ("a = 1\n = 2\n", ":2: empty key")])
def test_key_value_config_errors(tmp_path, text, message):
    path = tmp_path / "bad.conf"
    path.write_text(text)
    with pytest.raises(ConfigError, match=message):
        read_key_value_config(path)


def test_base_config_merge(tmp_path):
    (tmp_path / "base.conf").write_text("mesh = cube\nmax_level = 2\n")
    (tmp_path / "child.conf").write_text("base_config = base.conf\nmax_level = 4\n")
    config = load_config(tmp_path / "child.conf")
    assert config.mesh == "cube"
    assert config.max_level == 4


def test_missing_config(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.conf")


def test_bench_config_layers(tmp_path):
    assert config_to_dict(bench_config()) == DEFAULT_BENCH_CONFIG

    path = tmp_path / "run.conf"
    path.write_text("discretization = p1p1\nmax_level = 4\n")
    config = bench_config(path, ["max_level=5", "bounds.gamma_p=4.0"])
    assert config.discretization == "p1p1"
    assert config.max_level == 5
    assert config.bounds.gamma_p == 4.0
    assert config.bounds.gamma_u == 2.0


def test_example_configs_chain():
    config = bench_config(CONFIG_DIR / "sweep_p1p1.yaml")
    assert "base_config" not in config
    assert config.discretization == "p1p1"
    assert config.max_level == 3
    assert config.params == "1,0,2,1,S,1"
    assert config.sweep.subset == "curated"
    for name in ("cube_p2p1.conf", "cube_p1p1.conf", "outflow.conf"):
        bench_config(CONFIG_DIR / name)


@pytest.mark.parametrize(
    "override",
    [
        "discretization=q2",
        "problem=cavity",
        "max_level=1",
        "max_level=2.5",
        "epsilon=0",
        "max_cycles=0",
        "schur_diagonal=exact",
        "output_format=xml",
        "sweep.subset=all",
        "omega_inv=fast",
        "omega_inv=-1",
        "bounds.gamma_u=0",
    ],
)
def test_invalid_config(override):
    with pytest.raises(ConfigError):
        bench_config(overrides=[override])


def test_numeric_omega_is_accepted():
    assert bench_config(overrides=["omega_inv=0.25"]).omega_inv == 0.25


def test_format_value():
    assert format_value(None) == ""
    assert format_value(np.bool_(True)) == "True"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(np.float32(0.5)) == "0.5"
    assert format_value(np.int64(3)) == "3"
    assert format_value("F") == "F"


def test_write_csv(tmp_path):
    path = write_csv([{"a": 1, "b": 0.5}, {"a": None}], ["a", "b"], tmp_path / "sub" / "t.csv")
    assert path.read_text().splitlines() == ["a,b", "1,0.5", ","]


def test_json_round_trip(tmp_path):
    payload = {"x": np.arange(3), "y": np.float64(1.5), "n": {1: np.int32(2)}, "t": (1, 2)}
    path = write_json(payload, tmp_path / "out.json")
    assert read_json(path) == {"x": [0, 1, 2], "y": 1.5, "n": {"1": 2}, "t": [1, 2]}


def test_triplets(tmp_path):
    matrix = sp.csr_matrix(np.array([[2.0, 0.0], [-1.0, 1.0 / 3.0]]))
    path = write_triplets(matrix, tmp_path / "m.txt")
    data = read_triplets(path)
    assert data.shape == (3, 3)
    rebuilt = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(2, 2))
    assert np.array_equal(rebuilt.toarray(), matrix.toarray())

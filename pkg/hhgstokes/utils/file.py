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
"""
Description:
    This script contains the configuration layer and the file writers of the
    benchmark driver: loading ``key = value`` or YAML configs with base-config
    merging, the default benchmark schema, result tables (CSV/JSON with a
    metadata sidecar) and coordinate-form matrix export.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from omegaconf import DictConfig, OmegaConf

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration values."""


DEFAULT_BENCH_CONFIG: Dict[str, Any] = {
    "mesh": "cube",
    "problem": "cube",
    "discretization": "p2p1",
    "max_level": 3,
    "params": "1,2,1,1,F,3",
    "omega_inv": "tabulated",
    "schur_diagonal": "pspg",
    "epsilon": 1e-12,
    "max_cycles": 200,
    "output_dir": "results",
    "output_format": "both",
    "cache_dir": ".cache/references",
    "export_cap": 3,
    "seed": 0,
    "tolerance": 0.15,
    "sweep": {"subset": "curated", "kappa": None, "budget": 64},
    "bounds": {"gamma_u": 2.0, "gamma_p": 10.0},
}


def read_key_value_config(config_path: Path) -> DictConfig:
    """Parses ``key = value`` lines (``#`` comments, dotted keys) into a DictConfig."""
    dotlist = []
    with open(config_path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{config_path}:{line_no}: expected 'key = value', got '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{config_path}:{line_no}: empty key")
            dotlist.append(f"{key}={value}")
    return OmegaConf.from_dotlist(dotlist)


def load_config(config_path: Union[str, Path]) -> DictConfig:
    """Loads a configuration file and optionally merges it with a base configuration.

    Args:
    config_path (Path): Path to the configuration file, YAML (``.yaml``/``.yml``)
        or line-oriented ``key = value`` text.
    """
    config_path = Path(config_path)
    if not config_path.is_file():
        raise ConfigError(f"config file {config_path} not found")
    if config_path.suffix in (".yaml", ".yml"):
        config = OmegaConf.load(config_path)
    else:
        config = read_key_value_config(config_path)

    # Check if there is a base configuration specified and merge if necessary
    if config.get("base_config", None) is not None:
        base_path = Path(config["base_config"])
        if not base_path.is_absolute():
            base_path = config_path.parent / base_path
        base_config = load_config(base_path)
        config = OmegaConf.merge(base_config, config)

    return config


def bench_config(
    config_path: Optional[Union[str, Path]] = None, overrides: Optional[Sequence[str]] = None
) -> DictConfig:
    """Defaults, then the config file, then ``key=value`` overrides."""
    config = OmegaConf.create(DEFAULT_BENCH_CONFIG)
    if config_path is not None:
        config = OmegaConf.merge(config, load_config(config_path))
    if overrides:
        config = OmegaConf.merge(config, OmegaConf.from_dotlist(list(overrides)))
    config.pop("base_config", None)
    validate_config(config)
    return config


def validate_config(config: DictConfig) -> None:
    if str(config.discretization).lower() not in ("p1p1", "p2p1"):
        raise ConfigError(f"discretization must be p1p1 or p2p1, got '{config.discretization}'")
    if str(config.problem) not in ("cube", "body_force"):
        raise ConfigError(f"problem must be cube or body_force, got '{config.problem}'")
    if not isinstance(config.max_level, int) or config.max_level < 2:
        raise ConfigError(f"max_level must be an integer >= 2, got {config.max_level!r}")
    if not float(config.epsilon) > 0:
        raise ConfigError(f"epsilon must be positive, got {config.epsilon}")
    if int(config.max_cycles) < 1:
        raise ConfigError(f"max_cycles must be >= 1, got {config.max_cycles}")
    if str(config.schur_diagonal) not in ("pspg", "lumped_mass"):
        raise ConfigError(f"schur_diagonal must be pspg or lumped_mass, got '{config.schur_diagonal}'")
    if str(config.output_format) not in ("csv", "json", "both"):
        raise ConfigError(f"output_format must be csv, json or both, got '{config.output_format}'")
    if str(config.sweep.subset) not in ("curated", "full"):
        raise ConfigError(f"sweep.subset must be curated or full, got '{config.sweep.subset}'")
    for kappa in config.sweep.kappa or ():
        if kappa not in (1, 2):
            raise ConfigError(f"sweep.kappa entries must be 1 or 2, got {kappa!r}")
    omega = config.omega_inv
    if isinstance(omega, str) and omega not in ("tabulated", "estimate"):
        try:
            omega = float(omega)
        except ValueError:
            raise ConfigError(f"omega_inv must be 'tabulated', 'estimate' or a number, got '{omega}'")
    if isinstance(omega, (int, float)) and not omega > 0:
        raise ConfigError(f"omega_inv must be positive, got {omega}")
    for key in ("gamma_u", "gamma_p"):
        if not float(config.bounds[key]) > 0:
            raise ConfigError(f"bounds.{key} must be positive")


def format_value(value: Any) -> str:
    """Fixed textual form of a table cell: floats with 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(rows: Iterable[Dict[str, Any]], fieldnames: List[str], csv_path: Union[str, Path]) -> Path:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in fieldnames})
    logger.info(f"CSV file has been created at {csv_path}")
    return csv_path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def write_json(payload: Dict[str, Any], json_path: Union[str, Path]) -> Path:
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(payload), f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.info(f"JSON file has been created at {json_path}")
    return json_path


def read_json(json_path: Union[str, Path]) -> Dict[str, Any]:
    with open(json_path, "r", encoding="utf-8") as f:
        return json.load(f)


def config_to_dict(config: Union[DictConfig, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(config, DictConfig):
        return OmegaConf.to_container(config, resolve=True)
    return dict(config)


def write_triplets(matrix, path: Union[str, Path]) -> Path:
    """Writes a sparse matrix as ``row col value`` lines."""
    coo = matrix.tocoo()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{int(r)} {int(c)} {float(v):.17g}\n")
    logger.info(f"Matrix with {coo.nnz} entries written to {path}")
    return path


def read_triplets(path: Union[str, Path]) -> np.ndarray:
    """Reads ``row col value`` lines into an (nnz, 3) array."""
    data = np.loadtxt(path, ndmin=2)
    return data.reshape(-1, 3)

"""
Run configuration: a flat JSON document validated by pydantic.
"""

import json
import logging
import os
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from src.core.models import CouplingSequence, ModelParams, validate_couplings
from src.core.numeric import as_fraction
from src.errors import ConfigError, InvalidParams
from src.settings import settings

logger = logging.getLogger(__name__)

Number = Union[int, float, str]

DEFAULT_TOLERANCES: Dict[str, float] = {
    'contour_identity': 1e-10,
    'contour_floor': 1e-12,
    'deformation': 1e-8,
    'stationary_residual': 1e-12,
    'lagrange_constraint': 1e-12,
    'extrapolation_residual': 1e-6,
    'limit_gap': 1e-4,
    'cutoff': 1e-6,
    't1_gap': 1e-3,
}

DEFAULT_COUPLINGS: Dict[str, Number] = {'2': '1/2', '3': '-3/4', '4': '1/3'}

ALTERNATING = 'alternating'


class RunConfig(BaseModel):
    """
    Everything one verification run depends on.

    The instance keys (N, p, r, imax, eps, couplings) drive verify-partition
    and the exactly enumerable bound checks; the scan_* keys drive the
    thermodynamic-limit scan.
    """
    model_config = ConfigDict(extra='forbid')

    N: int = 48
    p: Number = '1/4'
    r: Number = 1
    imax: int = 4
    eps: Number = 1
    couplings: Union[Dict[str, Number], str] = DEFAULT_COUPLINGS
    coupling_table: Optional[Dict[str, Dict[str, Number]]] = None

    N_grid: List[int] = list(range(200, 2001, 200))
    scan_p: Number = '1/20'
    scan_imax: int = 8
    scan_couplings: Union[Dict[str, Number], str] = ALTERNATING
    cutoff_imax: int = 10
    p_scan: Optional[List[Number]] = None

    random_instances: int = 100
    bound_draws: int = 1000
    bound_instances: int = 1000
    domination_samples: int = 10000
    domination_N: int = 400
    h_gamma: Number = '1/2'
    stirling_n_max: int = 10 ** 6

    tolerances: Dict[str, float] = {}
    seed: int = 0
    precision: Optional[int] = None
    term_cap: Optional[int] = None
    node_cap: Optional[int] = None
    output: Optional[str] = None
    format: Literal['json', 'csv'] = 'json'

    @field_validator('N_grid')
    @classmethod
    def grid_increasing(cls, grid: List[int]) -> List[int]:
        if not grid:
            raise ValueError("N_grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"N_grid must be strictly increasing, got {grid}")
        return grid

    @field_validator('tolerances')
    @classmethod
    def known_tolerances(cls, tolerances: Dict[str, float]) -> Dict[str, float]:
        unknown = set(tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance names {sorted(unknown)}")
        return {**DEFAULT_TOLERANCES, **tolerances}

    @model_validator(mode='after')
    def instance_valid(self) -> 'RunConfig':
        try:
            self.params()
            self.scan_params()
        except InvalidParams as e:
            raise ValueError(str(e)) from e
        return self

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def params(self) -> ModelParams:
        return ModelParams(N=self.N, p=as_fraction(self.p), r=as_fraction(self.r),
                           imax=self.imax, eps=as_fraction(self.eps))

    def scan_params(self, N: Optional[int] = None, imax: Optional[int] = None) -> ModelParams:
        return ModelParams(N=N or self.N_grid[0], p=as_fraction(self.scan_p), r=as_fraction(self.r),
                           imax=imax or self.scan_imax, eps=as_fraction(self.eps))

    def instance_couplings(self, N: Optional[int] = None) -> CouplingSequence:
        """Couplings of the instance, per N when a coupling table is given."""
        if self.coupling_table and N is not None and str(N) in self.coupling_table:
            return validate_couplings(self.coupling_table[str(N)], as_fraction(self.r))
        return validate_couplings(_resolve(self.couplings), as_fraction(self.r))

    def scan_coupling_sequence(self, imax: Optional[int] = None, N: Optional[int] = None) -> CouplingSequence:
        r = as_fraction(self.r)
        if self.coupling_table and N is not None and str(N) in self.coupling_table:
            return validate_couplings(self.coupling_table[str(N)], r)
        if self.scan_couplings == ALTERNATING:
            top = imax or max(self.scan_imax, self.cutoff_imax)
            return validate_couplings({i: (-1) ** i * r ** i for i in range(2, top + 1)}, r)
        return validate_couplings(_resolve(self.scan_couplings), r)

    def precision_bits(self) -> int:
        return self.precision or settings.precision_bits


def _resolve(couplings: Union[Dict[str, Number], str]) -> Dict[int, Fraction]:
    if isinstance(couplings, str):
        if not os.path.exists(couplings):
            raise ConfigError(f"coupling file {couplings} not found")
        with open(couplings) as handle:
            couplings = json.load(handle)
        if not isinstance(couplings, dict):
            raise ConfigError("coupling file must hold an object of index -> value")
    return {int(i): as_fraction(v) for i, v in couplings.items()}


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """
    Read a config file (if any) and apply non-None overrides on top.

    Raises:
        ConfigError: on unreadable files, unknown keys or invalid values
    """
    document = {}
    if path:
        try:
            with open(path) as handle:
                document = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Cannot read config {path}: {e}")
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"config {path} must be a JSON object")

    document.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**document)
    except ValidationError as e:
        logger.error(f"Invalid run config: {e}")
        raise ConfigError(str(e)) from e

"""Pydantic models for experiment configs and result rows."""

from pathlib import Path
from typing import Any, Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from services.errors import InvalidArgumentError
from services.media import MediaSpec, default_contrast_field, oscillatory_media
from services.mesh import NestedMesh, build_nested_mesh
from services.ordinates import OrdinateSet, build_ordinates

RESULT_HEADER = ["L", "snapshot_ratio", "e1", "e2", "lambda_star", "t_offline_s", "t_online_s"]
EIGEN_HEADER = ["epsilon", "k", "lambda", "diff", "lambda0", "lower", "upper"]


# Config models
class ExperimentConfig(BaseModel):
    """Flat key = value experiment description; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(1, ge=1, le=1)
    nc_x: int = Field(10, ge=1)
    nc_y: int = Field(10, ge=1)
    nf: int = Field(10, ge=1)
    m: int = Field(6, ge=2)
    layout: Literal["trigonometric", "quarter_offset"] = "trigonometric"
    epsilon: float = Field(5e-3, gt=0)
    media: Literal["oscillatory", "contrast"] = "oscillatory"
    contrast_value: float = Field(10.0, ge=1)
    contrast_power: float = 4.0
    contrast_seed: int = 0
    boundary: Literal["cosine", "constant", "zero"] = "cosine"
    snapshot_method: Literal["det", "ran"] = "ran"
    k_j: int = Field(21, ge=1)
    seed: int = 0
    layers: int = Field(1, ge=0)
    L_list: list[int] = Field(default_factory=lambda: [1, 2, 3, 5, 7, 10, 15, 20])
    include_full: bool = False
    output_csv: str = "results.csv"
    dump_solution: Optional[str] = None
    reproducible: bool = True
    threads: int = Field(1, ge=1)
    study_block: Optional[int] = None
    use_cache: bool = True

    @field_validator("L_list", mode="before")
    @classmethod
    def split_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        return value

    @field_validator("dump_solution", "study_block", mode="before")
    @classmethod
    def blank_is_none(cls, value: Any) -> Any:
        return None if isinstance(value, str) and not value.strip() else value

    @model_validator(mode="after")
    def check_ranges(self) -> "ExperimentConfig":
        if not self.L_list:
            raise ValueError("L_list must name at least one mode count")
        if any(L < 1 for L in self.L_list):
            raise ValueError(f"L_list entries must be >= 1, got {self.L_list}")
        if self.study_block is not None and not 0 <= self.study_block < self.nc_x * self.nc_y:
            raise ValueError(f"study_block {self.study_block} outside the mesh")
        return self

    # builders

    def build_mesh(self) -> NestedMesh:
        return build_nested_mesh(self.nc_x, self.nc_y, self.nf)

    def build_ordinates(self) -> OrdinateSet:
        return build_ordinates(self.m, self.layout)

    def build_media(self, mesh: NestedMesh) -> MediaSpec:
        if self.media == "oscillatory":
            return oscillatory_media()
        return default_contrast_field(mesh, self.contrast_value, self.contrast_seed, power=self.contrast_power)

    def center_block(self) -> int:
        if self.study_block is not None:
            return self.study_block
        return (self.nc_y // 2) * self.nc_x + self.nc_x // 2

    def offline_params(self, media: MediaSpec) -> dict[str, Any]:
        """Everything the offline build depends on, for cache keys and consistency checks."""
        return {
            "mesh": [self.nc_x, self.nc_y, self.nf],
            "m": self.m,
            "layout": self.layout,
            "media": media.to_payload(),
            "epsilon": self.epsilon,
            "method": self.snapshot_method,
            "k_j": self.k_j,
            "seed": self.seed,
            "layers": self.layers,
        }


def load_config(path: str | Path, overrides: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    """Parse a flat key = value file (no interpolation) and validate it."""
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"config file not found: {path}")
    values: dict[str, Any] = {
        k: v for k, v in dotenv_values(path, interpolate=False).items() if v is not None
    }
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.model_validate(values)


# Result models
class ResultRow(BaseModel):
    L: int | Literal["full"]
    snapshot_ratio: float
    e1: float
    e2: float
    lambda_star: float
    t_offline_s: float = 0.0
    t_online_s: float = 0.0

    def as_row(self) -> list[Any]:
        return [self.L, self.snapshot_ratio, self.e1, self.e2, self.lambda_star, self.t_offline_s, self.t_online_s]


class EigenStudyRow(BaseModel):
    epsilon: float
    k: int
    lambda_: float = Field(alias="lambda")
    diff: float
    lambda0: float
    lower: float
    upper: float

    model_config = ConfigDict(populate_by_name=True)

    def as_row(self) -> list[Any]:
        return [self.epsilon, self.k, self.lambda_, self.diff, self.lambda0, self.lower, self.upper]

"""Run configuration: a small sectioned ``key = value`` format validated by pydantic.

Example file::

    [model]
    name = em
    Nt = 10
    Nx = 4

    [truncation]
    lambda_max = 2

    [run]
    suites = free_em, qme_em
    seed = 0
"""

from __future__ import annotations

import logging
import os
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    ValidationError,
    field_validator,
    model_validator,
)

from bv_veritas.errors import ConfigInvalid
from bv_veritas.lattice import MIN_SITES, MIN_SLICES
from bv_veritas.series import Window

logger = logging.getLogger(__name__)

REPORT_ENV = "BV_VERITAS_REPORT"

SUITE_NAMES = (
    "free_scalar",
    "free_em",
    "deformation",
    "interacting_scalar",
    "qme_em",
    "brst_free",
    "main_theorem",
    "change_free_theory",
    "negative_controls",
)

SECTIONS = ("model", "truncation", "margins", "run")
_LIST_KEYS = {"suites"}


def _to_fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {value!r}") from exc


# Exact rational written as "3", "1/2" or "0.25"; serialized back as a string.
RationalField = Annotated[
    Fraction, PlainValidator(_to_fraction), PlainSerializer(str, return_type=str)
]


class ModelSection(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    name: Literal["em", "scalar"] = "em"
    Nt: int = 10
    Nx: int = 4
    dt: RationalField = Fraction(1)
    dx: RationalField = Fraction(1)
    xi: RationalField = Fraction(1)
    mass: RationalField = Fraction(1)
    g3: RationalField = Fraction(1)
    g4: RationalField = Fraction(1)
    current_seed: int = 7

    @field_validator("Nt")
    @classmethod
    def _enough_slices(cls, v: int) -> int:
        if v < MIN_SLICES:
            raise ValueError(f"Nt must be at least {MIN_SLICES}")
        return v

    @field_validator("Nx")
    @classmethod
    def _enough_sites(cls, v: int) -> int:
        if v < MIN_SITES:
            raise ValueError(f"Nx must be at least {MIN_SITES}")
        return v

    @field_validator("dt", "dx")
    @classmethod
    def _positive(cls, v: Fraction) -> Fraction:
        if v <= 0:
            raise ValueError("spacings must be positive")
        return v

    @field_validator("mass")
    @classmethod
    def _nonnegative_mass(cls, v: Fraction) -> Fraction:
        if v < 0:
            raise ValueError("mass must be nonnegative")
        return v


class TruncationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda_max: int = 2
    k_min: int = -2
    k_max: int = 2

    @model_validator(mode="after")
    def _contains_origin(self) -> TruncationSection:
        if self.lambda_max < 0 or self.k_min > 0 or self.k_max < 0:
            raise ValueError("window must contain lambda^0 hbar^0")
        return self

    def window(self) -> Window:
        return Window(self.lambda_max, self.k_min, self.k_max)


class MarginSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    margin: int = 2

    @field_validator("margin")
    @classmethod
    def _nonnegative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("margin must be nonnegative")
        return v


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    suites: list[str] = Field(default_factory=lambda: list(SUITE_NAMES))
    seed: int = 0
    report: str = ""
    format: Literal["json", "md"] = "json"
    dump_kernels: str = ""
    workers: int = 4

    @field_validator("suites")
    @classmethod
    def _known_suites(cls, v: list[str]) -> list[str]:
        unknown = [s for s in v if s not in SUITE_NAMES]
        if unknown:
            raise ValueError(f"unknown suites: {', '.join(unknown)}")
        return v


class RunConfig(BaseModel):
    """Validated run configuration."""

    model_config = ConfigDict(extra="forbid")

    model: ModelSection = Field(default_factory=ModelSection)
    truncation: TruncationSection = Field(default_factory=TruncationSection)
    margins: MarginSection = Field(default_factory=MarginSection)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _dims_respect_margins(self) -> RunConfig:
        # plateau shrunk by the stencil radius must keep at least one slice
        if self.model.Nt - 2 * (self.margins.margin + 1) < 1:
            raise ValueError(
                f"Nt={self.model.Nt} leaves no slab inside margin {self.margins.margin}"
            )
        return self

    def echo(self) -> dict[str, Any]:
        return self.model_dump(mode="json")


def parse_config_text(text: str) -> tuple[dict[str, dict[str, Any]], dict[tuple[str, str], int]]:
    """Split a config file into raw sections, remembering the line of every key.

    Raises:
        ConfigInvalid: On syntax errors, with one diagnostic per bad line
    """
    raw: dict[str, dict[str, Any]] = {}
    lines: dict[tuple[str, str], int] = {}
    diagnostics: list[tuple[int, str]] = []
    section: str | None = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                diagnostics.append((number, f"unterminated section header {stripped!r}"))
                continue
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                diagnostics.append((number, f"unknown section [{section}]"))
                section = None
                continue
            raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            diagnostics.append((number, f"expected 'key = value', got {stripped!r}"))
            continue
        if section is None:
            diagnostics.append((number, "key outside of a known section"))
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            diagnostics.append((number, "empty key"))
            continue
        if key in raw[section]:
            diagnostics.append((number, f"duplicate key {key!r} in [{section}]"))
            continue
        if key in _LIST_KEYS:
            raw[section][key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            raw[section][key] = value
        lines[(section, key)] = number
    if diagnostics:
        raise ConfigInvalid(f"{len(diagnostics)} syntax error(s) in config", diagnostics)
    return raw, lines


def _diagnostics(exc: ValidationError, lines: dict[tuple[str, str], int]) -> list[tuple[int, str]]:
    out = []
    for error in exc.errors():
        loc = tuple(str(p) for p in error["loc"])
        number = 0
        if len(loc) >= 2:
            number = lines.get((loc[0], loc[1]), 0)
        elif len(loc) == 1:
            number = min((n for (s, _), n in lines.items() if s == loc[0]), default=0)
        out.append((number, f"{'.'.join(loc) or 'config'}: {error['msg']}"))
    return sorted(out)


def config_from_text(text: str) -> RunConfig:
    """Parse and validate config text; the report path may be overridden by the environment.

    Raises:
        ConfigInvalid: On syntax or validation errors
    """
    raw, lines = parse_config_text(text)
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigInvalid("config failed validation", _diagnostics(exc, lines)) from exc
    override = os.environ.get(REPORT_ENV)
    if override:
        logger.debug(f"Report path overridden by {REPORT_ENV}={override}")
        config = config.model_copy(
            update={"run": config.run.model_copy(update={"report": override})}
        )
    return config


def load_config(path: str | Path) -> RunConfig:
    """Read a config file.

    Raises:
        ConfigInvalid: If the file is missing, malformed or invalid
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}", [(0, str(exc))]) from exc
    logger.info(f"Loading config from {path}")
    return config_from_text(text)

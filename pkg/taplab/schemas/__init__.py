from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from taplab.config import get_settings
from taplab.core.measures import AtomicMeasure, EmpiricalMu, PrefixSpec
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec
from taplab.exceptions import ConfigError

# ─── Enums ───────────────────────────────────────────────


class TaskName(StrEnum):
    PARISI_SOLVE = "parisi-solve"
    TAP_EVAL = "tap-eval"
    OPTIMIZE_PREFIX = "optimize-prefix"
    STATIONARY_UQ = "stationary-uq"
    LAMBDA_CURVE = "lambda-curve"
    LEGENDRE = "legendre"
    SDE_SIM = "sde-sim"
    FREECONV = "freeconv"
    RMT_VERIFY = "rmt-verify"
    VERIFY_SUITE = "verify-suite"


class LambdaVariant(StrEnum):
    ANNEALED = "annealed"
    QUENCHED = "quenched"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ─── Sections ────────────────────────────────────────────


class XiConfig(_Section):
    """ξ(t) = Σ β_p² t^p as [[p, β_p²], …]."""

    coeffs: list[tuple[int, float]] = Field(
        default_factory=lambda: [(2, 0.25)], description="(degree, beta^2) pairs"
    )

    @field_validator("coeffs")
    @classmethod
    def validate_coeffs(cls, v: list[tuple[int, float]]) -> list[tuple[int, float]]:
        Mixture.from_pairs(v)
        return v

    def to_mixture(self) -> Mixture:
        return Mixture.from_pairs(self.coeffs)


class PrefixConfig(_Section):
    u: list[float]
    q: list[float]
    tail: list[tuple[float, float]] | None = None

    def to_spec(self) -> PrefixSpec:
        return PrefixSpec.from_dict(self.model_dump())


class MeasureConfig(_Section):
    """Order parameter ζ (atoms or a prefix) and an optional magnetization vector."""

    atoms: list[tuple[float, float]] | None = Field(
        default=None, description="(location, weight) pairs"
    )
    prefix: PrefixConfig | None = None
    magnetizations: list[float] | None = Field(
        default=None, description="Magnetization vector m for the empirical law μ"
    )

    @model_validator(mode="after")
    def validate_measure(self) -> "MeasureConfig":
        if self.atoms is not None and self.prefix is not None:
            raise ValueError("give either atoms or prefix, not both")
        if self.atoms is not None:
            AtomicMeasure.from_pairs(self.atoms)
        if self.prefix is not None:
            self.prefix.to_spec()
        if self.magnetizations is not None:
            EmpiricalMu(self.magnetizations)
        return self

    def to_measure(self) -> AtomicMeasure:
        if self.prefix is not None:
            return self.prefix.to_spec().assemble()
        if self.atoms is not None:
            return AtomicMeasure.from_pairs(self.atoms)
        return AtomicMeasure.delta(0.0)

    def to_mu(self) -> EmpiricalMu | None:
        return EmpiricalMu(self.magnetizations) if self.magnetizations is not None else None


class GridConfig(_Section):
    L: float | None = Field(default=None, gt=0, description="Half width of the spatial grid")
    points: int | None = Field(default=None, ge=257)
    quad_nodes: int | None = Field(default=None, ge=32)

    def to_grid(self) -> GridSpec:
        s = get_settings()
        return GridSpec(
            half_width=self.L if self.L is not None else s.grid_half_width,
            points=self.points or s.grid_points,
            quad_nodes=self.quad_nodes or s.quad_nodes,
        )


class McConfig(_Section):
    paths: int | None = Field(default=None, ge=2)
    dt: float | None = Field(default=None, gt=0, le=0.1)
    seed: int | None = None
    antithetic: bool | None = None
    samples: int | None = Field(default=None, ge=2, description="Field or GOE sample count")
    size: int | None = Field(default=None, ge=2, description="System size N for field checks")


class TaskConfig(_Section):
    """Task name plus the parameters the named task reads; unused ones are ignored."""

    name: TaskName = TaskName.PARISI_SOLVE
    levels: int = Field(default=1, ge=1, description="Prefix depth n")
    atoms: int = Field(default=2, ge=1, description="Atom budget for inner optimizations")
    f: float | None = Field(default=None, description="Free-energy level")
    fs: list[float] = Field(default_factory=list, description="Slopes for the Legendre transform")
    thetas: list[float] = Field(default_factory=list, description="θ grid for Λ(θ)")
    variant: LambdaVariant = LambdaVariant.ANNEALED
    t: float = Field(default=1.0, gt=0, description="Semicircle variance")
    xs: list[float] = Field(default_factory=list, description="Evaluation points")
    times: list[float] = Field(default_factory=list, description="Reporting times for sde-sim")
    bracket: tuple[float, float] = (0.05, 0.95)
    q: float = Field(default=0.5, gt=0, lt=1, description="Overlap of generated witnesses")
    spectrum: list[tuple[float, float]] = Field(
        default_factory=lambda: [(0.0, 1.0)], description="Spectral atoms (location, weight)"
    )
    scheme: str = Field(default="plateau_exact", description="Path scheme for sde-sim")


# ─── Run configuration ───────────────────────────────────


class RunConfig(_Section):
    xi: XiConfig = Field(default_factory=XiConfig)
    measure: MeasureConfig = Field(default_factory=MeasureConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    mc: McConfig = Field(default_factory=McConfig)
    task: TaskConfig = Field(default_factory=TaskConfig)
    output: str | None = None

    @classmethod
    def load(cls, text: str) -> "RunConfig":
        """Validate a JSON document, turning validation errors into ConfigError."""
        try:
            return cls.model_validate_json(text)
        except ValidationError as exc:
            raise config_error(exc) from exc

    def seed(self) -> int:
        return self.mc.seed if self.mc.seed is not None else get_settings().mc_seed


def config_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    path = ".".join(str(p) for p in first["loc"])
    return ConfigError(f"invalid configuration at '{path}': {first['msg']}", field_path=path)

"""Run configuration and canonical models."""

from typing import Literal
import pydantic

from refracted import levy


class NumericsConfig(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    # Fixed Talbot node counts; the error estimate compares the two.
    talbot_nodes: int = 32
    talbot_check_nodes: int = 24
    inversion_tol: float = 1e-6

    # Mittag-Leffler series is used for |z| <= switch radius.
    ml_switch_radius: float = 1.0
    ml_series_tol: float = 1e-16

    mesh: int = 4096

    quad_epsabs: float = 1e-9
    quad_epsrel: float = 1e-10
    quad_limit: int = 200
    quad_fail_tol: float = 1e-6

    tail_tol: float = 1e-12


NUMERICS = NumericsConfig()


class SimConfig(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    scheme: Literal["exact", "strong"] = "exact"
    # None picks a horizon from q.
    horizon: float | None = None
    n_paths: int = pydantic.Field(100_000, gt=0)
    seed: int = pydantic.Field(0, ge=0)

    # Strong approximation only
    epsilon: float = pydantic.Field(1e-3, gt=0)
    h: float = pydantic.Field(1e-3, gt=0)
    gaussian_small_jumps: bool = True

    block_size: int = pydantic.Field(10_000, gt=0)
    workers: int = pydantic.Field(1, gt=0)
    max_horizon_doublings: int = 6


class ModelConfig(pydantic.BaseModel):
    """Model and refraction as read from a JSON config."""

    model_config = pydantic.ConfigDict(extra="forbid")

    gamma: float | None = None
    c: float | None = None
    sigma: float = pydantic.Field(0.0, ge=0)
    jumps: levy.JumpSpec = levy.NoJumps()
    delta: float
    b: float = pydantic.Field(0.0, ge=0)

    @pydantic.model_validator(mode="after")
    def _OneDrift(self):
        if (self.gamma is None) == (self.c is None):
            raise ValueError("give exactly one of 'gamma' or 'c'")
        return self

    def Model(self) -> levy.LevyModel:
        if self.c is not None:
            return levy.LevyModel(c=self.c, sigma=self.sigma, jumps=self.jumps)
        return levy.LevyModel.FromTriplet(self.gamma, self.sigma, self.jumps)

    def Refraction(self) -> levy.RefractionConfig:
        return levy.RefractionConfig(delta=self.delta, b=self.b)


class RunConfig(ModelConfig):
    """ModelConfig plus the command parameters."""

    code: str | None = None

    x: float | None = None
    a: float | None = None
    q: float | None = None

    x_max: float | None = None
    mesh: int | None = None
    second_derivative: bool = False

    # Resolvent variant and evaluation grid
    kind: Literal["two_sided", "killed_below", "killed_above", "free"] | None = None
    grid: list[float] | None = None

    # Overshoot / undershoot intervals
    A: tuple[float, float] | None = None
    B: tuple[float, float] | None = None

    functional: str | None = None
    sim: SimConfig = SimConfig()

    # validate
    models: list[str] | None = None

    # stable-ruin
    alpha: float | None = None

    def Require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            fields = ", ".join(missing)
            raise ValueError(f"config is missing required field(s): {fields}")


def _HyperExp(lam: float, weights: list[float], rates: list[float]):
    return levy.HyperExponentialJumps(intensity=lam, weights=weights, rates=rates)


CONFIG_LIST = [
    # Compound Poisson, bounded variation: c=2, lambda=1, exponential(1) claims.
    ModelConfig(c=2.0, jumps=_HyperExp(1.0, [1.0], [1.0]), delta=0.5, b=1.0),
    # Same claims plus a Gaussian part.
    ModelConfig(c=2.0, sigma=1.0, jumps=_HyperExp(1.0, [1.0], [1.0]), delta=0.5, b=1.0),
    # Spectrally negative 1.5-stable with drift.
    ModelConfig(c=1.0, jumps=levy.StableJumps(alpha=1.5), delta=0.3, b=1.0),
]
CODES = ["M1", "M2", "M3"]
CONFIGS = dict(zip(CODES, CONFIG_LIST))


def Get(code: str) -> ModelConfig | None:
    return CONFIGS.get(code)

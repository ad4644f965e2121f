"""Pydantic models for the drift and cost-structure simulations."""
from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class PopulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    population_size: int = Field(default=20_000, ge=1)
    n_visible: int = Field(default=22, ge=1, description="Covariates the risk score sees")
    n_latent: int = Field(default=1, ge=0, description="Covariates affecting risk but hidden from the score")
    timepoints_per_epoch: int = Field(default=10, ge=1)
    epochs: int = Field(default=5, ge=1)
    treat_fraction: float = Field(default=0.1, gt=0, lt=1, description="Share of highest predicted risk treated")
    intervention_effect: float = Field(
        default=1.0, ge=0, le=1, description="Multiplicative reduction of modifiable risk-increasing covariates"
    )
    modifiable_share: float = Field(
        default=0.5, ge=0, le=1, description="Share of visible covariates an intervention can lower; latent ones always can"
    )
    drift_scale: float = Field(default=0.5, ge=0, description="Amplitude of coefficient drift")
    intercept: float = Field(default=-2.0, description="Baseline log-odds of the event")
    holdout_sizes: List[int] = Field(default_factory=lambda: [2000], description="One holdout strategy per size")
    seed: int = 0

    @model_validator(mode="after")
    def _holdout_within_population(self) -> "PopulationConfig":
        for size in self.holdout_sizes:
            if not 1 <= size <= self.population_size - 1:
                raise ValueError(f"holdout size {size} outside 1..{self.population_size - 1}")
        return self

    @property
    def timepoints(self) -> int:
        return self.timepoints_per_epoch * self.epochs

    @property
    def modifiable(self) -> List[bool]:
        """Per-coefficient flags: the leading visible covariates, then every latent one."""
        count = int(round(self.modifiable_share * self.n_visible))
        return [i < count for i in range(self.n_visible)] + [True] * self.n_latent


class StrategyKind(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: Literal["NoUpdate", "NaiveUpdate", "HoldoutUpdate"]
    holdout_size: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _holdout_needs_size(self) -> "StrategyKind":
        if (self.tag == "HoldoutUpdate") != (self.holdout_size is not None):
            raise ValueError("holdout_size is required for HoldoutUpdate and only for it")
        return self

    @property
    def label(self) -> str:
        return f"HoldoutUpdate({self.holdout_size})" if self.holdout_size else self.tag


class DominanceBoundInputs(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma1: float = Field(gt=0, description="Drift magnitude")
    kappa1: float = Field(gt=0, le=1, description="Drift mass")
    gamma2: float = Field(gt=0, description="Intervention magnitude")
    kappa2: float = Field(gt=0, le=1, description="Intervention mass")
    alpha_lip: float = Field(ge=0, description="Lipschitz constant of the risk function in time")
    alpha2: float = Field(ge=0, description="Lipschitz constant of the covariate law in total variation")


class CostStructureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    population_size: int = Field(default=5000, ge=10)
    n_covariates: int = Field(default=7, ge=1)
    interactions: bool = Field(default=False, description="Non-linear ground truth with pairwise interactions")
    matched_learner: bool = Field(default=False, description="Give the learner the interaction terms too")
    treat_fraction: float = Field(default=0.1, gt=0, lt=1)
    intercept: float = Field(default=-1.0)
    expected_cost: bool = Field(
        default=False,
        description="Score the whole population by expected cost under the true risks instead of realized outcomes on the rest",
    )

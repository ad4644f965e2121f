"""Pydantic models for the pre-eclampsia screening scenario."""
from __future__ import annotations

from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

PI_PRE = 1426 / 57974


class AspreParams(BaseModel):
    """Population and treatment parameters with standard errors.

    Defaults are the internally consistent supplement derivation; see
    :meth:`main_text` for the alternative preset.
    """

    model_config = ConfigDict(frozen=True)

    N: float = Field(default=400_000, gt=0, description="Pregnancies per epoch")
    N_se: float = Field(default=1500, ge=0)
    pi: float = Field(default=0.1, gt=0, lt=1, description="Share of the population treated")
    pi0: float = Field(default=0.024, gt=0, lt=1, description="Untreated PRE rate outside the treated group")
    pi0_se: float = Field(default=0.0017, ge=0)
    pi1: float = Field(default=0.054, gt=0, lt=1, description="Untreated PRE rate inside the treated group")
    pi1_se: float = Field(default=0.0076, ge=0)
    alpha_aspirin: float = Field(default=0.37, gt=0, le=1, description="Residual risk multiplier under aspirin")
    alpha_se: float = Field(default=0.09, ge=0)
    pi_pre: float = Field(default=PI_PRE, gt=0, lt=1, description="Untreated PRE prevalence")

    @model_validator(mode="after")
    def _ordered_rates(self) -> "AspreParams":
        if not self.pi0 < self.pi1:
            raise ValueError("pi0 must be below pi1")
        return self

    @classmethod
    def main_text(cls) -> "AspreParams":
        return cls(pi0=0.02, pi0_se=0.0009, pi1=0.08, pi1_se=0.008)

    @staticmethod
    def n_from_incidence(population: float, births_per_year: float, years: float = 5.0) -> tuple[float, float]:
        """N and its binomial SE when each epoch spans ``years`` of births.

        For 5e6 people and 8e4 births a year this gives N = 4e5 with SE near 1400;
        the default ``N_se`` rounds this to 1500.
        """
        incidence = births_per_year / population
        n_value = years * births_per_year
        n_se = years * float(np.sqrt(population * incidence * (1 - incidence)))
        return n_value, n_se

    def consistency_gap(self) -> float:
        """z-score of pi0 (1 - pi) + pi1 pi - pi_pre under independent errors."""
        implied = self.pi0 * (1 - self.pi) + self.pi1 * self.pi
        se = np.hypot(self.pi0_se * (1 - self.pi), self.pi1_se * self.pi)
        if se == 0:
            return 0.0 if np.isclose(implied, self.pi_pre) else float(np.sign(implied - self.pi_pre) * np.inf)
        return float((implied - self.pi_pre) / se)

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump()


class SyntheticCohort:
    """Covariates, calibrated true risk and realised outcomes of a simulated cohort."""

    def __init__(
        self,
        covariates: np.ndarray,
        risk: np.ndarray,
        outcome: np.ndarray,
        seed: int,
        feature_names: tuple[str, ...],
    ) -> None:
        self.covariates = covariates
        self.risk = risk
        self.outcome = outcome
        self.seed = seed
        self.feature_names = feature_names

    def __len__(self) -> int:
        return self.risk.shape[0]

    @property
    def prevalence(self) -> float:
        return float(self.risk.mean())

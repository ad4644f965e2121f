"""Pydantic models for the Gaussian-process emulator."""
from __future__ import annotations

from typing import Any, Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ohsize.types.cost import PowerLawTheta


class GPConfig(BaseModel):
    """Prior mean parameters, squared-exponential kernel and stopping settings."""

    model_config = ConfigDict(frozen=True)

    prior_theta: PowerLawTheta
    prior_k1: float = Field(gt=0, description="k1 used by the prior mean")
    prior_N: int = Field(ge=2, description="N used by the prior mean")
    sigma_u2: float = Field(gt=0, description="Kernel variance in squared cost units")
    zeta: float = Field(gt=0, description="Kernel length scale in holdout-size units")
    tau: float = Field(default=0.0, ge=0, description="Stop once max EI <= tau")
    alpha: float = Field(default=0.1, gt=0, lt=1, description="Error-set tail probability")

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "a": self.prior_theta.a,
            "b": self.prior_theta.b,
            "c": self.prior_theta.c,
            "k1": self.prior_k1,
            "N": self.prior_N,
            "sigma_u2": self.sigma_u2,
            "zeta": self.zeta,
            "tau": self.tau,
            "alpha": self.alpha,
        }

    @classmethod
    def from_json_dict(cls, payload: Dict[str, Any]) -> "GPConfig":
        return cls(
            prior_theta=PowerLawTheta(a=payload["a"], b=payload["b"], c=payload["c"]),
            prior_k1=payload["k1"],
            prior_N=int(payload["N"]),
            sigma_u2=payload["sigma_u2"],
            zeta=payload["zeta"],
            tau=payload.get("tau", 0.0),
            alpha=payload.get("alpha", 0.1),
        )


class CoalescedObservations(BaseModel):
    """One row per distinct size: inverse-variance weighted mean and combined variance."""

    model_config = ConfigDict(frozen=True)

    unique_sizes: List[int] = Field(default_factory=list)
    means: List[float] = Field(default_factory=list)
    variances: List[float] = Field(default_factory=list)
    counts: List[int] = Field(default_factory=list, description="Number of raw observations per size")

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.unique_sizes, dtype=float)

    @property
    def d(self) -> np.ndarray:
        return np.asarray(self.means, dtype=float)

    @property
    def var(self) -> np.ndarray:
        return np.asarray(self.variances, dtype=float)

    def __len__(self) -> int:
        return len(self.unique_sizes)


class ErrorSet(BaseModel):
    """Sizes whose true cost is plausibly below the estimated minimum.

    This is not a credible set for the OHS: membership only states that
    P(l(n) < mu(n*)) >= 1 - alpha under the emulator posterior.
    """

    members: List[int] = Field(default_factory=list)
    alpha: float = Field(gt=0, lt=1)
    n_star: int

    @property
    def lower(self) -> int:
        return min(self.members) if self.members else self.n_star

    @property
    def upper(self) -> int:
        return max(self.members) if self.members else self.n_star

    def to_json_dict(self) -> Dict[str, Any]:
        return {"lower": self.lower, "upper": self.upper, "alpha": self.alpha, "size": len(self.members)}


EmulatorMode = Literal["greedy", "random"]
CoalesceStatistic = Literal["mean", "median"]

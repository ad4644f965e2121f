"""Pydantic models for cost observations, fits and intervals."""
from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ohsize.types.cost import PowerLawTheta

PARAMETER_NAMES = ("a", "b", "c", "k1", "N")


class ObservationSet(BaseModel):
    """Multiset of holdout sizes with cost estimates and known sampling variances.

    ``values`` are k2 estimates for the parametric estimator and total-cost
    estimates for the emulator.
    """

    model_config = ConfigDict(frozen=True)

    sizes: List[int] = Field(default_factory=list, description="Holdout sizes, repeats allowed")
    values: List[float] = Field(default_factory=list, description="Cost estimates at each size")
    variances: List[float] = Field(default_factory=list, description="Known sampling variances")
    N: Optional[int] = Field(default=None, ge=2, description="Population size bounding the sizes")

    @model_validator(mode="after")
    def _check_consistency(self) -> "ObservationSet":
        if not (len(self.sizes) == len(self.values) == len(self.variances)):
            raise ValueError("sizes, values and variances must have equal lengths")
        if any(not np.isfinite(v) for v in self.values):
            raise ValueError("values must be finite")
        if any(not (np.isfinite(v) and v > 0) for v in self.variances):
            raise ValueError("variances must be strictly positive and finite")
        if any(n < 1 for n in self.sizes):
            raise ValueError("sizes must be at least 1")
        if self.N is not None and any(n > self.N for n in self.sizes):
            raise ValueError(f"sizes must not exceed N={self.N}")
        return self

    def __len__(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def var(self) -> np.ndarray:
        return np.asarray(self.variances, dtype=float)

    @property
    def distinct_sizes(self) -> int:
        return len(set(self.sizes))

    def append(self, size: int, value: float, variance: float) -> "ObservationSet":
        """Return a new set with one more observation."""
        return ObservationSet(
            sizes=[*self.sizes, int(size)],
            values=[*self.values, float(value)],
            variances=[*self.variances, float(variance)],
            N=self.N,
        )

    def with_values(self, values: np.ndarray) -> "ObservationSet":
        return ObservationSet(sizes=self.sizes, values=[float(v) for v in values], variances=self.variances, N=self.N)

    def with_variances(self, variances: np.ndarray) -> "ObservationSet":
        return ObservationSet(sizes=self.sizes, values=self.values, variances=[float(v) for v in variances], N=self.N)


class ResidualReport(BaseModel):
    weighted_rss: float = Field(description="Sum of squared standardised residuals")
    dof: int = Field(description="Observations minus fitted parameters")
    max_abs_standardised: float = Field(description="Largest absolute standardised residual")
    boundary_warning: Optional[str] = Field(default=None, description="Set when a parameter sits on its bound")


class ThetaFit(BaseModel):
    """Power-law fit with covariance, plus k1 and N with their standard errors."""

    theta: PowerLawTheta
    theta_cov: List[List[float]] = Field(description="3x3 covariance of (a, b, c)")
    k1: float = Field(gt=0)
    k1_se: float = Field(default=0.0, ge=0)
    N: float = Field(ge=2)
    N_se: float = Field(default=0.0, ge=0)
    converged: bool = True
    objective: float = Field(ge=0, description="Weighted residual sum of squares at the optimum")
    residual_report: ResidualReport

    @model_validator(mode="after")
    def _check_covariance(self) -> "ThetaFit":
        cov = np.asarray(self.theta_cov, dtype=float)
        if cov.shape != (3, 3):
            raise ValueError("theta_cov must be 3x3")
        if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
            raise ValueError("theta_cov must be symmetric")
        return self

    def covariance5(self) -> np.ndarray:
        """Block-diagonal covariance over (a, b, c, k1, N)."""
        cov = np.zeros((5, 5))
        cov[:3, :3] = np.asarray(self.theta_cov, dtype=float)
        cov[3, 3] = self.k1_se**2
        cov[4, 4] = self.N_se**2
        return cov

    def scaled(self, factor: float) -> "ThetaFit":
        """Same fit with every variance multiplied by ``factor``."""
        cov = (np.asarray(self.theta_cov) * factor).tolist()
        return self.model_copy(
            update={"theta_cov": cov, "k1_se": self.k1_se * np.sqrt(factor), "N_se": self.N_se * np.sqrt(factor)}
        )

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "a": self.theta.a,
            "b": self.theta.b,
            "c": self.theta.c,
            "k1": self.k1,
            "N": self.N,
            "cov": self.covariance5().tolist(),
            "converged": self.converged,
            "objective": self.objective,
        }

    @classmethod
    def from_json_dict(cls, payload: Dict[str, Any]) -> "ThetaFit":
        cov = np.asarray(payload["cov"], dtype=float).reshape(5, 5)
        return cls(
            theta=PowerLawTheta(a=payload["a"], b=payload["b"], c=payload["c"]),
            theta_cov=cov[:3, :3].tolist(),
            k1=payload["k1"],
            k1_se=float(np.sqrt(cov[3, 3])),
            N=payload["N"],
            N_se=float(np.sqrt(cov[4, 4])),
            converged=payload.get("converged", True),
            objective=payload.get("objective", 0.0),
            residual_report=ResidualReport(weighted_rss=payload.get("objective", 0.0), dof=0, max_abs_standardised=0.0),
        )


class ConfidenceInterval(BaseModel):
    lower: float
    upper: float
    level: float = Field(gt=0, lt=1, description="Coverage probability")
    kind: Literal["asymptotic", "bootstrap"]
    target: Literal["n_star", "cost"] = "n_star"
    degenerate_fraction: Optional[float] = Field(
        default=None, description="Share of bootstrap replicates without an interior OHS"
    )

    @model_validator(mode="after")
    def _ordered(self) -> "ConfidenceInterval":
        if self.lower > self.upper:
            raise ValueError("lower must not exceed upper")
        return self

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"lower": self.lower, "upper": self.upper, "level": self.level, "kind": self.kind}
        if self.degenerate_fraction is not None:
            payload["degenerate_fraction"] = self.degenerate_fraction
        return payload


class GradientVector(BaseModel):
    """Partial derivatives with respect to (a, b, c, k1, N)."""

    a: float
    b: float
    c: float
    k1: float
    N: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAMETER_NAMES], dtype=float)

"""Pydantic models for the holdout cost model."""
from __future__ import annotations

from typing import Any, Callable, Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

CurveKind = Literal["power-law", "double-descent", "tabulated"]
TheoremKind = Literal["unique_minimum", "weak_minimum", "crossing_minimum", "none"]


class PowerLawTheta(BaseModel):
    """Parameters of k2(n) = a * n**(-b) + c."""

    model_config = ConfigDict(frozen=True)

    a: float = Field(gt=0, description="Cost scale")
    b: float = Field(gt=0, description="Decay exponent")
    c: float = Field(ge=0, description="Asymptotic cost rate as n grows")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)


class GaussianBump(BaseModel):
    """Additive bump h/sqrt(2 pi) * exp(-z**2 / 2), z = (n - center) / width.

    With ``density`` set the term is additionally divided by ``width``, i.e. it
    is ``h`` times a normal density.
    """

    model_config = ConfigDict(frozen=True)

    height_scale: float = Field(ge=0, description="Height scale h")
    center: float = Field(description="Location of the bump in holdout-size units")
    width: float = Field(description="Standard deviation of the bump in holdout-size units")
    density: bool = Field(default=False, description="Divide the term by width")


PRINTED_BUMP = GaussianBump(height_scale=1e4, center=4e4, width=8e3)
DENSITY_BUMP = GaussianBump(height_scale=1e4, center=4e4, width=8e3, density=True)


class CostParameters(BaseModel):
    """Population size, baseline cost rate and power-law k2 parameters."""

    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=2, description="Total number of samples per epoch")
    k1: float = Field(gt=0, description="Expected per-sample cost without a risk score")
    theta: PowerLawTheta

    def to_json_dict(self) -> Dict[str, float]:
        return {"N": self.N, "k1": self.k1, "a": self.theta.a, "b": self.theta.b, "c": self.theta.c}

    @classmethod
    def from_json_dict(cls, payload: Dict[str, Any]) -> "CostParameters":
        theta = PowerLawTheta(a=payload["a"], b=payload["b"], c=payload["c"])
        return cls(N=int(payload["N"]), k1=payload["k1"], theta=theta)


class CostCurve(BaseModel):
    """A k2 curve as a vectorised evaluator with an optional derivative."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    evaluator: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kind: CurveKind
    finite_at_zero: bool = Field(default=False, description="Whether k2(0) is defined")

    def __call__(self, n: Any) -> np.ndarray:
        return self.evaluator(np.asarray(n, dtype=float))


class AssumptionReport(BaseModel):
    """Empirical verdict on the cost-model assumptions for an observed k2 curve."""

    a1: Literal["assumed"] = Field(default="assumed", description="k1 independent of n; not checkable from k2 data")
    a2_holds: bool = Field(description="k2 strictly decreasing over the observed sizes")
    a2_first_violation: Optional[int] = Field(default=None, description="Index of the first non-decreasing step")
    a2_violations: int = Field(default=0, description="Number of non-decreasing steps")
    a3_holds: bool = Field(description="A single crossing point M with k2(n) <= k1 exactly when n >= M")
    M: Optional[float] = Field(default=None, description="Smallest observed size with k2 <= k1")
    a4_holds: bool = Field(description="Successive slopes of k2 are nondecreasing (discrete convexity)")
    a4_first_violation: Optional[int] = Field(default=None, description="Index of the first concave triple")
    a4_violations: int = Field(default=0, description="Number of concave triples")
    intervals: int = Field(default=0, description="Number of successive-size intervals checked")
    a5_holds: bool = Field(description="Some observed M satisfies (N-M)/N (k1 - k2(M)) > k1 - k2(0)")
    a5_M: Optional[float] = Field(default=None, description="Size maximising the A5 margin")
    k2_zero: float = Field(description="Value of k2(0) used for A5 and the theorem selection")
    theorem_applicable: TheoremKind = Field(description="Which existence result the curve satisfies")

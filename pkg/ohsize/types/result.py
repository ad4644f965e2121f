"""Pydantic model for OHS estimates."""
from __future__ import annotations

from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, Field

from ohsize.types.emulation import ErrorSet
from ohsize.types.observations import ConfidenceInterval

OHSMethod = Literal["grid", "root", "parametric", "emulation"]


class OHSResult(BaseModel):
    n_star: int = Field(ge=1, description="Optimal holdout set size")
    min_cost: float = Field(description="Total cost at n_star under the reporting model")
    method: OHSMethod
    uncertainty: Optional[Union[ConfidenceInterval, ErrorSet]] = None
    cost_uncertainty: Optional[ConfidenceInterval] = None
    n_continuous: Optional[float] = Field(default=None, description="Continuous stationary point, when known")

    def to_json_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"n_star": self.n_star, "min_cost": self.min_cost, "method": self.method}
        if self.n_continuous is not None:
            payload["n_continuous"] = self.n_continuous
        if self.uncertainty is not None:
            payload["uncertainty"] = self.uncertainty.to_json_dict()
        if self.cost_uncertainty is not None:
            payload["cost_uncertainty"] = self.cost_uncertainty.to_json_dict()
        return payload

"""Logistic risk learner, treatment rule and the fixed misclassification cost map."""
from __future__ import annotations

import logging
import warnings
from typing import Optional, Union

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import confusion_matrix
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import PolynomialFeatures

from ohsize.errors import DomainError

logger = logging.getLogger(__name__)

RIDGE_PENALTY = 1e-6
FALLBACK_PENALTY = 1.0
MAX_COEF_NORM = 1e3

# Per-sample costs indexed [outcome, treated].
COST_MAP = np.array([[0.0, 0.5], [1.0, 0.5]])


class ConstantScorer:
    """Score used when the training outcomes contain a single class."""

    def __init__(self, rate: float) -> None:
        self.rate = float(rate)

    def predict_risk(self, covariates: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(covariates).shape[0], self.rate)


class FittedScorer:
    def __init__(self, model: Union[LogisticRegression, Pipeline]) -> None:
        self.model = model

    def predict_risk(self, covariates: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(np.asarray(covariates, dtype=float))[:, 1]


RiskScorer = Union[ConstantScorer, FittedScorer]


class LogisticLearner:
    """Nearly unpenalised logistic regression fitted by Newton iterations.

    A fit that fails to converge or whose coefficients blow up (separation) is
    repeated with a unit ridge penalty. ``interactions`` adds all pairwise
    products of the covariates.
    """

    def __init__(self, penalty: float = RIDGE_PENALTY, interactions: bool = False, max_iter: int = 200) -> None:
        if penalty <= 0:
            raise DomainError(f"penalty must be positive, got {penalty}")
        self.penalty = penalty
        self.interactions = interactions
        self.max_iter = max_iter

    def _model(self, penalty: float) -> Union[LogisticRegression, Pipeline]:
        logistic = LogisticRegression(C=1.0 / penalty, solver="newton-cholesky", max_iter=self.max_iter)
        if not self.interactions:
            return logistic
        return make_pipeline(PolynomialFeatures(degree=2, interaction_only=True, include_bias=False), logistic)

    @staticmethod
    def _coef_norm(model: Union[LogisticRegression, Pipeline]) -> float:
        logistic = model[-1] if isinstance(model, Pipeline) else model
        return float(np.linalg.norm(logistic.coef_))

    def fit(self, covariates: np.ndarray, outcome: np.ndarray) -> RiskScorer:
        covariates = np.asarray(covariates, dtype=float)
        outcome = np.asarray(outcome, dtype=int)
        if np.unique(outcome).size < 2:
            return ConstantScorer(outcome.mean() if outcome.size else 0.0)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            model = self._model(self.penalty).fit(covariates, outcome)
        unstable = any(issubclass(w.category, ConvergenceWarning) for w in caught)
        if unstable or not np.isfinite(self._coef_norm(model)) or self._coef_norm(model) > MAX_COEF_NORM:
            logger.warning(
                "logistic fit on %d samples unstable (norm %.3g); refitting with ridge penalty %g",
                outcome.size,
                self._coef_norm(model),
                FALLBACK_PENALTY,
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                model = self._model(FALLBACK_PENALTY).fit(covariates, outcome)
        return FittedScorer(model)


def treat_top(scores: np.ndarray, fraction: float, eligible: Optional[np.ndarray] = None) -> np.ndarray:
    """Boolean mask of the round(fraction * m) highest scores among ``m`` eligible samples."""
    scores = np.asarray(scores, dtype=float)
    if not 0 < fraction < 1:
        raise DomainError(f"treat fraction must lie in (0, 1), got {fraction}")
    pool = np.flatnonzero(eligible) if eligible is not None else np.arange(scores.size)
    count = int(round(fraction * pool.size))
    treated = np.zeros(scores.size, dtype=bool)
    if count:
        order = np.argsort(-scores[pool], kind="stable")
        treated[pool[order[:count]]] = True
    return treated


def per_sample_cost(treated: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    """0 for true negatives, 0.5 for any treated sample and 1 for false negatives."""
    return COST_MAP[np.asarray(outcome, dtype=int), np.asarray(treated, dtype=int)]


def expected_sample_cost(treated: np.ndarray, risk: np.ndarray) -> np.ndarray:
    """Per-sample cost averaged over the outcome given its true probability."""
    treated = np.asarray(treated, dtype=int)
    risk = np.asarray(risk, dtype=float)
    return COST_MAP[0, treated] * (1 - risk) + COST_MAP[1, treated] * risk


def confusion_cost(treated: np.ndarray, outcome: np.ndarray) -> float:
    """Total cost summed over confusion-matrix cells."""
    cells = confusion_matrix(np.asarray(outcome, dtype=int), np.asarray(treated, dtype=int), labels=[0, 1])
    return float((cells * COST_MAP).sum())


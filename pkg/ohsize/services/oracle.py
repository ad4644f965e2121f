"""Cost oracles: callables mapping a holdout size to (estimate, variance).

Every oracle tracks its call quota. Deterministic oracles may also cache
results so repeated sizes do not trigger another expensive evaluation.
"""
from __future__ import annotations

import logging
import shlex
import subprocess
import threading
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from cachetools import LRUCache

from ohsize.config import oracle_max_calls, oracle_timeout
from ohsize.errors import OracleError, OracleQuotaExceeded
from ohsize.types.cost import CostCurve
from ohsize.utils.random import SeedLike, derive_int_seed

logger = logging.getLogger(__name__)

CACHE_SIZE = 4096

Estimate = Tuple[float, float]


class CostOracle:
    """Base oracle with a call quota and an optional result cache."""

    def __init__(self, max_calls: Optional[int] = None, cache_results: bool = False) -> None:
        self._max_calls = max_calls or oracle_max_calls()
        self._cache: Optional[LRUCache[int, Estimate]] = LRUCache(maxsize=CACHE_SIZE) if cache_results else None
        self._request_count = 0
        self._lock = threading.Lock()

    def __call__(self, n: int, fresh: bool = False) -> Estimate:
        n = int(n)
        if self._cache is not None and not fresh and n in self._cache:
            return self._cache[n]
        with self._lock:
            if self._request_count >= self._max_calls:
                raise OracleQuotaExceeded(f"oracle call quota of {self._max_calls} exhausted")
            self._request_count += 1
            call_index = self._request_count
        value, variance = self._evaluate(n, call_index)
        if not (np.isfinite(value) and np.isfinite(variance) and variance > 0):
            raise OracleError(f"oracle returned invalid estimate ({value}, {variance}) for n={n}")
        if self._cache is not None:
            self._cache[n] = (value, variance)
        return value, variance

    def _evaluate(self, n: int, call_index: int) -> Estimate:
        raise NotImplementedError

    @property
    def calls(self) -> int:
        return self._request_count

    @property
    def remaining_quota(self) -> int:
        return max(self._max_calls - self._request_count, 0)


class SyntheticOracle(CostOracle):
    """Noisy evaluations of a known curve.

    ``target="k2"`` returns k2(n); ``target="cost"`` returns the total cost
    k1 n + k2(n)(N - n). Each call draws a variance uniformly from
    ``variance_range`` (for k2) and adds Gaussian noise with that variance,
    scaled by (N - n)^2 for total costs. Noise for the i-th call depends only
    on the seed and i.
    """

    def __init__(
        self,
        curve: CostCurve,
        variance_range: Tuple[float, float] = (1e-6, 4e-4),
        seed: SeedLike = None,
        target: str = "k2",
        k1: Optional[float] = None,
        N: Optional[float] = None,
        noiseless: bool = False,
        max_calls: Optional[int] = None,
    ) -> None:
        super().__init__(max_calls=max_calls, cache_results=noiseless)
        if target == "cost" and (k1 is None or N is None):
            raise OracleError("total-cost oracle needs k1 and N")
        self._curve = curve
        self._range = variance_range
        self._seed = seed
        self._target = target
        self._k1 = k1
        self._N = N
        self._noiseless = noiseless

    def _evaluate(self, n: int, call_index: int) -> Estimate:
        rng = np.random.default_rng(derive_int_seed(self._seed, call_index))
        variance = float(rng.uniform(*self._range))
        k2 = float(self._curve(np.array([float(n)]))[0])
        noise = 0.0 if self._noiseless else float(rng.normal(0.0, np.sqrt(variance)))
        if self._target == "k2":
            return k2 + noise, variance
        scale = self._N - n
        return self._k1 * n + (k2 + noise) * scale, variance * scale**2


class SubprocessOracle(CostOracle):
    """Runs an external command with argument n and parses ``value,variance`` from stdout."""

    def __init__(
        self,
        command: Union[str, Sequence[str]],
        timeout: Optional[float] = None,
        max_calls: Optional[int] = None,
        cache_results: bool = False,
    ) -> None:
        super().__init__(max_calls=max_calls, cache_results=cache_results)
        self._command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self._command:
            raise OracleError("oracle command is empty")
        self._timeout = timeout or oracle_timeout()

    def _evaluate(self, n: int, call_index: int) -> Estimate:
        argv = [*self._command, str(n)]
        try:
            completed = subprocess.run(argv, capture_output=True, text=True, timeout=self._timeout, check=True)
        except subprocess.TimeoutExpired as exc:
            raise OracleError(f"oracle timed out after {self._timeout:g}s for n={n}") from exc
        except (subprocess.CalledProcessError, OSError) as exc:
            raise OracleError(f"oracle failed for n={n}: {exc}") from exc
        logger.debug("oracle call %d for n=%d: %s", call_index, n, completed.stdout.strip())
        return self._parse(completed.stdout, n)

    @staticmethod
    def _parse(stdout: str, n: int) -> Estimate:
        lines = [line for line in stdout.strip().splitlines() if line.strip()]
        if not lines:
            raise OracleError(f"oracle printed nothing for n={n}")
        try:
            value, variance = (float(part) for part in lines[-1].split(","))
        except ValueError as exc:
            raise OracleError(f"oracle output {lines[-1]!r} is not 'value,variance'") from exc
        return value, variance


class ReplayOracle:
    """Serves recorded estimates in order, then defers to ``fallback``.

    Lets an acquisition loop start from observations gathered elsewhere.
    """

    def __init__(self, recorded: Sequence[Estimate], fallback: Optional[Callable[[int], Estimate]] = None) -> None:
        self._recorded = list(recorded)
        self._fallback = fallback

    def __call__(self, n: int) -> Estimate:
        if self._recorded:
            return self._recorded.pop(0)
        if self._fallback is None:
            raise OracleError(f"no oracle configured to evaluate n={n}")
        return self._fallback(n)

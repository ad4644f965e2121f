"""CSV and JSON readers and writers for ohsize inputs and outputs."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ohsize.core.cost_model import tabulated_curve
from ohsize.errors import DomainError, InputFormatError
from ohsize.types.cost import CostCurve
from ohsize.types.observations import ObservationSet

PathLike = Union[str, Path]


def _read_table(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except FileNotFoundError as exc:
        raise InputFormatError(f"{path}: file not found") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    header = [str(col).strip() for col in frame.columns]
    if header != list(columns):
        raise InputFormatError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}", line=1)
    frame.columns = header
    for col in columns:
        numeric = pd.to_numeric(frame[col], errors="coerce")
        bad = numeric.isna() | ~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise InputFormatError(f"{path}: column {col!r} is not a finite number", line=row + 2)
        frame[col] = numeric
    return frame


def _integer_column(frame: pd.DataFrame, col: str, path: PathLike) -> np.ndarray:
    values = frame[col].to_numpy(dtype=float)
    off = np.flatnonzero(values != np.round(values))
    if off.size:
        raise InputFormatError(f"{path}: {col} must be an integer", line=int(off[0]) + 2)
    return values.astype(int)


def read_observations_csv(path: PathLike, N: Optional[int] = None) -> ObservationSet:
    """Read ``n,value,variance`` rows into an ObservationSet."""
    frame = _read_table(path, ("n", "value", "variance"))
    sizes = _integer_column(frame, "n", path)
    variances = frame["variance"].to_numpy(dtype=float)
    for label, mask in (("n must be at least 1", sizes < 1), ("variance must be positive", variances <= 0)):
        rows = np.flatnonzero(mask)
        if rows.size:
            raise InputFormatError(f"{path}: {label}", line=int(rows[0]) + 2)
    if N is not None:
        rows = np.flatnonzero(sizes > N)
        if rows.size:
            raise InputFormatError(f"{path}: n exceeds N={N}", line=int(rows[0]) + 2)
    return ObservationSet(
        sizes=sizes.tolist(),
        values=frame["value"].astype(float).tolist(),
        variances=variances.tolist(),
        N=N,
    )


def read_curve_table(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Sizes and k2 values of an ``n,k2`` table with strictly ascending n."""
    frame = _read_table(path, ("n", "k2"))
    sizes = _integer_column(frame, "n", path)
    rows = np.flatnonzero(np.diff(sizes) <= 0)
    if rows.size:
        raise InputFormatError(f"{path}: n must be strictly ascending", line=int(rows[0]) + 3)
    return sizes, frame["k2"].to_numpy(dtype=float)


def read_curve_csv(path: PathLike) -> CostCurve:
    """Read an ``n,k2`` table into a piecewise-linear CostCurve."""
    sizes, values = read_curve_table(path)
    try:
        return tabulated_curve(sizes, values)
    except DomainError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise InputFormatError(f"{path}: file not found") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(payload, dict):
        raise InputFormatError(f"{path}: expected a JSON object", line=1)
    return payload


def parse_model(payload: Dict[str, Any], loader: Any, path: PathLike) -> Any:
    """Apply ``loader`` to a JSON payload, mapping schema errors to InputFormatError."""
    try:
        return loader(payload)
    except (KeyError, TypeError) as exc:
        raise InputFormatError(f"{path}: missing or malformed field {exc}") from exc
    except ValidationError as exc:
        raise InputFormatError(f"{path}: {exc.errors()[0]['msg']}") from exc


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    target = Path(path)
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    target = Path(path)
    frame.to_csv(target, index=False, lineterminator="\n")
    return target


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()

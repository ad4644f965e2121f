"""Pydantic model for the reproducibility manifest written by every CLI run."""
from __future__ import annotations

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    subcommand: str
    config_path: Optional[str] = Field(default=None, description="Input file the run was configured from")
    seed: int
    output_dir: str
    argv: List[str] = Field(default_factory=list, description="Arguments needed to replay the run")
    artifacts: Dict[str, str] = Field(default_factory=dict, description="File name to sha256 checksum")

"""Run configuration echoed next to every command's outputs."""
import json
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from core.config import Settings
from core.exceptions import PathValidationError
from schemas.quality import QualityThresholds

RUN_CONFIG_FILE = "run_config.json"


class RunConfig(BaseModel):
    """Inputs, thresholds and switches of one CLI invocation."""

    model_config = ConfigDict(frozen=True)

    command: str
    inputs: Dict[str, Path] = Field(default_factory=dict)
    output_dir: Path
    thresholds: QualityThresholds
    smoothing_width: int
    incidence_cos: float
    eq6_as_printed: bool
    exposure_ratio_inverted: bool
    clip_reflectance: bool
    clip_max: float
    seed: int
    config_file: Optional[Path] = None

    @classmethod
    def from_settings(
        cls,
        command: str,
        inputs: Dict[str, Optional[Path]],
        output_dir: Path,
        config: Settings,
        config_file: Optional[Path] = None,
    ) -> "RunConfig":
        return cls(
            command=command,
            inputs={k: Path(v) for k, v in inputs.items() if v is not None},
            output_dir=Path(output_dir),
            thresholds=QualityThresholds.from_settings(config),
            smoothing_width=config.smoothing_width,
            incidence_cos=config.incidence_cos,
            eq6_as_printed=config.eq6_as_printed,
            exposure_ratio_inverted=config.exposure_ratio_inverted,
            clip_reflectance=config.clip_reflectance,
            clip_max=config.clip_max,
            seed=config.seed,
            config_file=config_file,
        )

    def validate_paths(self):
        """Fail before any computation if an input path is missing."""
        for role, path in sorted(self.inputs.items()):
            if not path.exists():
                raise PathValidationError(f"{role} not found: {path}", role=role, path=str(path))

    def echo(self) -> Path:
        """Write the configuration as sorted JSON into the output directory."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / RUN_CONFIG_FILE
        payload = self.model_dump(mode="json")
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path

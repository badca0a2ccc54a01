"""
Configuration settings for Chronosurf.
Loads settings from environment variables and .env file.
"""
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

CONFIG_DIR = Path(__file__).parent


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix='chronosurf_',
        env_file='.env',
        env_file_encoding='utf-8',
        case_sensitive=False,
        extra='ignore'
    )

    # ===========================
    # Temporal model
    # ===========================
    o_th: float = Field(
        default=0.05,
        gt=0.0,
        lt=1.0,
        description="Opacity multiplier at the lifespan boundary"
    )

    # ===========================
    # Rasterizer
    # ===========================
    tile_size: int = Field(default=16, ge=1, description="Screen tile edge in pixels")
    sigma_cutoff: float = Field(default=3.0, gt=0.0, description="Kernel cutoff in sigmas")
    transmittance_floor: float = Field(
        default=1e-4,
        gt=0.0,
        description="Compositing stops once transmittance falls below this"
    )
    alpha_clamp: float = Field(default=0.999, gt=0.0, le=1.0, description="Per-splat alpha ceiling")
    dyn_velocity_threshold: float = Field(
        default=0.05,
        gt=0.0,
        description="Speed above which a Gaussian counts as dynamic (units/s)"
    )
    window_duration: float = Field(
        default=128.0 / 30.0,
        gt=0.0,
        description="Duration of one rolling window in seconds"
    )
    background: Tuple[float, float, float] = Field(
        default=(0.0, 0.0, 0.0),
        description="Background colour composited behind the scene"
    )
    render_workers: int = Field(default=1, ge=1, description="Threads used for tile compositing")

    # ===========================
    # Metrics
    # ===========================
    psnr_cap: float = Field(default=99.0, description="PSNR reported for identical images")

    # ===========================
    # Rolling windows
    # ===========================
    window_size: int = Field(default=128, ge=1, description="Frames per rolling window")
    window_stride: int = Field(default=2, ge=1, description="Input subsampling stride")
    window_hop: Optional[int] = Field(
        default=None,
        ge=1,
        description="Frames between window starts (None means half a window)"
    )

    # ===========================
    # Fitting
    # ===========================
    default_config_path: Path = Field(
        default=CONFIG_DIR / "default_config.yaml",
        description="YAML file with default fit/loss/render sections"
    )

    # ===========================
    # Logging
    # ===========================
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="INFO",
        description="Logging level"
    )
    log_file: Optional[Path] = Field(
        default=None,
        description="Optional log file path"
    )

    @property
    def dyn_lifespan_threshold(self) -> float:
        """Lifespan below which a Gaussian counts as dynamic: half a window."""
        return 0.5 * self.window_duration


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get the global settings instance."""
    return settings


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_yaml_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Load the default YAML configuration, merged with an optional user file.

    Args:
        path: User YAML file whose keys override the defaults

    Returns:
        Merged configuration dictionary
    """
    with open(get_settings().default_config_path, encoding="utf-8") as f:
        config = yaml.safe_load(f) or {}

    if path is not None:
        with open(path, encoding="utf-8") as f:
            user = yaml.safe_load(f) or {}
        config = _deep_merge(config, user)

    return config

"""
Rolling windows over long frame sequences and merging of per-window scenes.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

from pydantic import BaseModel, Field

from config.settings import Settings, get_settings
from model.gaussian import GaussianScene
from tokens.scheduler import window_subsample
from utils.errors import DomainError

logger = logging.getLogger(__name__)


class WindowPlan(BaseModel):
    """Window length, input stride and hop between window starts."""

    model_config = {"frozen": True}

    window_size: int = Field(default=128, ge=1)
    stride: int = Field(default=2, ge=1)
    hop: Optional[int] = Field(default=None, ge=1)

    @property
    def effective_hop(self) -> int:
        """Hop between windows; half a window when unset."""
        return self.hop if self.hop is not None else max(1, self.window_size // 2)

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides) -> "WindowPlan":
        s = settings or get_settings()
        values = dict(window_size=s.window_size, stride=s.window_stride, hop=s.window_hop)
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class Window:
    """Frames [start, stop) and the global indices of its input frames."""
    start: int
    stop: int
    inputs: List[int]

    @property
    def length(self) -> int:
        return self.stop - self.start


def plan_windows(frame_count: int, plan: Optional[WindowPlan] = None) -> List[Window]:
    """
    Overlapping windows covering every frame.

    Windows start every hop frames; the last one is clamped to end at the
    final frame. Sequences shorter than a window get a single short window.

    Raises:
        DomainError: If frame_count < 1
    """
    plan = plan or WindowPlan()
    if frame_count < 1:
        raise DomainError(f"frame_count must be >= 1, got {frame_count}")

    starts: List[int] = []
    start = 0
    while True:
        if start + plan.window_size >= frame_count:
            last = max(0, frame_count - plan.window_size)
            if not starts or starts[-1] != last:
                starts.append(last)
            break
        starts.append(start)
        start += plan.effective_hop

    windows = []
    for s in starts:
        stop = min(frame_count, s + plan.window_size)
        local = window_subsample(stop - s, min(plan.stride, stop - s))
        windows.append(Window(start=s, stop=stop, inputs=[s + i for i in local]))
    logger.debug(f"{frame_count} frames -> {len(windows)} windows")
    return windows


def merge_windows(scenes: Sequence[GaussianScene]) -> GaussianScene:
    """
    Concatenate per-window scenes on the global clock.

    Each scene's temporal centres are shifted by its time_base; the result has
    time_base 0. No Gaussians are merged or removed.
    """
    shifted = [s.replace(t_center=s.t_center + s.time_base, time_base=0.0) for s in scenes]
    merged = GaussianScene.concatenate(shifted, time_base=0.0)
    logger.debug(f"merged {len(scenes)} windows into {merged.count} Gaussians")
    return merged

"""
Spatio-temporal token scheduling.

A window of N input frames is cut into p×p patch tokens. Attention runs on L
levels: level l splits the frames into M/2^l chunks of (N/M)·2^l frames and
keeps only tokens_per_frame/2^l tokens of each frame, so every chunk holds the
same n/M tokens (plus one classification token) while deeper levels see a
longer time span at a coarser spatial sampling. Relative to all-to-all
attention over n tokens the pair count drops to (2^L - 1) / (M · 2^(L-1)).
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List

import numpy as np

from model.camera import CameraIntrinsics
from utils.errors import DomainError

logger = logging.getLogger(__name__)

CLS_TOKENS_PER_CHUNK = 1


# ============================================================================
# TYPES
# ============================================================================

@dataclass(frozen=True)
class LevelLayout:
    """Chunking of one attention level."""
    level: int
    chunk_count: int
    frames_per_chunk: int
    tokens_per_frame: int
    tokens_per_chunk: int
    cls_tokens: int = CLS_TOKENS_PER_CHUNK

    @property
    def sequence_length(self) -> int:
        """Attention sequence length of one chunk, classification token included."""
        return self.tokens_per_chunk + self.cls_tokens

    @property
    def total_tokens(self) -> int:
        return self.chunk_count * self.tokens_per_chunk


@dataclass(frozen=True)
class TokenLayout:
    """Multi-level chunk layout of one frame window."""
    frames: int
    chunks: int
    tokens_per_frame: int
    levels: List[LevelLayout] = field(default_factory=list)

    @property
    def total_tokens(self) -> int:
        """Level-0 token count n."""
        return self.frames * self.tokens_per_frame

    def to_dict(self) -> Dict:
        return {
            "frames": self.frames,
            "chunks": self.chunks,
            "levels": len(self.levels),
            "tokens_per_frame": self.tokens_per_frame,
            "total_tokens": self.total_tokens,
            "per_level": [
                {
                    "level": lv.level,
                    "chunk_count": lv.chunk_count,
                    "frames_per_chunk": lv.frames_per_chunk,
                    "tokens_per_frame": lv.tokens_per_frame,
                    "tokens_per_chunk": lv.tokens_per_chunk,
                    "cls_tokens": lv.cls_tokens,
                }
                for lv in self.levels
            ],
        }


@dataclass(frozen=True)
class CostReport:
    """Token-pair counts of the layout against all-to-all attention."""
    per_level: List[int]
    total: int
    baseline: int
    ratio: Fraction

    def to_dict(self) -> Dict:
        return {
            "per_level": self.per_level,
            "total": self.total,
            "baseline": self.baseline,
            "ratio": float(self.ratio),
            "ratio_exact": str(self.ratio),
        }


# ============================================================================
# OPERATIONS
# ============================================================================

def window_subsample(W: int, stride: int) -> List[int]:
    """Input frame indices 0, stride, 2·stride, ... below W."""
    if not W >= stride >= 1:
        raise DomainError(f"need W >= stride >= 1, got W={W} stride={stride}")
    return list(range(0, W, stride))


def patch_grid(intr: CameraIntrinsics, p: int) -> int:
    """
    Tokens per frame for patch size p.

    Raises:
        DomainError: If the image is not divisible by p, naming the padding needed
    """
    if p < 1:
        raise DomainError(f"patch size must be >= 1, got {p}")
    if intr.width % p or intr.height % p:
        raise DomainError(
            f"image {intr.width}x{intr.height} is not divisible by patch size {p}; "
            f"pad to {math.ceil(intr.width / p) * p}x{math.ceil(intr.height / p) * p}"
        )
    return (intr.height // p) * (intr.width // p)


def build_layout(N: int, M: int, L: int, tokens_per_frame: int) -> TokenLayout:
    """
    Chunk layout of N frames into M chunks over L levels.

    Raises:
        DomainError: If M does not divide N, 2^(L-1) does not divide M or
            tokens_per_frame
    """
    if min(N, M, L, tokens_per_frame) < 1:
        raise DomainError(f"N, M, L and tokens_per_frame must be positive, got {(N, M, L, tokens_per_frame)}")
    if N % M:
        raise DomainError(f"chunk count M={M} must divide frame count N={N}")
    deepest = 2 ** (L - 1)
    if M % deepest:
        raise DomainError(f"2^(L-1)={deepest} must divide chunk count M={M}")
    if tokens_per_frame % deepest:
        raise DomainError(f"2^(L-1)={deepest} must divide tokens_per_frame={tokens_per_frame}")

    per_chunk = N * tokens_per_frame // M
    levels = []
    for level in range(L):
        factor = 2 ** level
        lv = LevelLayout(
            level=level,
            chunk_count=M // factor,
            frames_per_chunk=(N // M) * factor,
            tokens_per_frame=tokens_per_frame // factor,
            tokens_per_chunk=per_chunk,
        )
        assert lv.frames_per_chunk * lv.tokens_per_frame == per_chunk
        levels.append(lv)

    layout = TokenLayout(frames=N, chunks=M, tokens_per_frame=tokens_per_frame, levels=levels)
    logger.debug(f"layout N={N} M={M} L={L}: {per_chunk} tokens per chunk")
    return layout


def attention_cost(layout: TokenLayout) -> CostReport:
    """Pair counts per level (classification tokens excluded) and the ratio to n²."""
    per_level = [lv.chunk_count * lv.tokens_per_chunk ** 2 for lv in layout.levels]
    total = sum(per_level)
    baseline = layout.total_tokens ** 2
    return CostReport(per_level=per_level, total=total, baseline=baseline, ratio=Fraction(total, baseline))


def canonical_ratio(M: int, L: int) -> Fraction:
    """(2^L - 1) / (M · 2^(L-1))."""
    return Fraction(2 ** L - 1, M * 2 ** (L - 1))


def token_indices(level: int, grid_rows: int, grid_cols: int) -> np.ndarray:
    """
    Row-major indices of the patch tokens kept at a level.

    Each level halves the previous one: odd levels drop alternate rows, even
    levels drop alternate columns.

    Raises:
        DomainError: If the grid cannot be halved that many times
    """
    if level < 0:
        raise DomainError(f"level must be >= 0, got {level}")
    rows = np.arange(grid_rows)
    cols = np.arange(grid_cols)
    for step in range(1, level + 1):
        if step % 2:
            if len(rows) % 2:
                raise DomainError(f"cannot halve {len(rows)} token rows at level {step}")
            rows = rows[::2]
        else:
            if len(cols) % 2:
                raise DomainError(f"cannot halve {len(cols)} token columns at level {step}")
            cols = cols[::2]
    return (rows[:, None] * grid_cols + cols[None, :]).reshape(-1)


def densified_tokens(tokens_per_frame: int, N: int, R_s: int, R_t: int) -> int:
    """Level-0 token count after raising spatial and temporal sampling by R_s and R_t."""
    if min(tokens_per_frame, N, R_s, R_t) < 1:
        raise DomainError("tokens_per_frame, N, R_s and R_t must be positive")
    return tokens_per_frame * N * R_s * R_s * R_t


"""
Shape check of chunked attention over a TokenLayout.

Random tokens are routed through every level exactly as the layout
prescribes (strided token subset, chunking, leading classification tokens in
every chunk) and pushed through single-head scaled dot-product attention with
random projections. The check confirms that attention preserves shapes and
that the number of token pairs actually scored equals the cost model.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from einops import rearrange

from tokens.scheduler import TokenLayout, attention_cost, token_indices
from utils.errors import DomainError

logger = logging.getLogger(__name__)

# Queries are processed in blocks so long chunks never materialise a full score matrix.
QUERY_BLOCK = 512


@dataclass
class LevelCheck:
    """Shapes and pair count observed at one level."""
    level: int
    input_shape: Tuple[int, int, int]
    output_shape: Tuple[int, int, int]
    measured_pairs: int
    predicted_pairs: int

    @property
    def ok(self) -> bool:
        return self.input_shape == self.output_shape and self.measured_pairs == self.predicted_pairs


@dataclass
class PassthroughReport:
    """Per-level results of token_passthrough_check."""
    levels: List[LevelCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(lv.ok for lv in self.levels)

    @property
    def measured_total(self) -> int:
        return sum(lv.measured_pairs for lv in self.levels)

    def to_dict(self) -> Dict:
        return {
            "ok": self.ok,
            "measured_total": self.measured_total,
            "levels": [
                {
                    "level": lv.level,
                    "input_shape": list(lv.input_shape),
                    "output_shape": list(lv.output_shape),
                    "measured_pairs": lv.measured_pairs,
                    "predicted_pairs": lv.predicted_pairs,
                }
                for lv in self.levels
            ],
        }


def _level_tokens(level: int, tokens_per_frame: int, grid: Optional[Tuple[int, int]]) -> np.ndarray:
    if grid is None:
        side = math.isqrt(tokens_per_frame)
        grid = (side, side) if side * side == tokens_per_frame else None
    if grid is not None:
        try:
            return token_indices(level, *grid)
        except DomainError:
            logger.debug(f"grid {grid} cannot be halved {level} times, using a strided subset")
    return np.arange(0, tokens_per_frame, 2 ** level)


def _attend(
    x: torch.Tensor, wq: torch.Tensor, wk: torch.Tensor, wv: torch.Tensor, cls_tokens: int
) -> Tuple[torch.Tensor, int]:
    """
    Blocked single-head attention over (chunks, seq, dim).

    All chunks share one flattened sequence; a block-diagonal mask keeps each
    query inside its own chunk. The returned pair count is read off that mask,
    counting only query/key pairs where neither side is one of the leading
    cls_tokens classification tokens of a chunk.
    """
    chunks, seq, _ = x.shape
    flat = rearrange(x, "m s d -> (m s) d")
    chunk_id = torch.arange(chunks).repeat_interleave(seq)
    is_patch = (torch.arange(seq) >= cls_tokens).repeat(chunks)

    q, k, v = flat @ wq, flat @ wk, flat @ wv
    scale = 1.0 / math.sqrt(x.shape[-1])
    blocks = []
    pairs = 0
    for start in range(0, flat.shape[0], QUERY_BLOCK):
        stop = start + QUERY_BLOCK
        allowed = chunk_id[start:stop, None] == chunk_id[None, :]
        scores = (q[start:stop] @ k.T) * scale
        # every query sees at least itself, so no row is fully masked
        scores = scores.masked_fill(~allowed, float("-inf"))
        blocks.append(torch.softmax(scores, dim=-1) @ v)
        pairs += int((allowed & is_patch[start:stop, None] & is_patch[None, :]).sum())
    out = rearrange(torch.cat(blocks, dim=0), "(m s) d -> m s d", m=chunks)
    return out, pairs


def token_passthrough_check(
    layout: TokenLayout,
    token_dim: int,
    seed: int = 0,
    grid: Optional[Tuple[int, int]] = None,
) -> PassthroughReport:
    """
    Route random tokens through every level of a layout.

    Args:
        layout: Layout from build_layout
        token_dim: Token width
        seed: Seed for tokens and projections
        grid: (rows, cols) patch grid of a frame; a square grid is assumed when None

    Returns:
        PassthroughReport with per-level shapes and measured pair counts

    Raises:
        DomainError: If token_dim < 1
    """
    if token_dim < 1:
        raise DomainError(f"token_dim must be >= 1, got {token_dim}")
    gen = torch.Generator().manual_seed(seed)
    predicted = attention_cost(layout).per_level
    tokens = torch.randn(layout.frames, layout.tokens_per_frame, token_dim, generator=gen, dtype=torch.float32)

    report = PassthroughReport()
    for lv, expected in zip(layout.levels, predicted):
        keep = torch.as_tensor(_level_tokens(lv.level, layout.tokens_per_frame, grid))
        if len(keep) != lv.tokens_per_frame:
            raise DomainError(f"level {lv.level} keeps {len(keep)} tokens, layout expects {lv.tokens_per_frame}")

        chunked = rearrange(tokens[:, keep], "(m f) t d -> m (f t) d", m=lv.chunk_count)
        cls = torch.randn(lv.chunk_count, lv.cls_tokens, token_dim, generator=gen)
        x = torch.cat((cls, chunked), dim=1)

        wq, wk, wv = (torch.randn(token_dim, token_dim, generator=gen) / math.sqrt(token_dim) for _ in range(3))
        with torch.no_grad():
            out, pairs = _attend(x, wq, wk, wv, lv.cls_tokens)

        check = LevelCheck(
            level=lv.level,
            input_shape=tuple(x.shape),
            output_shape=tuple(out.shape),
            measured_pairs=pairs,
            predicted_pairs=expected,
        )
        logger.debug(f"level {lv.level}: {check.input_shape} -> {check.output_shape}, {pairs} pairs")
        report.levels.append(check)
    return report

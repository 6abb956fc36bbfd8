"""Turn weights into keep/drop decisions.

Bernoulli mode keeps each example independently with probability q / q_max;
with q_max = 1 (the subsampling regime) the weight itself is the keep
probability. The uniform variate for each example comes from a keyed
counter-style generator: BLAKE2b over the example id, keyed by the seed.
Decisions therefore do not depend on stream order, only on (seed, id).

Top-q mode keeps the examples with the largest weights up to a fixed budget
and requires a finite stream.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import WeightedExample
from .errors import InfiniteStreamTopQ

_TWO64 = float(2**64)


@dataclass
class SampleDecision:
    """Outcome for one example: its weight, the uniform draw, and the verdict."""

    id: str
    q: float
    kept: bool
    draw: float

    def to_dict(self) -> dict:
        return {"id": self.id, "q": self.q, "kept": self.kept, "draw": self.draw}


def uniform_draw(seed: int, example_id: str) -> float:
    """Deterministic uniform variate in [0, 1) keyed by (seed, id)."""
    key = struct.pack("<q", seed)
    h = hashlib.blake2b(example_id.encode("utf-8"), digest_size=8, key=key)
    return int.from_bytes(h.digest(), "little") / _TWO64


def subsample(
    stream: Iterable[WeightedExample],
    mode: str = "bernoulli",
    seed: int = 0,
    rate_hint: float | None = None,
    q_max: float = 1.0,
) -> list[SampleDecision]:
    """Keep/drop decisions for a stream of weighted examples.

    Bernoulli: keep with probability q / q_max, independently per example,
    deterministic given (seed, id). TopQ: keep the ceil(rate_hint * n)
    largest-q examples, ties broken by id order; requires a finite stream
    and a rate_hint.
    """
    mode = mode.lower()
    if mode == "bernoulli":
        decisions = []
        for wex in stream:
            draw = uniform_draw(seed, wex.example.id)
            kept = draw < wex.q / q_max
            wex.kept = kept
            decisions.append(
                SampleDecision(id=wex.example.id, q=wex.q, kept=kept, draw=draw)
            )
        return decisions
    if mode == "topq":
        if not isinstance(stream, Sequence) and not hasattr(stream, "__len__"):
            # a bare iterator may be unbounded; demand a materialized stream
            raise InfiniteStreamTopQ("top-q mode requires a finite, sized stream")
        if rate_hint is None:
            raise ValueError("top-q mode requires a rate_hint")
        items = list(stream)
        n = len(items)
        budget = min(n, math.ceil(rate_hint * n))
        ranked = sorted(range(n), key=lambda i: (-items[i].q, items[i].example.id))
        keep_idx = set(ranked[:budget])
        decisions = []
        for i, wex in enumerate(items):
            kept = i in keep_idx
            wex.kept = kept
            decisions.append(
                SampleDecision(
                    id=wex.example.id,
                    q=wex.q,
                    kept=kept,
                    draw=uniform_draw(seed, wex.example.id),
                )
            )
        return decisions
    raise ValueError(f"unknown subsampling mode: {mode!r}")


def bernoulli_mask(
    ids: Sequence[str], q: np.ndarray, q_max: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vector form of Bernoulli subsampling: (kept mask, draws)."""
    draws = np.fromiter(
        (uniform_draw(seed, i) for i in ids), dtype=np.float64, count=len(ids)
    )
    kept = draws < (np.asarray(q, dtype=np.float64) / q_max)
    return kept, draws

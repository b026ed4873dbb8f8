"""Filtered negative sampling for contrastive training."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

__all__ = ["CorruptionSet", "sample_negatives"]


@dataclass(frozen=True)
class CorruptionSet:
    """One positive with its sampled corruptions.

    Each negative differs from the positive in exactly the head or the tail;
    ``corrupted_sides`` records which, aligned with ``negatives``.
    """

    positive: tuple
    negatives: tuple
    corrupted_sides: tuple


def sample_negatives(graph, batch, n, rng, max_attempts=100):
    """Corrupt each positive ``n`` times, avoiding known-true triples.

    For every slot a side is chosen uniformly, then entities are drawn
    uniformly until the corruption is neither the positive itself nor a
    known triple of the graph. After ``max_attempts`` rejected draws the
    last non-identical candidate is accepted with a warning, so the sampler
    always terminates on adversarially dense graphs.

    Parameters
    ----------
    graph : KnowledgeGraph
        Supplies the entity count and the known-true triple set.
    batch : iterable of (h, r, t) index triples
    n : int
        Negatives per positive.
    rng : numpy Generator
        All draws come from here; a seeded generator makes sampling
        reproducible.

    Returns
    -------
    list of CorruptionSet
    """
    if n < 1:
        raise DataError(f"need n >= 1 negatives per positive, got {n}")
    n_entities = graph.n_entities
    if n_entities < 2:
        raise DataError("cannot corrupt triples with fewer than 2 entities")
    known = graph.triple_keys()
    batch = [(int(h), int(r), int(t)) for h, r, t in batch]
    n_pos = len(batch)
    # one bulk draw for the common case; per-slot repair for collisions
    sides = rng.integers(0, 2, size=(n_pos, n))
    first = rng.integers(0, n_entities, size=(n_pos, n))
    out = []
    for i, (h, r, t) in enumerate(batch):
        negatives = []
        side_names = []
        for j in range(n):
            corrupt_head = sides[i, j] == 0
            original = h if corrupt_head else t
            cand = int(first[i, j])
            accepted = None
            fallback = None
            for _ in range(max_attempts):
                if cand != original:
                    trial = (cand, r, t) if corrupt_head else (h, r, cand)
                    fallback = trial
                    if trial not in known:
                        accepted = trial
                        break
                cand = int(rng.integers(0, n_entities))
            if accepted is None:
                # exhausted the attempt budget on known-true collisions
                while fallback is None:
                    cand = int(rng.integers(0, n_entities))
                    if cand != original:
                        fallback = (cand, r, t) if corrupt_head else (h, r, cand)
                accepted = fallback
                logger.warning(
                    "negative sampling for %s hit the %d-attempt cap; "
                    "accepting a known-true corruption",
                    (h, r, t),
                    max_attempts,
                )
            negatives.append(accepted)
            side_names.append("head" if corrupt_head else "tail")
        out.append(
            CorruptionSet(
                positive=(h, r, t),
                negatives=tuple(negatives),
                corrupted_sides=tuple(side_names),
            )
        )
    return out

"""Filtered ranking protocol, aggregate metrics, and candidate prediction.

Every function here works against a scorer: either a ModelState or any
object exposing ``entity_ids``, ``relation_ids``, and
``score_batch(h, r, t)`` over index arrays. Scores are higher-is-better.

The rank of a true triple counts the corruption entities that strictly
outscore it, skipping corruptions that are themselves known-true triples.
Ties favor the true triple by default; pessimistic and mean tie handling
are available since optimistic ranks flatter constant scorers.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import Triple
from .models import ModelState, score_batch as _model_score_batch

__all__ = [
    "TIE_MODES",
    "TableScorer",
    "filtered_rank",
    "RankMetrics",
    "evaluate",
    "format_metrics",
    "write_metrics_tsv",
    "TypeConstraint",
    "Candidate",
    "CandidateList",
    "predict_candidates",
    "write_candidates_tsv",
    "GroundTruthClusters",
    "load_clusters",
    "HitsPoint",
    "HitsCurve",
    "ground_truth_hits",
    "RankDiffReport",
    "rank_diff_report",
]

TIE_MODES = ("optimistic", "pessimistic", "mean")


class TableScorer:
    """Fixed score table over a small vocabulary; for tests and oracles.

    ``scores`` maps (head, relation, tail) index triples to values; any
    unlisted triple scores ``default``.
    """

    def __init__(self, entity_ids, relation_ids, scores, default=0.0):
        self.entity_ids = tuple(entity_ids)
        self.relation_ids = tuple(relation_ids)
        self._scores = {
            (int(h), int(r), int(t)): float(v) for (h, r, t), v in scores.items()
        }
        self._default = float(default)

    def score_batch(self, h, r, t):
        return np.array(
            [
                self._scores.get((int(a), int(b), int(c)), self._default)
                for a, b, c in zip(np.atleast_1d(h), np.atleast_1d(r), np.atleast_1d(t))
            ]
        )


def _scorer_parts(scorer):
    if isinstance(scorer, ModelState):
        return (
            scorer.entity_ids,
            scorer.relation_ids,
            lambda h, r, t: _model_score_batch(scorer, h, r, t),
        )
    return scorer.entity_ids, scorer.relation_ids, scorer.score_batch


def _to_index_triple(item, entity_index, relation_index):
    """Map a Triple or id/index triple to vocabulary indices; None if unseen."""
    if isinstance(item, Triple):
        h, r, t = item.head, item.predicate, item.tail
    else:
        h, r, t = item
    if isinstance(h, str):
        h = entity_index.get(h)
        r = relation_index.get(r)
        t = entity_index.get(t)
        if h is None or r is None or t is None:
            return None
        return (h, r, t)
    return (int(h), int(r), int(t))


def _known_set(known, entity_index, relation_index):
    out = set()
    for item in known or ():
        idx = _to_index_triple(item, entity_index, relation_index)
        if idx is not None:
            out.add(idx)
    return out


def filtered_rank(scorer, triple, known, side, tie_mode="optimistic"):
    """Rank one true triple against all single-side corruptions.

    Parameters
    ----------
    scorer : ModelState or scorer object
    triple : (h, r, t) vocabulary indices
    known : set of (h, r, t) index triples
        Corruptions appearing here are excluded from the competition.
    side : {"head", "tail"}
        Which slot to corrupt.
    tie_mode : {"optimistic", "pessimistic", "mean"}
        Corruptions scoring exactly equal to the true triple count as 0,
        1, or 1/2 each.

    Returns
    -------
    float
        1 + the (possibly fractional) count of surviving corruptions that
        outscore the true triple.
    """
    if side not in ("head", "tail"):
        raise ConfigError(f"side must be 'head' or 'tail', got {side!r}")
    if tie_mode not in TIE_MODES:
        raise ConfigError(f"tie_mode must be one of {TIE_MODES}, got {tie_mode!r}")
    entity_ids, _, score_fn = _scorer_parts(scorer)
    n_entities = len(entity_ids)
    h, r, t = (int(x) for x in triple)
    entities = np.arange(n_entities, dtype=np.int64)
    if side == "head":
        scores = score_fn(entities, np.full(n_entities, r), np.full(n_entities, t))
        original = h
        corrupted = lambda e: (e, r, t)
    else:
        scores = score_fn(np.full(n_entities, h), np.full(n_entities, r), entities)
        original = t
        corrupted = lambda e: (h, r, e)
    scores = np.asarray(scores, dtype=float)
    true_score = scores[original]
    greater = 0
    ties = 0
    for e in range(n_entities):
        if e == original or corrupted(e) in known:
            continue
        if scores[e] > true_score:
            greater += 1
        elif scores[e] == true_score:
            ties += 1
    if tie_mode == "optimistic":
        return 1.0 + greater
    if tie_mode == "pessimistic":
        return 1.0 + greater + ties
    return 1.0 + greater + ties / 2.0


@dataclass(frozen=True)
class RankMetrics:
    """Aggregate ranking quality over a test set.

    ``mr`` and ``mrr`` average over both head and tail ranks of every
    evaluated triple (denominator 2 per triple). ``hits[k]`` is the
    fraction of those ranks at or below k, in [0, 1].
    """

    mr: float
    mrr: float
    hits: dict
    n_test: int
    skipped_unseen: int


def evaluate(
    scorer,
    test,
    known,
    tie_mode="optimistic",
    hits_at=(1, 3, 10),
    cap=None,
    cap_seed=0,
):
    """Rank every test triple on both sides and aggregate the metrics.

    Test triples with entities or relations outside the scorer's
    vocabulary are skipped and counted in ``skipped_unseen``. ``known``
    should contain every true triple (train, validation, and test) so
    filtering removes all genuine completions from the competition.

    Parameters
    ----------
    cap : int, optional
        Evaluate at most this many test triples, chosen deterministically
        from ``cap_seed``; for cheap validation passes during training.

    Raises
    ------
    DataError
        If no test triple survives vocabulary mapping.
    """
    entity_ids, relation_ids, _ = _scorer_parts(scorer)
    entity_index = {e: i for i, e in enumerate(entity_ids)}
    relation_index = {r: i for i, r in enumerate(relation_ids)}
    mapped = []
    skipped = 0
    for item in test:
        idx = _to_index_triple(item, entity_index, relation_index)
        if idx is None:
            skipped += 1
        else:
            mapped.append(idx)
    if not mapped:
        raise DataError("every test triple uses out-of-vocabulary ids")
    if cap is not None and len(mapped) > cap:
        rng = np.random.default_rng(cap_seed)
        chosen = rng.choice(len(mapped), size=cap, replace=False)
        mapped = [mapped[i] for i in sorted(chosen)]
    known_idx = _known_set(known, entity_index, relation_index)
    ranks = []
    for idx in mapped:
        ranks.append(filtered_rank(scorer, idx, known_idx, "head", tie_mode))
        ranks.append(filtered_rank(scorer, idx, known_idx, "tail", tie_mode))
    arr = np.array(ranks)
    return RankMetrics(
        mr=float(arr.mean()),
        mrr=float((1.0 / arr).mean()),
        hits={k: float((arr <= k).mean()) for k in hits_at},
        n_test=len(mapped),
        skipped_unseen=skipped,
    )


def format_metrics(metrics):
    """Human-readable metrics block."""
    lines = [
        f"test triples   {metrics.n_test}",
        f"skipped unseen {metrics.skipped_unseen}",
        f"MR             {metrics.mr:.4f}",
        f"MRR            {metrics.mrr:.4f}",
    ]
    for k in sorted(metrics.hits):
        lines.append(f"Hits@{k:<10}{metrics.hits[k]:.4f}")
    return "\n".join(lines)


def write_metrics_tsv(metrics, path):
    """Machine-readable metrics dump: one metric per row."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("metric\tvalue\n")
        f.write(f"n_test\t{metrics.n_test}\n")
        f.write(f"skipped_unseen\t{metrics.skipped_unseen}\n")
        f.write(f"mr\t{repr(metrics.mr)}\n")
        f.write(f"mrr\t{repr(metrics.mrr)}\n")
        for k in sorted(metrics.hits):
            f.write(f"hits@{k}\t{repr(metrics.hits[k])}\n")


@dataclass(frozen=True)
class TypeConstraint:
    """Entity filter on semantic types, groups, or explicit ids.

    Fields left as None do not constrain; set fields must all admit the
    entity (types and groups admit on any intersection).
    """

    semantic_types: frozenset | None = None
    semantic_groups: frozenset | None = None
    ids: frozenset | None = None

    def admits(self, concept):
        if self.ids is not None and concept.id not in self.ids:
            return False
        if (
            self.semantic_types is not None
            and not (concept.semantic_types & self.semantic_types)
        ):
            return False
        if (
            self.semantic_groups is not None
            and not (concept.semantic_groups & self.semantic_groups)
        ):
            return False
        return True


@dataclass(frozen=True)
class Candidate:
    rank: int
    entity_id: str
    name: str
    score: float
    known: bool


@dataclass(frozen=True)
class CandidateList:
    """Ranked completions for a partial triple.

    ``query`` is (head, relation, tail) ids with None in the open slot.
    Scores are non-increasing and ranks run 1..n contiguously.
    """

    query: tuple
    candidates: tuple
    constraint: TypeConstraint | None = None
    novel_only: bool = False


def predict_candidates(
    scorer,
    query,
    k,
    concepts=None,
    constraint=None,
    known=(),
    novel_only=False,
):
    """Rank vocabulary entities for the open slot of a partial triple.

    Parameters
    ----------
    scorer : ModelState or scorer object
    query : (head, relation, tail)
        Ids with exactly one of head/tail as None.
    k : int
        List length; the full admissible pool is returned when smaller.
    concepts : mapping id -> concept, optional
        Metadata source for constraint checks and names (a graph's
        ``concepts`` dict). Required when ``constraint`` is set.
    constraint : TypeConstraint, optional
    known : iterable of triples or id/index tuples
        Marks candidates whose completion is already asserted; these are
        dropped entirely under ``novel_only``.
    novel_only : bool

    Raises
    ------
    ConfigError
        Malformed query, k < 1, or a constraint without concept metadata.
    DataError
        Unknown fixed entity or relation, or nothing admissible to rank.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    head, relation, tail = query
    if (head is None) == (tail is None):
        raise ConfigError("query must fix exactly one of head or tail")
    if constraint is not None and concepts is None:
        raise ConfigError("a type constraint needs concept metadata")
    entity_ids, relation_ids, score_fn = _scorer_parts(scorer)
    entity_index = {e: i for i, e in enumerate(entity_ids)}
    relation_index = {r: i for i, r in enumerate(relation_ids)}
    if relation not in relation_index:
        raise DataError(f"unknown relation: {relation!r}")
    fixed_id = tail if head is None else head
    if fixed_id not in entity_index:
        raise DataError(f"unknown concept: {fixed_id!r}")
    r = relation_index[relation]
    fixed = entity_index[fixed_id]

    pool = []
    for i, eid in enumerate(entity_ids):
        if constraint is not None:
            concept = concepts.get(eid) if hasattr(concepts, "get") else None
            if concept is None or not constraint.admits(concept):
                continue
        pool.append(i)
    if not pool:
        raise DataError("constraint excludes every entity")
    pool = np.array(pool, dtype=np.int64)
    if head is None:
        scores = score_fn(pool, np.full(len(pool), r), np.full(len(pool), fixed))
        completion = lambda e: (e, r, fixed)
    else:
        scores = score_fn(np.full(len(pool), fixed), np.full(len(pool), r), pool)
        completion = lambda e: (fixed, r, e)
    scores = np.asarray(scores, dtype=float)
    known_idx = _known_set(known, entity_index, relation_index)

    order = sorted(range(len(pool)), key=lambda i: (-scores[i], entity_ids[pool[i]]))
    rows = []
    for i in order:
        e = int(pool[i])
        is_known = completion(e) in known_idx
        if novel_only and is_known:
            continue
        eid = entity_ids[e]
        name = ""
        if concepts is not None and hasattr(concepts, "get"):
            c = concepts.get(eid)
            if c is not None:
                name = c.name
        rows.append(
            Candidate(
                rank=len(rows) + 1,
                entity_id=eid,
                name=name,
                score=float(scores[i]),
                known=is_known,
            )
        )
        if len(rows) == k:
            break
    return CandidateList(
        query=(head, relation, tail),
        candidates=tuple(rows),
        constraint=constraint,
        novel_only=novel_only,
    )


def write_candidates_tsv(candidate_list, path):
    """Dump a candidate list as TSV."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("rank\tentity\tname\tscore\tknown\n")
        for c in candidate_list.candidates:
            flag = "true" if c.known else "false"
            f.write(f"{c.rank}\t{c.entity_id}\t{c.name}\t{repr(c.score)}\t{flag}\n")


@dataclass(frozen=True)
class GroundTruthClusters:
    """Concept-id clusters; any member hit credits the whole cluster."""

    clusters: tuple
    source: str = ""

    def __post_init__(self):
        if not self.clusters:
            raise DataError("ground truth needs at least one cluster")


def load_clusters(path, source=None):
    """Read clusters from a file: one cluster per line, ids |-separated."""
    clusters = []
    try:
        f = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            members = frozenset(p for p in line.split("|") if p)
            if members:
                clusters.append(members)
    return GroundTruthClusters(
        clusters=tuple(clusters), source=source if source is not None else str(path)
    )


@dataclass(frozen=True)
class HitsPoint:
    k: int
    matched: int
    fraction: float


@dataclass(frozen=True)
class HitsCurve:
    points: tuple
    matched_clusters: tuple  # (cluster position, first matching rank, entity)


def ground_truth_hits(candidate_list, truth, ks=(1, 5, 10, 20, 50, 100)):
    """Score a candidate list against clustered ground truth.

    For each cutoff k the curve reports how many distinct clusters have a
    member in the top k (each cluster counted once) and that count divided
    by k.

    Returns
    -------
    (HitsCurve, tuple)
        The curve plus the matched clusters as
        (cluster position, first matching rank, matching entity id).
    """
    first_match = {}  # cluster position -> (rank, entity)
    for c in candidate_list.candidates:
        for pos, cluster in enumerate(truth.clusters):
            if pos not in first_match and c.entity_id in cluster:
                first_match[pos] = (c.rank, c.entity_id)
    matched = tuple(
        (pos, rank, entity)
        for pos, (rank, entity) in sorted(first_match.items())
    )
    points = []
    for k in ks:
        count = sum(1 for _, rank, _ in matched if rank <= k)
        points.append(HitsPoint(k=k, matched=count, fraction=count / k))
    curve = HitsCurve(points=tuple(points), matched_clusters=matched)
    return curve, matched


@dataclass(frozen=True)
class RankDiffReport:
    """Absolute rank differences between two candidate lists."""

    n_shared: int
    median: float
    mean: float
    stdev: float
    buckets: tuple  # (threshold, count, fraction) cumulative

    differences: dict = None


def rank_diff_report(list_a, list_b, thresholds=(0, 1, 3, 10, 100, 500, 1000)):
    """Compare two rankings entity by entity.

    Only entities present in both lists are compared. Buckets count
    entities whose absolute rank difference is at most each threshold.

    Raises
    ------
    DataError
        If the lists share no entities.
    """
    rank_a = {c.entity_id: c.rank for c in list_a.candidates}
    rank_b = {c.entity_id: c.rank for c in list_b.candidates}
    shared = sorted(set(rank_a) & set(rank_b))
    if not shared:
        raise DataError("candidate lists share no entities")
    diffs = {e: abs(rank_a[e] - rank_b[e]) for e in shared}
    values = list(diffs.values())
    return RankDiffReport(
        n_shared=len(shared),
        median=float(statistics.median(values)),
        mean=float(statistics.mean(values)),
        stdev=float(statistics.stdev(values)) if len(values) > 1 else 0.0,
        buckets=tuple(
            (
                tau,
                sum(1 for v in values if v <= tau),
                sum(1 for v in values if v <= tau) / len(values),
            )
            for tau in thresholds
        ),
        differences=diffs,
    )

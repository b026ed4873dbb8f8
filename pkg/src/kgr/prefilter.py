"""Corpus reduction: structural filters, association scoring, pruning, slicing.

The pipeline stages here shrink a raw predication graph to a trainable core:
structural rules drop unusable triples, a log-likelihood statistic plus degree
centrality score how generic each surviving triple is, pruning keeps the most
specific triples up to a budget, and time slicing splits train from test by
assertion date. A configurable keep-list of concepts is exempt from every
reduction so that late-breaking terms survive.
"""
from __future__ import annotations

import datetime as _dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigError, DataError
from .graph import KnowledgeGraph

logger = logging.getLogger(__name__)

__all__ = [
    "PREDICATE_WHITELIST",
    "EXCLUDED_SEMANTIC_GROUPS",
    "COVID_KEEP_CONCEPTS",
    "FilterConfig",
    "read_concept_list",
    "apply_structural_filters",
    "ContingencyStats",
    "g2_statistic",
    "expected_independence",
    "g2_score",
    "InformativenessScore",
    "minmax_normalize",
    "informativeness",
    "write_scores_tsv",
    "prune_by_score",
    "TrainTestSplit",
    "time_slice",
]

# Predicates useful for repurposing work; everything else is dropped.
PREDICATE_WHITELIST = frozenset(
    {
        "AFFECTS",
        "ASSOCIATED_WITH",
        "AUGMENTS",
        "CAUSES",
        "COEXISTS_WITH",
        "COMPLICATES",
        "DISRUPTS",
        "INHIBITS",
        "INTERACTS_WITH",
        "MANIFESTATION_OF",
        "PREDISPOSES",
        "PREVENTS",
        "PRODUCES",
        "STIMULATES",
        "TREATS",
    }
)

# Semantic groups too abstract to ground drug mechanisms: activities and
# behaviors, concepts and ideas, objects, occupations, organizations,
# phenomena.
EXCLUDED_SEMANTIC_GROUPS = frozenset(
    {"ACTI", "CONC", "OBJC", "OCCU", "ORGA", "PHEN"}
)

# COVID-19 concept identifiers; these entered the literature late and must
# survive every reduction stage.
COVID_KEEP_CONCEPTS = frozenset(
    {
        "C5203670",
        "C5203671",
        "C5203672",
        "C5203673",
        "C5203674",
        "C5203675",
        "C5203676",
    }
)


def read_concept_list(path):
    """Read a one-id-per-line concept list. Blank lines and # comments skip."""
    ids = set()
    try:
        f = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                ids.add(line)
    return frozenset(ids)


@dataclass(frozen=True)
class FilterConfig:
    """Structural filter settings.

    ``keep_concepts`` takes precedence over every rule, including
    ``generic_concepts`` and the predicate whitelist: a triple touching a
    keep concept always survives structural filtering.

    When ``confidence_threshold`` is set, triples without a recorded
    confidence fail the threshold and are dropped.
    """

    predicate_whitelist: frozenset = PREDICATE_WHITELIST
    excluded_semantic_groups: frozenset = EXCLUDED_SEMANTIC_GROUPS
    generic_concepts: frozenset = frozenset()
    drop_self_loops: bool = True
    keep_concepts: frozenset = COVID_KEEP_CONCEPTS
    confidence_threshold: float | None = None

    def __post_init__(self):
        if self.confidence_threshold is not None and not (
            0.0 <= self.confidence_threshold <= 1.0
        ):
            raise ConfigError(
                f"confidence_threshold must be in [0, 1], "
                f"got {self.confidence_threshold}"
            )

    @classmethod
    def from_file(cls, path):
        """Parse a key = value settings file.

        Recognized keys: predicate_whitelist, excluded_semantic_groups
        (comma-separated), generic_concepts_file, keep_concepts_file
        (one-id-per-line lists), drop_self_loops (true/false),
        confidence_threshold (real).
        """
        kwargs = {}
        try:
            f = open(path, encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        with f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip()
                if key == "predicate_whitelist":
                    kwargs[key] = frozenset(
                        v.strip() for v in value.split(",") if v.strip()
                    )
                elif key == "excluded_semantic_groups":
                    kwargs[key] = frozenset(
                        v.strip() for v in value.split(",") if v.strip()
                    )
                elif key == "generic_concepts_file":
                    kwargs["generic_concepts"] = read_concept_list(value)
                elif key == "keep_concepts_file":
                    kwargs["keep_concepts"] = read_concept_list(value)
                elif key == "drop_self_loops":
                    if value.lower() not in ("true", "false"):
                        raise ConfigError(
                            f"{path}:{lineno}: drop_self_loops must be true or false"
                        )
                    kwargs[key] = value.lower() == "true"
                elif key == "confidence_threshold":
                    try:
                        kwargs[key] = float(value)
                    except ValueError:
                        raise ConfigError(
                            f"{path}:{lineno}: bad confidence_threshold {value!r}"
                        ) from None
                else:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        return cls(**kwargs)


def apply_structural_filters(graph, config):
    """Drop triples failing the structural rules; keep-list triples survive.

    A triple is removed when its predicate is outside the whitelist, either
    endpoint sits in an excluded semantic group, both endpoints are generic
    concepts, it is a self-loop (if configured), or its confidence misses
    the configured threshold. Triples touching ``config.keep_concepts``
    bypass all of these rules. The output shares the input vocabulary.
    """
    keep = config.keep_concepts
    excluded = config.excluded_semantic_groups
    generic = config.generic_concepts
    threshold = config.confidence_threshold
    survivors = []
    for t in graph.triples:
        if t.head in keep or t.tail in keep:
            survivors.append(t)
            continue
        if t.predicate not in config.predicate_whitelist:
            continue
        hg = graph.concepts[t.head].semantic_groups
        tg = graph.concepts[t.tail].semantic_groups
        if hg & excluded or tg & excluded:
            continue
        if t.head in generic and t.tail in generic:
            continue
        if config.drop_self_loops and t.is_self_loop():
            continue
        if threshold is not None and (t.confidence is None or t.confidence < threshold):
            continue
        survivors.append(t)
    return graph.with_triples(survivors)


class ContingencyStats:
    """Sparse predication-count table with all marginals.

    Counts are weighted by each triple's merged predication count, so the
    total matches the source row count, not the unique-triple count.
    """

    def __init__(self):
        self.cell = defaultdict(float)  # (i, j, k) -> n_ijk
        self.ij = defaultdict(float)  # (head, pred) -> sum over tails
        self.ik = defaultdict(float)  # (head, tail) -> sum over preds
        self.jk = defaultdict(float)  # (pred, tail) -> sum over heads
        self.i = defaultdict(float)
        self.j = defaultdict(float)
        self.k = defaultdict(float)
        self.total = 0.0

    @classmethod
    def from_graph(cls, graph):
        stats = cls()
        for pos in range(graph.n_triples):
            i = int(graph.head_idx[pos])
            j = int(graph.rel_idx[pos])
            k = int(graph.tail_idx[pos])
            w = float(graph.triples[pos].count)
            stats.add(i, j, k, w)
        return stats

    def add(self, i, j, k, weight=1.0):
        self.cell[(i, j, k)] += weight
        self.ij[(i, j)] += weight
        self.ik[(i, k)] += weight
        self.jk[(j, k)] += weight
        self.i[i] += weight
        self.j[j] += weight
        self.k[k] += weight
        self.total += weight

    def collapsed(self, i, j, k):
        """2x2x2 table over {head=i,other} x {pred=j,other} x {tail=k,other}.

        Built from marginals by inclusion-exclusion; exact for count data.
        """
        n111 = self.cell.get((i, j, k), 0.0)
        nij = self.ij.get((i, j), 0.0)
        nik = self.ik.get((i, k), 0.0)
        njk = self.jk.get((j, k), 0.0)
        ni = self.i.get(i, 0.0)
        nj = self.j.get(j, 0.0)
        nk = self.k.get(k, 0.0)
        T = self.total
        out = np.empty((2, 2, 2))
        out[0, 0, 0] = n111
        out[0, 0, 1] = nij - n111
        out[0, 1, 0] = nik - n111
        out[1, 0, 0] = njk - n111
        out[0, 1, 1] = ni - nij - nik + n111
        out[1, 0, 1] = nj - nij - njk + n111
        out[1, 1, 0] = nk - nik - njk + n111
        out[1, 1, 1] = T - ni - nj - nk + nij + nik + njk - n111
        return out


def expected_independence(observed):
    """Expected cell counts under full independence of all axes.

    The expectation for a cell is the product of its one-way marginals
    divided by ``T ** (ndim - 1)``. Expectations sum to the observed total.
    """
    t = np.asarray(observed, dtype=float)
    if (t < 0).any():
        raise DataError("negative count in contingency table")
    total = t.sum()
    if total == 0:
        return np.zeros_like(t)
    axes = range(t.ndim)
    margs = [t.sum(axis=tuple(a for a in axes if a != ax)) for ax in axes]
    return reduce(np.multiply.outer, margs) / total ** (t.ndim - 1)


def g2_statistic(observed):
    """Log-likelihood-ratio statistic of a count table against independence.

    Computes ``2 * sum(n * ln(n / m))`` over cells, where ``m`` is the
    full-independence expectation; empty cells contribute zero. Non-negative
    for any table (it is ``2T`` times a KL divergence) and exactly zero when
    the table factorizes over its axes.
    """
    t = np.asarray(observed, dtype=float)
    expected = expected_independence(t)
    mask = t > 0
    # cells with n > 0 always have m > 0: their one-way marginals are >= n
    return 2.0 * float(np.sum(t[mask] * np.log(t[mask] / expected[mask])))


def g2_score(stats, triple_index):
    """Association strength of one triple against its collapsed table.

    Collapses the global table to 2x2x2 around ``triple_index = (i, j, k)``
    and returns the statistic. Requires a positive count in the queried
    cell and a non-empty table.
    """
    i, j, k = triple_index
    if stats.total <= 0:
        raise DataError("empty contingency table")
    if stats.cell.get((i, j, k), 0.0) <= 0:
        raise DataError(f"no observations for triple index {(i, j, k)}")
    return g2_statistic(stats.collapsed(i, j, k))


@dataclass(frozen=True)
class InformativenessScore:
    """Per-triple genericness score; lower means more specific."""

    g2: float
    k_in: int
    k_out: int
    g2_norm: float
    k_in_norm: float
    k_out_norm: float
    combined: float


def minmax_normalize(values):
    """Scale values to [0, 1] by min-max.

    A degenerate input (all values equal) maps to all zeros, with a warning,
    so a constant component never dominates a combined score. Invariant
    under positive affine rescaling of the input.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return arr.copy()
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        logger.warning("degenerate normalization: all %d values equal %g", arr.size, lo)
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def informativeness(graph):
    """Score every triple by association strength plus endpoint degrees.

    Each triple gets its collapsed-table statistic, its head's out-degree,
    and its tail's in-degree, each min-max normalized over the whole graph
    and summed. Low combined scores mark specific, informative triples;
    high scores mark generic hub-heavy ones.

    Returns
    -------
    dict
        ``(head, predicate, tail)`` key -> InformativenessScore.
    """
    if graph.n_triples == 0:
        raise DataError("cannot score an empty graph")
    stats = ContingencyStats.from_graph(graph)
    n = graph.n_triples
    g2 = np.empty(n)
    k_out = np.empty(n, dtype=np.int64)
    k_in = np.empty(n, dtype=np.int64)
    for pos, t in enumerate(graph.triples):
        i = int(graph.head_idx[pos])
        j = int(graph.rel_idx[pos])
        k = int(graph.tail_idx[pos])
        g2[pos] = g2_statistic(stats.collapsed(i, j, k))
        k_out[pos] = graph.degree(t.head, "out")
        k_in[pos] = graph.degree(t.tail, "in")
    g2_norm = minmax_normalize(g2)
    k_out_norm = minmax_normalize(k_out)
    k_in_norm = minmax_normalize(k_in)
    combined = g2_norm + k_out_norm + k_in_norm
    return {
        t.key(): InformativenessScore(
            g2=float(g2[pos]),
            k_in=int(k_in[pos]),
            k_out=int(k_out[pos]),
            g2_norm=float(g2_norm[pos]),
            k_in_norm=float(k_in_norm[pos]),
            k_out_norm=float(k_out_norm[pos]),
            combined=float(combined[pos]),
        )
        for pos, t in enumerate(graph.triples)
    }


def write_scores_tsv(graph, scores, path):
    """Dump per-triple scores as TSV in canonical triple order."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(
            "head\tpredicate\ttail\tg2\tk_in_norm\tk_out_norm\tg2_norm\tcombined\n"
        )
        for t in graph.triples:
            s = scores[t.key()]
            f.write(
                "\t".join(
                    (
                        t.head,
                        t.predicate,
                        t.tail,
                        repr(s.g2),
                        repr(s.k_in_norm),
                        repr(s.k_out_norm),
                        repr(s.g2_norm),
                        repr(s.combined),
                    )
                )
                + "\n"
            )


def prune_by_score(graph, scores, budget, keep=frozenset()):
    """Shrink the graph to ``budget`` triples, keeping the lowest scores.

    Triples touching a keep concept are always retained and count against
    the budget. The remainder is filled with the lowest combined scores;
    ties break deterministically by (score, head, predicate, tail).

    Raises
    ------
    ConfigError
        If the budget cannot cover the keep-touching triples.
    DataError
        If a prunable triple has no score entry.
    """
    kept = []
    rest = []
    for t in graph.triples:
        if t.head in keep or t.tail in keep:
            kept.append(t)
        else:
            rest.append(t)
    if budget < len(kept):
        raise ConfigError(
            f"budget {budget} is below the {len(kept)} keep-touching triples"
        )
    missing = [t.key() for t in rest if t.key() not in scores]
    if missing:
        raise DataError(f"no score for triple {missing[0]}")
    rest.sort(key=lambda t: (scores[t.key()].combined, t.head, t.predicate, t.tail))
    return graph.with_triples(kept + rest[: budget - len(kept)])


@dataclass(frozen=True)
class TrainTestSplit:
    """Date partition of a graph: train at or before cutoff, test after."""

    cutoff: _dt.date
    train: KnowledgeGraph
    test: tuple
    excluded_undated: int


def time_slice(graph, cutoff, undated_to_train=False):
    """Partition triples by assertion date around a cutoff.

    Dated triples go to train when ``date <= cutoff`` and to test otherwise.
    A merged triple carries its earliest date, so anything asserted both
    before and after the cutoff lands in train. Undated triples are excluded
    and counted unless ``undated_to_train`` routes them into train.

    Raises
    ------
    DataError
        If either side of the partition comes out empty.
    """
    train = []
    test = []
    undated = 0
    for t in graph.triples:
        if t.date is None:
            if undated_to_train:
                train.append(t)
            else:
                undated += 1
        elif t.date <= cutoff:
            train.append(t)
        else:
            test.append(t)
    if not train:
        raise DataError(f"no training triples at or before {cutoff.isoformat()}")
    if not test:
        raise DataError(f"no test triples after {cutoff.isoformat()}")
    return TrainTestSplit(
        cutoff=cutoff,
        train=graph.with_triples(train),
        test=tuple(test),
        excluded_undated=undated,
    )

"""Core graph containers, TSV ingestion, and adjacency queries.

The graph is an immutable collection of unique ``(head, predicate, tail)``
triples over a fixed concept and predicate vocabulary. Duplicate predications
from the input stream are merged into one triple carrying a count, the union
of supporting sentence ids, and the earliest assertion date.
"""
from __future__ import annotations

import csv
import datetime as _dt
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

__all__ = [
    "ConceptId",
    "PredicateId",
    "Triple",
    "TripleSchema",
    "NeighborLink",
    "KnowledgeGraph",
    "LoadResult",
    "load_triples",
    "load_semgroup_map",
    "write_graph_tsv",
]


@dataclass(frozen=True)
class ConceptId:
    """A concept with its metadata.

    Parameters
    ----------
    id : str
        Stable concept identifier (e.g. a CUI).
    name : str
        Preferred name; empty when unknown.
    semantic_types : frozenset of str
        Semantic type abbreviations observed for this concept.
    semantic_groups : frozenset of str
        Coarse groups derived from the types via a type-to-group map.
    """

    id: str
    name: str = ""
    semantic_types: frozenset = frozenset()
    semantic_groups: frozenset = frozenset()


@dataclass(frozen=True)
class PredicateId:
    """A predicate (relation label). Directed unless flagged otherwise."""

    id: str
    directed: bool = True


@dataclass(frozen=True)
class Triple:
    """One unique (head, predicate, tail) assertion with provenance.

    ``count`` is the number of merged source predications, ``sentence_ids``
    their supporting sentence identifiers (sorted, duplicate-free), ``date``
    the earliest assertion date seen, ``confidence`` the best extraction
    confidence seen (or None when never provided).
    """

    head: str
    predicate: str
    tail: str
    date: _dt.date | None = None
    sentence_ids: tuple = ()
    count: int = 1
    confidence: float | None = None

    def key(self):
        return (self.head, self.predicate, self.tail)

    def is_self_loop(self):
        return self.head == self.tail


@dataclass(frozen=True)
class NeighborLink:
    """One adjacency entry: the predicate, the other endpoint, the triple."""

    predicate: str
    neighbor: str
    direction: str  # "out": triple.head is the queried concept; "in": tail is
    triple: Triple


@dataclass(frozen=True)
class TripleSchema:
    """Column names mapping a TSV file onto triple fields.

    Only the head, predicate, and tail columns must exist in the file;
    all other mapped columns are used when present and ignored otherwise.
    ``sentence_ids`` (pipe-separated list) wins over ``sentence_id`` (one id
    per row) when both columns are present.
    """

    head: str = "head_cui"
    predicate: str = "predicate"
    tail: str = "tail_cui"
    head_name: str = "head_name"
    tail_name: str = "tail_name"
    head_semtypes: str = "head_semtypes"
    tail_semtypes: str = "tail_semtypes"
    date: str = "date"
    sentence_id: str = "sentence_id"
    sentence_ids: str = "sentence_ids"
    count: str = "count"
    confidence: str = "confidence"


def _merge_triples(triples):
    """Merge triples sharing a key; deterministic under input order."""
    merged = {}
    for t in triples:
        k = t.key()
        old = merged.get(k)
        if old is None:
            ids = tuple(sorted(set(t.sentence_ids)))
            merged[k] = t if ids == t.sentence_ids else replace(t, sentence_ids=ids)
            continue
        date = old.date
        if t.date is not None and (date is None or t.date < date):
            date = t.date
        conf = old.confidence
        if t.confidence is not None and (conf is None or t.confidence > conf):
            conf = t.confidence
        merged[k] = replace(
            old,
            date=date,
            sentence_ids=tuple(sorted(set(old.sentence_ids) | set(t.sentence_ids))),
            count=old.count + t.count,
            confidence=conf,
        )
    return sorted(merged.values(), key=Triple.key)


def _merge_concepts(a, b):
    # union types/groups; smallest non-empty name keeps the merge order-free
    name = a.name
    if b.name and (not name or b.name < name):
        name = b.name
    return ConceptId(
        id=a.id,
        name=name,
        semantic_types=a.semantic_types | b.semantic_types,
        semantic_groups=a.semantic_groups | b.semantic_groups,
    )


class KnowledgeGraph:
    """Immutable triple store with index access and adjacency queries.

    Build instances through :meth:`from_triples` or :func:`load_triples`.
    Triples are stored in canonical order (sorted by head, predicate, tail)
    and the vocabularies are sorted, so equal triple sets produce identical
    graphs regardless of input order.

    Attributes
    ----------
    entity_ids : tuple of str
        Sorted concept vocabulary. Indices into this tuple are the integer
        entity ids used by the numpy index arrays.
    relation_ids : tuple of str
        Sorted predicate vocabulary.
    triples : tuple of Triple
        Unique triples in canonical order.
    head_idx, rel_idx, tail_idx : ndarray of int64
        Per-triple vocabulary indices, aligned with ``triples``.
    """

    def __init__(self, triples, concepts, predicates, entity_ids, relation_ids):
        self.triples = tuple(triples)
        self.entity_ids = tuple(entity_ids)
        self.relation_ids = tuple(relation_ids)
        self.entity_index = {e: i for i, e in enumerate(self.entity_ids)}
        self.relation_index = {r: i for i, r in enumerate(self.relation_ids)}
        self.concepts = concepts
        self.predicates = predicates

        n = len(self.triples)
        self.head_idx = np.empty(n, dtype=np.int64)
        self.rel_idx = np.empty(n, dtype=np.int64)
        self.tail_idx = np.empty(n, dtype=np.int64)
        by_head = defaultdict(list)
        by_tail = defaultdict(list)
        for pos, t in enumerate(self.triples):
            h = self.entity_index[t.head]
            r = self.relation_index[t.predicate]
            u = self.entity_index[t.tail]
            self.head_idx[pos] = h
            self.rel_idx[pos] = r
            self.tail_idx[pos] = u
            by_head[h].append(pos)
            by_tail[u].append(pos)
        self._by_head = {k: tuple(v) for k, v in by_head.items()}
        self._by_tail = {k: tuple(v) for k, v in by_tail.items()}
        self._keys = None

    @classmethod
    def from_triples(cls, triples, concepts=None, entity_ids=None, relation_ids=None):
        """Build a graph from triples, merging duplicates.

        Parameters
        ----------
        triples : iterable of Triple
        concepts : mapping of str to ConceptId, optional
            Metadata for (a superset of) the endpoint concepts. Endpoints
            without an entry get a bare ConceptId.
        entity_ids : iterable of str, optional
            Fixed concept vocabulary; must cover every endpoint. Defaults to
            the sorted set of endpoints.
        relation_ids : iterable of str, optional
            Fixed predicate vocabulary; must cover every predicate used.

        Raises
        ------
        DataError
            If a triple endpoint or predicate is missing from a supplied
            vocabulary.
        """
        merged = _merge_triples(triples)
        seen_e = {t.head for t in merged} | {t.tail for t in merged}
        seen_r = {t.predicate for t in merged}
        if entity_ids is None:
            entity_ids = sorted(seen_e)
        else:
            entity_ids = tuple(entity_ids)
            missing = seen_e.difference(entity_ids)
            if missing:
                raise DataError(f"endpoint not in vocabulary: {sorted(missing)[0]!r}")
        if relation_ids is None:
            relation_ids = sorted(seen_r)
        else:
            relation_ids = tuple(relation_ids)
            missing = seen_r.difference(relation_ids)
            if missing:
                raise DataError(f"predicate not in vocabulary: {sorted(missing)[0]!r}")
        concepts = dict(concepts) if concepts else {}
        for e in entity_ids:
            concepts.setdefault(e, ConceptId(id=e))
        predicates = {r: PredicateId(id=r) for r in relation_ids}
        return cls(merged, concepts, predicates, entity_ids, relation_ids)

    # -- sizes ---------------------------------------------------------------

    @property
    def n_entities(self):
        return len(self.entity_ids)

    @property
    def n_relations(self):
        return len(self.relation_ids)

    @property
    def n_triples(self):
        return len(self.triples)

    @property
    def n_predications(self):
        """Total merged source predications (sum of triple counts)."""
        return sum(t.count for t in self.triples)

    # -- lookups -------------------------------------------------------------

    def concept(self, concept_id):
        try:
            return self.concepts[concept_id]
        except KeyError:
            raise DataError(f"unknown concept: {concept_id!r}") from None

    def has_concept(self, concept_id):
        return concept_id in self.entity_index

    def triple_keys(self):
        """Frozenset of (head, rel, tail) index triples, for membership tests."""
        if self._keys is None:
            self._keys = frozenset(
                zip(
                    self.head_idx.tolist(),
                    self.rel_idx.tolist(),
                    self.tail_idx.tolist(),
                )
            )
        return self._keys

    def degree(self, concept_id, direction="out"):
        """Number of distinct triples with the concept on the given side.

        Parallel predicates between the same pair count separately; merged
        duplicates count once. Out-degrees summed over all concepts equal the
        triple count, as do in-degrees.
        """
        idx = self.entity_index.get(concept_id)
        if idx is None:
            raise DataError(f"unknown concept: {concept_id!r}")
        if direction == "out":
            return len(self._by_head.get(idx, ()))
        if direction == "in":
            return len(self._by_tail.get(idx, ()))
        raise DataError(f"direction must be 'out' or 'in', got {direction!r}")

    def neighbors(self, concept_id, predicates=None, direction="out"):
        """Adjacent concepts with the connecting triples.

        Parameters
        ----------
        concept_id : str
        predicates : iterable of str, optional
            Keep only these predicate ids.
        direction : {"out", "in", "both"}
            "out" follows triples with the concept as head, "in" as tail.

        Returns
        -------
        list of NeighborLink
            One entry per distinct triple, in canonical triple order
            ("out" entries before "in" entries for direction="both").
        """
        idx = self.entity_index.get(concept_id)
        if idx is None:
            raise DataError(f"unknown concept: {concept_id!r}")
        if direction not in ("out", "in", "both"):
            raise DataError(f"direction must be 'out', 'in', or 'both', got {direction!r}")
        pred_filter = None if predicates is None else frozenset(predicates)
        links = []
        if direction in ("out", "both"):
            for pos in self._by_head.get(idx, ()):
                t = self.triples[pos]
                if pred_filter is None or t.predicate in pred_filter:
                    links.append(NeighborLink(t.predicate, t.tail, "out", t))
        if direction in ("in", "both"):
            for pos in self._by_tail.get(idx, ()):
                t = self.triples[pos]
                if pred_filter is None or t.predicate in pred_filter:
                    links.append(NeighborLink(t.predicate, t.head, "in", t))
        return links

    def with_triples(self, triples):
        """New graph over the same vocabulary and metadata, different triples."""
        return KnowledgeGraph(
            _merge_triples(triples),
            self.concepts,
            self.predicates,
            self.entity_ids,
            self.relation_ids,
        )

    def index_triples(self):
        """(n, 3) int64 array of (head, rel, tail) vocabulary indices."""
        return np.stack([self.head_idx, self.rel_idx, self.tail_idx], axis=1)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.triples == other.triples
            and self.entity_ids == other.entity_ids
            and self.relation_ids == other.relation_ids
        )

    def __repr__(self):
        return (
            f"KnowledgeGraph({self.n_entities} concepts, "
            f"{self.n_relations} predicates, {self.n_triples} triples)"
        )


@dataclass
class LoadResult:
    """Outcome of a TSV load: the graph plus row accounting."""

    graph: KnowledgeGraph
    rows_read: int
    rows_rejected: int
    reasons: Counter = field(default_factory=Counter)

    @property
    def rows_valid(self):
        return self.rows_read - self.rows_rejected


def load_semgroup_map(path):
    """Read a two-column TSV mapping semantic type -> semantic group."""
    mapping = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(f, delimiter="\t"):
            if len(row) < 2 or not row[0]:
                continue
            mapping[row[0]] = row[1]
    return mapping


def _split_types(text):
    return frozenset(p for p in text.split("|") if p) if text else frozenset()


def load_triples(path, schema=None, semgroup_map=None):
    """Load a predication TSV into a graph.

    Rows missing any of head, predicate, or tail are rejected and counted,
    as are rows with unparseable dates, counts, or confidences. Duplicate
    (head, predicate, tail) rows merge: counts sum, sentence ids union,
    the earliest date and highest confidence win. Concept metadata merges
    across rows (types union; smallest non-empty name).

    Parameters
    ----------
    path : str or Path
        TSV file with a header row.
    schema : TripleSchema, optional
        Column mapping; defaults to the standard columns.
    semgroup_map : mapping or str, optional
        Semantic type -> group map, or path to a two-column TSV of one.

    Returns
    -------
    LoadResult
        ``result.graph`` is the merged graph; ``result.rows_rejected`` and
        ``result.reasons`` describe what was dropped.
    """
    schema = schema or TripleSchema()
    if isinstance(semgroup_map, (str, bytes)) or hasattr(semgroup_map, "__fspath__"):
        semgroup_map = load_semgroup_map(semgroup_map)
    semgroup_map = semgroup_map or {}

    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with f:
        reader = csv.reader(f, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        col = {name: i for i, name in enumerate(header)}

        def col_of(name):
            return col.get(name)

        i_head = col_of(schema.head)
        i_pred = col_of(schema.predicate)
        i_tail = col_of(schema.tail)
        if i_head is None or i_pred is None or i_tail is None:
            raise DataError(
                f"{path}: header lacks required columns "
                f"{schema.head!r}, {schema.predicate!r}, {schema.tail!r}"
            )
        i_hname = col_of(schema.head_name)
        i_tname = col_of(schema.tail_name)
        i_htypes = col_of(schema.head_semtypes)
        i_ttypes = col_of(schema.tail_semtypes)
        i_date = col_of(schema.date)
        i_sid = col_of(schema.sentence_id)
        i_sids = col_of(schema.sentence_ids)
        i_count = col_of(schema.count)
        i_conf = col_of(schema.confidence)

        rows_read = 0
        reasons = Counter()
        triples = []
        concepts = {}

        def cell(row, i):
            return row[i].strip() if i is not None and i < len(row) else ""

        def note_concept(cid, name, types):
            groups = frozenset(semgroup_map[t] for t in types if t in semgroup_map)
            c = ConceptId(id=cid, name=name, semantic_types=types, semantic_groups=groups)
            old = concepts.get(cid)
            concepts[cid] = c if old is None else _merge_concepts(old, c)

        for row in reader:
            if not any(x.strip() for x in row):
                continue  # blank line, not a data row
            rows_read += 1
            head = cell(row, i_head)
            pred = cell(row, i_pred)
            tail = cell(row, i_tail)
            if not head or not pred or not tail:
                reasons["missing-field"] += 1
                continue
            raw_date = cell(row, i_date)
            date = None
            if raw_date:
                try:
                    date = _dt.date.fromisoformat(raw_date)
                except ValueError:
                    reasons["bad-date"] += 1
                    continue
            raw_conf = cell(row, i_conf)
            conf = None
            if raw_conf:
                try:
                    conf = float(raw_conf)
                except ValueError:
                    reasons["bad-confidence"] += 1
                    continue
                if not (0.0 <= conf <= 1.0):
                    reasons["bad-confidence"] += 1
                    continue
            raw_count = cell(row, i_count)
            count = 1
            if raw_count:
                try:
                    count = int(raw_count)
                except ValueError:
                    reasons["bad-count"] += 1
                    continue
                if count < 1:
                    reasons["bad-count"] += 1
                    continue
            sids = cell(row, i_sids)
            if sids:
                sentence_ids = tuple(sorted(set(p for p in sids.split("|") if p)))
            else:
                sid = cell(row, i_sid)
                sentence_ids = (sid,) if sid else ()
            triples.append(
                Triple(
                    head=head,
                    predicate=pred,
                    tail=tail,
                    date=date,
                    sentence_ids=sentence_ids,
                    count=count,
                    confidence=conf,
                )
            )
            note_concept(head, cell(row, i_hname), _split_types(cell(row, i_htypes)))
            note_concept(tail, cell(row, i_tname), _split_types(cell(row, i_ttypes)))

    graph = KnowledgeGraph.from_triples(triples, concepts=concepts)
    return LoadResult(
        graph=graph,
        rows_read=rows_read,
        rows_rejected=sum(reasons.values()),
        reasons=reasons,
    )


_CANONICAL_COLUMNS = (
    "head_cui",
    "predicate",
    "tail_cui",
    "head_name",
    "tail_name",
    "head_semtypes",
    "tail_semtypes",
    "date",
    "sentence_ids",
    "count",
    "confidence",
)


def write_graph_tsv(graph, path):
    """Write a graph to TSV in canonical form.

    Column set and ordering are fixed, triples are in canonical order, and
    all formatting is deterministic, so equal graphs produce byte-identical
    files. The output round-trips through :func:`load_triples`.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("\t".join(_CANONICAL_COLUMNS) + "\n")
        for t in graph.triples:
            h = graph.concepts.get(t.head) or ConceptId(id=t.head)
            u = graph.concepts.get(t.tail) or ConceptId(id=t.tail)
            f.write(
                "\t".join(
                    (
                        t.head,
                        t.predicate,
                        t.tail,
                        h.name,
                        u.name,
                        "|".join(sorted(h.semantic_types)),
                        "|".join(sorted(u.semantic_types)),
                        t.date.isoformat() if t.date else "",
                        "|".join(t.sentence_ids),
                        str(t.count),
                        repr(t.confidence) if t.confidence is not None else "",
                    )
                )
                + "\n"
            )

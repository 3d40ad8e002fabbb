"""Snapshot-backed knowledge stores: WordNet hierarchy/definitions and Wiktionary senses.

Snapshots are UTF-8 JSONL files. WordNet rows carry
``{id, lemmas, definition, hypernym_ids}``; Wiktionary rows carry
``{term, senses}``. Loaded stores are immutable and safe for concurrent reads;
every retrieval is a pure function of (snapshot, query).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import SnapshotError

SOURCES = ("wn_hier", "wn_def", "wiki_def")

# Leading words dropped by the wiktionary lookup fallback chain.
DETERMINERS = frozenset({"a", "an", "the"})

# Hard cap on hypernym traversal; crossing it means the snapshot has a cycle.
MAX_HYPERNYM_HOPS = 32


@dataclass(frozen=True)
class SynsetRecord:
    """One WordNet synset: a concept with its lemmas, gloss and parents."""

    id: str
    lemmas: tuple[str, ...]
    definition: str
    hypernym_ids: tuple[str, ...]


@dataclass(frozen=True)
class DictionaryEntry:
    """One Wiktionary term with its ordered senses (first sense is retrieved)."""

    term: str
    senses: tuple[str, ...]


@dataclass(frozen=True)
class KnowledgeItem:
    """A retrieved piece of external knowledge for a query."""

    query: str
    source: str
    text: str


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _normalize_query(query: str) -> str:
    return " ".join(query.lower().split())


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SnapshotError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise SnapshotError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


class WordNetGraph:
    """In-memory WordNet snapshot with a lemma index and hypernym links."""

    def __init__(self, records: list[SynsetRecord], digest: str = ""):
        self.digest = digest
        self.synsets: dict[str, SynsetRecord] = {}
        self.lemma_index: dict[str, str] = {}
        for rec in records:
            if rec.id in self.synsets:
                raise SnapshotError(f"duplicate synset id {rec.id!r}")
            self.synsets[rec.id] = rec
            for lemma in rec.lemmas:
                # First-listed synset per lemma wins, preserving file order.
                self.lemma_index.setdefault(lemma, rec.id)
        for rec in self.synsets.values():
            for hid in rec.hypernym_ids:
                if hid not in self.synsets:
                    raise SnapshotError(
                        f"synset {rec.id!r} references unknown hypernym id {hid!r}"
                    )

    def __len__(self) -> int:
        return len(self.synsets)

    def lookup(self, query: str) -> Optional[SynsetRecord]:
        """Locate a synset: exact multi-word lemma first, then head noun."""
        norm = _normalize_query(query)
        if not norm:
            return None
        lemma = norm.replace(" ", "_")
        sid = self.lemma_index.get(lemma)
        if sid is None and " " in norm:
            sid = self.lemma_index.get(norm.split()[-1])
        return self.synsets[sid] if sid is not None else None

    def hypernym_path(self, record: SynsetRecord) -> list[SynsetRecord]:
        """Walk first-hypernym links up to a root; errors out on cycles."""
        path = [record]
        current = record
        while current.hypernym_ids:
            if len(path) >= MAX_HYPERNYM_HOPS:
                raise SnapshotError(
                    f"hypernym chain from {record.id!r} exceeds "
                    f"{MAX_HYPERNYM_HOPS} hops (cycle?)"
                )
            current = self.synsets[current.hypernym_ids[0]]
            path.append(current)
        return path


class Dictionary:
    """In-memory Wiktionary snapshot keyed by lowercase term."""

    def __init__(self, entries: list[DictionaryEntry], digest: str = ""):
        self.digest = digest
        self.entries: dict[str, DictionaryEntry] = {}
        for entry in entries:
            if entry.term in self.entries:
                raise SnapshotError(f"duplicate dictionary term {entry.term!r}")
            self.entries[entry.term] = entry

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, query: str) -> Optional[DictionaryEntry]:
        """Lookup chain: exact phrase -> leading determiner stripped -> head noun."""
        norm = _normalize_query(query)
        if not norm:
            return None
        candidates = [norm]
        words = norm.split()
        if len(words) > 1 and words[0] in DETERMINERS:
            candidates.append(" ".join(words[1:]))
        if len(words) > 1:
            candidates.append(words[-1])
        for cand in candidates:
            entry = self.entries.get(cand)
            if entry is not None:
                return entry
        return None


def load_wordnet_snapshot(path) -> WordNetGraph:
    """Load a WordNet JSONL snapshot, validating every row and all references."""
    path = Path(path)
    records = []
    for lineno, obj in _iter_jsonl(path):
        for key in ("id", "lemmas", "definition", "hypernym_ids"):
            if key not in obj:
                raise SnapshotError(f"{path}:{lineno}: missing field {key!r}")
        lemmas = obj["lemmas"]
        if not isinstance(lemmas, list) or not lemmas:
            raise SnapshotError(f"{path}:{lineno}: lemmas must be a non-empty list")
        records.append(
            SynsetRecord(
                id=str(obj["id"]),
                lemmas=tuple(str(l).lower() for l in lemmas),
                definition=str(obj["definition"]),
                hypernym_ids=tuple(str(h) for h in obj["hypernym_ids"]),
            )
        )
    return WordNetGraph(records, digest=_file_digest(path))


def load_wiktionary_snapshot(path) -> Dictionary:
    """Load a Wiktionary JSONL snapshot of {term, senses} rows."""
    path = Path(path)
    entries = []
    for lineno, obj in _iter_jsonl(path):
        for key in ("term", "senses"):
            if key not in obj:
                raise SnapshotError(f"{path}:{lineno}: missing field {key!r}")
        senses = obj["senses"]
        if not isinstance(senses, list) or not senses:
            raise SnapshotError(f"{path}:{lineno}: senses must be a non-empty list")
        entries.append(
            DictionaryEntry(
                term=str(obj["term"]).lower(),
                senses=tuple(str(s) for s in senses),
            )
        )
    return Dictionary(entries, digest=_file_digest(path))


def wn_hierarchy(graph: WordNetGraph, query: str) -> Optional[KnowledgeItem]:
    """Hypernym-path knowledge: first lemma of each synset from query to root."""
    record = graph.lookup(query)
    if record is None:
        return None
    names = [rec.lemmas[0] for rec in graph.hypernym_path(record)]
    return KnowledgeItem(query=query, source="wn_hier", text=", ".join(names))


def wn_definition(graph: WordNetGraph, query: str) -> Optional[KnowledgeItem]:
    """Gloss of the first synset located for the query."""
    record = graph.lookup(query)
    if record is None:
        return None
    return KnowledgeItem(query=query, source="wn_def", text=record.definition)


def wiki_definition(dictionary: Dictionary, query: str) -> Optional[KnowledgeItem]:
    """First sense of the dictionary entry found by the lookup chain."""
    entry = dictionary.lookup(query)
    if entry is None:
        return None
    return KnowledgeItem(query=query, source="wiki_def", text=entry.senses[0])


@dataclass
class KnowledgeStore:
    """Bundles the loaded snapshots and dispatches retrieval by source name."""

    wordnet: Optional[WordNetGraph] = None
    wiktionary: Optional[Dictionary] = None

    def retrieve(self, query: str, source: str) -> Optional[KnowledgeItem]:
        if source not in SOURCES:
            raise ValueError(f"unknown knowledge source {source!r}; expected one of {SOURCES}")
        if source in ("wn_hier", "wn_def"):
            if self.wordnet is None:
                return None
            fn = wn_hierarchy if source == "wn_hier" else wn_definition
            return fn(self.wordnet, query)
        if self.wiktionary is None:
            return None
        return wiki_definition(self.wiktionary, query)

    def provenance(self) -> dict[str, str]:
        digests = {}
        if self.wordnet is not None:
            digests["wordnet"] = self.wordnet.digest
        if self.wiktionary is not None:
            digests["wiktionary"] = self.wiktionary.digest
        return digests


def knowledge_coverage(queries: list[str], store: KnowledgeStore, source: str) -> float:
    """Fraction of queries with a non-empty retrieval from the given source."""
    if not queries:
        raise ValueError("knowledge_coverage requires at least one query")
    hits = sum(1 for q in queries if store.retrieve(q, source) is not None)
    return hits / len(queries)


@dataclass
class KnowledgeCache:
    """Memoizes (query, source) retrievals; a cached miss is stored as None.

    Lookups through the cache are indistinguishable from direct retrieval;
    the cache additionally distinguishes "known miss" from "never asked".
    """

    store: Optional[KnowledgeStore] = None
    provenance: dict[str, str] = field(default_factory=dict)
    _cache: dict[tuple[str, str], Optional[KnowledgeItem]] = field(default_factory=dict)

    def __post_init__(self):
        if self.store is not None and not self.provenance:
            self.provenance = self.store.provenance()

    def retrieve(self, query: str, source: str) -> Optional[KnowledgeItem]:
        key = (query, source)
        if key not in self._cache:
            if self.store is None:
                return None
            self._cache[key] = self.store.retrieve(query, source)
        return self._cache[key]

    def has_entry(self, query: str, source: str) -> bool:
        return (query, source) in self._cache

    def save(self, path) -> None:
        """Write the cache file: one digest header line, then one row per entry."""
        path = Path(path)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps({"snapshots": self.provenance}, sort_keys=True) + "\n")
            for (query, source), item in self._cache.items():
                row = {"query": query, "source": source, "text": None if item is None else item.text}
                handle.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, store: Optional[KnowledgeStore] = None) -> "KnowledgeCache":
        path = Path(path)
        rows = list(_iter_jsonl(path))
        if not rows or "snapshots" not in rows[0][1]:
            raise SnapshotError(f"{path}: missing snapshot digest header line")
        cache = cls(store=store, provenance=dict(rows[0][1]["snapshots"]))
        for lineno, obj in rows[1:]:
            for key in ("query", "source", "text"):
                if key not in obj:
                    raise SnapshotError(f"{path}:{lineno}: missing field {key!r}")
            text = obj["text"]
            item = None if text is None else KnowledgeItem(obj["query"], obj["source"], text)
            cache._cache[(obj["query"], obj["source"])] = item
        return cache

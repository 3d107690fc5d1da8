"""Entity catalog: entity texts, the inlink graph and surface-form priors.

A catalog lives in a directory holding three UTF-8 files::

    entities.jsonl   {"id", "title", "first_paragraph", "full_text",
                      "anchor_text", "anchor_context"} per line
    links.tsv        src_id <TAB> dst_id      (src links to dst)
    mentions.tsv     surface <TAB> entity_id <TAB> prior_count

and optionally ``kb.meta`` with ``total_pages=<int>`` overriding the page
count, which otherwise defaults to the number of entities.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

from nedstats.text import bag, normalize_surface, tokenize

TEXT_FIELDS = ("first_paragraph", "full_text", "anchor_text", "anchor_context")


class KBError(ValueError):
    """Raised for missing, malformed or inconsistent catalog data."""

    def __init__(self, message: str, path: Path | str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class Entity:
    id: int
    title: str
    first_paragraph: str = ""
    full_text: str = ""
    anchor_text: str = ""
    anchor_context: str = ""

    @cached_property
    def bags(self) -> dict[str, Counter]:
        """Lowercase token bags for each of the four text sources."""
        return {name: bag(tokenize(getattr(self, name))) for name in TEXT_FIELDS}


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable, cross-checked catalog.

    ``inlinks[e]`` is the set of entity ids linking to ``e`` and
    ``mentions[surface]`` lists ``(entity_id, prior_count)`` sorted by id.
    """

    entities: Mapping[int, Entity]
    inlinks: Mapping[int, frozenset]
    mentions: Mapping[str, tuple]
    total_pages: int
    _total_pages_override: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        for dst, srcs in self.inlinks.items():
            if dst not in self.entities:
                raise KBError(f"inlink target {dst} is not a catalog entity")
            for src in srcs:
                if src not in self.entities:
                    raise KBError(f"inlink source {src} is not a catalog entity")
            if len(srcs) > self.total_pages:
                raise KBError(
                    f"entity {dst} has {len(srcs)} inlinks, more than total_pages={self.total_pages}"
                )
        for surface, cands in self.mentions.items():
            if not cands:
                raise KBError(f"surface {surface!r} has no candidates")
            for eid, count in cands:
                if eid not in self.entities:
                    raise KBError(f"surface {surface!r} references unknown entity {eid}")
                if count < 0:
                    raise KBError(f"surface {surface!r} has negative prior count for {eid}")
            if sum(c for _, c in cands) == 0:
                raise KBError(f"surface {surface!r} has all-zero prior counts")
        if self.total_pages <= 0:
            raise KBError("total_pages must be positive")

    def entity(self, eid: int) -> Entity:
        try:
            return self.entities[eid]
        except KeyError:
            raise KeyError(f"unknown entity id {eid}") from None

    def inlinks_of(self, eid: int) -> frozenset:
        self.entity(eid)
        return self.inlinks.get(eid, frozenset())

    def candidates(self, surface: str) -> tuple[int, ...]:
        return tuple(eid for eid, _ in self.mentions.get(surface, ()))

    def surfaces_of(self, eid: int) -> list[tuple[str, int]]:
        """Surfaces that may denote ``eid`` with a positive count, sorted by surface."""
        out = []
        for surface in sorted(self.mentions):
            for cand, count in self.mentions[surface]:
                if cand == eid and count > 0:
                    out.append((surface, count))
        return out

    @cached_property
    def max_surface_tokens(self) -> int:
        return max((len(s.split()) for s in self.mentions), default=0)


def build_kb(
    entities,
    links=(),
    mentions=(),
    total_pages: int | None = None,
) -> KnowledgeBase:
    """Assemble a :class:`KnowledgeBase` from in-memory records.

    ``links`` is an iterable of ``(src, dst)`` and ``mentions`` of
    ``(surface, entity_id, prior_count)``.
    """
    by_id: dict[int, Entity] = {}
    for ent in entities:
        if ent.id in by_id:
            raise KBError(f"duplicate entity id {ent.id}")
        by_id[ent.id] = ent
    inl: dict[int, set] = {}
    for src, dst in links:
        for eid in (src, dst):
            if eid not in by_id:
                raise KBError(f"link references unknown entity {eid}")
        inl.setdefault(dst, set()).add(src)
    table: dict[str, dict[int, int]] = {}
    for surface, eid, count in mentions:
        key = normalize_surface(surface)
        if not key:
            raise KBError(f"surface {surface!r} has no tokens")
        if eid not in by_id:
            raise KBError(f"surface {surface!r} references unknown entity {eid}")
        row = table.setdefault(key, {})
        if eid in row:
            raise KBError(f"duplicate mention entry ({key!r}, {eid})")
        row[eid] = count
    override = total_pages is not None
    return KnowledgeBase(
        entities=dict(sorted(by_id.items())),
        inlinks={k: frozenset(v) for k, v in sorted(inl.items())},
        mentions={s: tuple(sorted(row.items())) for s, row in sorted(table.items())},
        total_pages=total_pages if override else len(by_id),
        _total_pages_override=override,
    )


def _parse_int(text: str, what: str, path: Path, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise KBError(f"{what} {text!r} is not an integer", path, lineno) from None


def load_kb(path: str | Path) -> KnowledgeBase:
    """Read and cross-check a catalog directory."""
    root = Path(path)
    files = {name: root / name for name in ("entities.jsonl", "links.tsv", "mentions.tsv")}
    for f in files.values():
        if not f.is_file():
            raise KBError("missing catalog file", f)

    entities = []
    seen: set[int] = set()
    with open(files["entities.jsonl"], encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KBError(f"invalid JSON ({exc.msg})", files["entities.jsonl"], lineno) from None
            if not isinstance(rec, dict) or "id" not in rec or "title" not in rec:
                raise KBError("record needs 'id' and 'title'", files["entities.jsonl"], lineno)
            if not isinstance(rec["id"], int) or isinstance(rec["id"], bool):
                raise KBError(f"id {rec['id']!r} is not an integer", files["entities.jsonl"], lineno)
            if rec["id"] in seen:
                raise KBError(f"duplicate entity id {rec['id']}", files["entities.jsonl"], lineno)
            seen.add(rec["id"])
            texts = {}
            for name in TEXT_FIELDS:
                value = rec.get(name, "")
                if not isinstance(value, str):
                    raise KBError(f"field {name!r} must be a string", files["entities.jsonl"], lineno)
                texts[name] = value
            entities.append(Entity(id=rec["id"], title=str(rec["title"]), **texts))

    links = []
    with open(files["links.tsv"], encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise KBError("expected 'src_id<TAB>dst_id'", files["links.tsv"], lineno)
            src = _parse_int(parts[0], "src_id", files["links.tsv"], lineno)
            dst = _parse_int(parts[1], "dst_id", files["links.tsv"], lineno)
            for eid in (src, dst):
                if eid not in seen:
                    raise KBError(f"dangling entity reference {eid}", files["links.tsv"], lineno)
            links.append((src, dst))

    mentions = []
    seen_pairs: set = set()
    with open(files["mentions.tsv"], encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise KBError("expected 'surface<TAB>entity_id<TAB>prior_count'", files["mentions.tsv"], lineno)
            eid = _parse_int(parts[1], "entity_id", files["mentions.tsv"], lineno)
            count = _parse_int(parts[2], "prior_count", files["mentions.tsv"], lineno)
            if eid not in seen:
                raise KBError(f"dangling entity reference {eid}", files["mentions.tsv"], lineno)
            if count < 0:
                raise KBError("prior_count must be nonnegative", files["mentions.tsv"], lineno)
            key = (normalize_surface(parts[0]), eid)
            if not key[0]:
                raise KBError("surface has no tokens", files["mentions.tsv"], lineno)
            if key in seen_pairs:
                raise KBError(f"duplicate mention entry {key}", files["mentions.tsv"], lineno)
            seen_pairs.add(key)
            mentions.append((parts[0], eid, count))

    total_pages = None
    meta = root / "kb.meta"
    if meta.is_file():
        with open(meta, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise KBError("expected key=value", meta, lineno)
                if key.strip() == "total_pages":
                    total_pages = _parse_int(value.strip(), "total_pages", meta, lineno)
                else:
                    raise KBError(f"unknown meta key {key.strip()!r}", meta, lineno)

    return build_kb(entities, links, mentions, total_pages)


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    """Write ``kb`` in the directory layout read by :func:`load_kb`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "entities.jsonl", "w", encoding="utf-8") as fh:
        for ent in kb.entities.values():
            rec = {"id": ent.id, "title": ent.title}
            rec.update({name: getattr(ent, name) for name in TEXT_FIELDS})
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=False) + "\n")
    with open(root / "links.tsv", "w", encoding="utf-8") as fh:
        for dst, srcs in kb.inlinks.items():
            for src in sorted(srcs):
                fh.write(f"{src}\t{dst}\n")
    with open(root / "mentions.tsv", "w", encoding="utf-8") as fh:
        for surface, cands in kb.mentions.items():
            for eid, count in cands:
                fh.write(f"{surface}\t{eid}\t{count}\n")
    meta = root / "kb.meta"
    if kb._total_pages_override:
        meta.write_text(f"total_pages={kb.total_pages}\n", encoding="utf-8")
    elif meta.exists():
        meta.unlink()


def relatedness(kb: KnowledgeBase, a: int, b: int) -> float | None:
    """Inlink-overlap relatedness of two entities.

    Computes ``(log|A∩B| - log max(|A|,|B|)) / (log c - log min(|A|,|B|))``
    for inlink sets A, B and page count c. The value is <= 0 and does not
    depend on the logarithm base. Returns ``None`` (undefined) when either
    inlink set or the intersection is empty, or when the denominator is 0.
    """
    ga, gb = kb.inlinks_of(a), kb.inlinks_of(b)
    if not ga or not gb:
        return None
    common = len(ga & gb)
    if common == 0:
        return None
    lo, hi = sorted((len(ga), len(gb)))
    denom = math.log(kb.total_pages) - math.log(lo)
    if denom == 0.0:
        return None
    return (math.log(common) - math.log(hi)) / denom


def coherence(kb: KnowledgeBase, a: int, b: int) -> float:
    """Relatedness shifted into [0, 1]; undefined relatedness maps to 0."""
    r = relatedness(kb, a, b)
    if r is None:
        return 0.0
    return min(1.0, max(0.0, 1.0 + r))


def mention_prior(kb: KnowledgeBase, surface: str, e: int) -> float:
    """Fraction of the links with text ``surface`` that point to ``e``."""
    key = normalize_surface(surface)
    try:
        cands = kb.mentions[key]
    except KeyError:
        raise KeyError(f"unknown surface {surface!r}") from None
    total = sum(c for _, c in cands)
    for eid, count in cands:
        if eid == e:
            return count / total
    return 0.0

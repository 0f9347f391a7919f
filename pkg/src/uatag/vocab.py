"""Marker-tag vocabulary and mutual-exclusion groups.

The vocabulary is read from a ``tags.csv`` file with header ``tag,kind,group``.
Tags sharing a non-empty ``group`` value are mutually exclusive: a point may
carry one of them or none, never two.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import VocabularyError

TAG_PATTERN = re.compile(r"^[a-z][a-zA-Z0-9]*$")
GROUP_PATTERN = re.compile(r"^[A-Za-z0-9_\-]+$")
HEADER = ["tag", "kind", "group"]


@dataclass(frozen=True)
class Tag:
    name: str
    kind: str = "marker"


@dataclass(frozen=True)
class ExclusionGroup:
    id: str
    members: frozenset[str]


@dataclass(frozen=True)
class TagVocabulary:
    """Immutable, validated tag universe.

    ``names`` is the canonical (sorted) tag order used for every per-tag
    vector in the package: forest leaves, ESC classifiers, reports.
    """

    tags: tuple[Tag, ...]
    groups: tuple[ExclusionGroup, ...]
    fingerprint: str = field(default="")
    _group_of: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.tags]

    def __len__(self) -> int:
        return len(self.tags)

    def __contains__(self, name: object) -> bool:
        return name in self._group_of

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise VocabularyError("unknown_tag", f"tag {name!r} is not in the vocabulary") from None


def build_vocabulary(tags: Iterable[Tag], groups: Iterable[ExclusionGroup]) -> TagVocabulary:
    """Validate and canonicalize tags and groups into a vocabulary."""
    tags = sorted(tags, key=lambda t: t.name)
    names = [t.name for t in tags]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise VocabularyError("duplicate_tag", f"duplicate tag(s): {', '.join(dup)}")
    for t in tags:
        _check_tag(t.name, t.kind)
    group_of: dict[str, ExclusionGroup | None] = {n: None for n in names}
    canon_groups = []
    for g in sorted(groups, key=lambda g: g.id):
        if len(g.members) < 2:
            raise VocabularyError("singleton_group", f"group {g.id!r} needs at least two members")
        for m in g.members:
            if m not in group_of:
                raise VocabularyError("unknown_tag", f"group {g.id!r} references unknown tag {m!r}")
            if group_of[m] is not None:
                raise VocabularyError(
                    "tag_in_two_groups", f"tag {m!r} is in groups {group_of[m].id!r} and {g.id!r}"
                )
            group_of[m] = g
        canon_groups.append(g)
    vocab = TagVocabulary(tuple(tags), tuple(canon_groups), "", group_of)
    object.__setattr__(vocab, "fingerprint", hashlib.sha256(dump_vocabulary(vocab).encode()).hexdigest())
    return vocab


def _check_tag(name: str, kind: str, line: int | None = None) -> None:
    if not name:
        raise VocabularyError("malformed_row", "empty tag name", line)
    if not TAG_PATTERN.match(name):
        raise VocabularyError("malformed_row", f"invalid tag name {name!r}", line)
    if kind != "marker":
        raise VocabularyError("malformed_row", f"tag {name!r}: only kind 'marker' is supported, got {kind!r}", line)


def parse_vocabulary(text: str) -> TagVocabulary:
    """Parse tags.csv content. Errors carry the 1-based file line number."""
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        rows.append((lineno, next(csv.reader([raw]))))
    if not rows:
        raise VocabularyError("malformed_row", "missing header `tag,kind,group`")
    header_line, header = rows[0]
    if [h.strip() for h in header] != HEADER:
        raise VocabularyError("malformed_row", f"expected header {','.join(HEADER)}", header_line)

    seen: dict[str, int] = {}
    tags: list[Tag] = []
    members: dict[str, list[str]] = {}
    first_group_line: dict[str, int] = {}
    for lineno, cells in rows[1:]:
        if len(cells) != 3:
            raise VocabularyError("malformed_row", f"expected 3 columns, got {len(cells)}", lineno)
        name, kind, group = (c.strip() for c in cells)
        _check_tag(name, kind, lineno)
        if name in seen:
            raise VocabularyError(
                "duplicate_tag", f"tag {name!r} already defined on line {seen[name]}", lineno
            )
        seen[name] = lineno
        tags.append(Tag(name, kind))
        if group:
            if not GROUP_PATTERN.match(group):
                raise VocabularyError("malformed_row", f"invalid group id {group!r}", lineno)
            members.setdefault(group, []).append(name)
            first_group_line.setdefault(group, lineno)

    for gid, mem in members.items():
        if len(mem) < 2:
            raise VocabularyError(
                "singleton_group", f"group {gid!r} has a single member {mem[0]!r}", first_group_line[gid]
            )
    groups = [ExclusionGroup(gid, frozenset(mem)) for gid, mem in members.items()]
    return build_vocabulary(tags, groups)


def load_vocabulary(path: str | Path | None = None) -> TagVocabulary:
    """Load a tags.csv file; ``None`` loads the packaged default vocabulary."""
    if path is None:
        text = resources.files("uatag").joinpath("data/tags.csv").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise VocabularyError("io", f"cannot read {path}: {exc}") from exc
    return parse_vocabulary(text)


def dump_vocabulary(vocab: TagVocabulary) -> str:
    """Canonical tags.csv text (sorted tags, ``\\n`` line endings)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for t in vocab.tags:
        g = vocab._group_of.get(t.name)
        w.writerow([t.name, t.kind, g.id if g is not None else ""])
    return buf.getvalue()


def exclusion_group_of(vocab: TagVocabulary, tag: str) -> ExclusionGroup | None:
    if tag not in vocab:
        raise VocabularyError("unknown_tag", f"tag {tag!r} is not in the vocabulary")
    return vocab._group_of[tag]


def violates_exclusion(vocab: TagVocabulary, tagset: Iterable[str]) -> list[tuple[str, frozenset[str]]]:
    """Return ``(group id, offending tags)`` for each group hit twice or more."""
    hits: dict[str, set[str]] = {}
    for tag in tagset:
        g = exclusion_group_of(vocab, tag)
        if g is not None:
            hits.setdefault(g.id, set()).add(tag)
    return [(gid, frozenset(m)) for gid, m in sorted(hits.items()) if len(m) >= 2]


def group_index(vocab: TagVocabulary) -> list[list[int]]:
    """Tag indices per exclusion group, with singletons for ungrouped tags."""
    names = vocab.names
    out: list[list[int]] = [[names.index(m) for m in sorted(g.members)] for g in vocab.groups]
    grouped = {i for g in out for i in g}
    out.extend([i] for i in range(len(names)) if i not in grouped)
    return out

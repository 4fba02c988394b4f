"""View pairing files (``pair.txt``).

First token: number of views.  Then, per view, the reference view id
followed by a count ``N`` and ``N`` pairs of ``source_id score``.  The
parser is token-based, so line breaks are free-form as in the files
found in the wild.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FormatError


@dataclass
class ViewGraph:
    """Per-reference ordered source views with matching scores."""

    num_views: int
    neighbors: list[list[tuple[int, float]]] = field(default_factory=list)

    def __post_init__(self):
        if self.num_views < 1:
            raise ValueError("num_views must be positive")
        if len(self.neighbors) != self.num_views:
            raise ValueError("need one neighbor list per view")
        for ref, lst in enumerate(self.neighbors):
            for src, _score in lst:
                if not 0 <= src < self.num_views:
                    raise ValueError(f"source id {src} out of range")
                if src == ref:
                    raise ValueError(f"view {ref} paired with itself")


class _Tokens:
    def __init__(self, text: str):
        self.items = text.split()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.items):
            raise FormatError(f"unexpected end of file, expected {what}")
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"expected integer {what}, found {tok!r}") from None

    def next_float(self, what: str) -> float:
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise FormatError(f"expected number {what}, found {tok!r}") from None


def parse_pairs(data: bytes | str) -> ViewGraph:
    """Parse pair.txt bytes into a validated :class:`ViewGraph`."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"not valid utf-8: {exc}") from None
    else:
        text = data
    toks = _Tokens(text)
    num = toks.next_int("view count")
    if num < 1 or num > 1_000_000:
        raise FormatError(f"implausible view count {num}")
    neighbors: list[list[tuple[int, float]] | None] = [None] * num
    for _ in range(num):
        ref = toks.next_int("reference view id")
        if not 0 <= ref < num:
            raise FormatError(f"reference id {ref} out of range for {num} views")
        if neighbors[ref] is not None:
            raise FormatError(f"duplicate entry for view {ref}")
        count = toks.next_int(f"pair count of view {ref}")
        if count < 0 or count >= num:
            raise FormatError(f"view {ref} declares {count} pairs, out of range")
        lst = []
        for _ in range(count):
            src = toks.next_int(f"source id for view {ref}")
            score = toks.next_float(f"score for view {ref}")
            if not 0 <= src < num:
                raise FormatError(f"source id {src} out of range for {num} views")
            if src == ref:
                raise FormatError(f"view {ref} paired with itself")
            lst.append((src, score))
        neighbors[ref] = lst
    if toks.pos != len(toks.items):
        raise FormatError(f"unexpected trailing token {toks.items[toks.pos]!r}")
    return ViewGraph(num, [lst if lst is not None else [] for lst in neighbors])


def serialize_pairs(graph: ViewGraph) -> bytes:
    out = [str(graph.num_views)]
    for ref, lst in enumerate(graph.neighbors):
        out.append(str(ref))
        parts = [str(len(lst))]
        for src, score in lst:
            parts.append(str(src))
            parts.append(f"{score:.17g}")
        out.append(" ".join(parts))
    out.append("")
    return "\n".join(out).encode("utf-8")

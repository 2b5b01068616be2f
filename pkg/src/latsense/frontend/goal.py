"""Reader and writer for the GOAL-style textual schedule format.

Example::

    num_ranks 2
    rank 0 {
      l1: calc 1000;
      l2: send 4b to 1 tag 0;
      l2 requires l1;
    }
    rank 1 { r1: recv 4b from 0 tag 0; }

Statements end at ``;`` or a newline; ``#`` and ``//`` start comments.  The
``num_ranks`` header is optional, in which case the rank count is inferred
from the rank blocks and message peers.
"""

from __future__ import annotations

import re

from ..errors import ParseError, ScheduleError
from .program import Calc, Recv, ScheduleOp, ScheduleProgram, Send

_TOKEN = re.compile(r"(#|//)[^\n]*|([{};:\n])|([^\s{};:#]+)|[ \t\r]+")
_SIZE = re.compile(r"^(\d+)b?$")


def _tokens(text: str):
    line = 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line)
        pos = m.end()
        if m.group(2):
            tok = m.group(2)
            yield (";" if tok == "\n" else tok), line
            if tok == "\n":
                line += 1
        elif m.group(3):
            yield m.group(3), line


class _Stream:
    def __init__(self, text: str):
        self.toks = list(_tokens(text))
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, self.last_line)

    @property
    def last_line(self) -> int:
        return self.toks[-1][1] if self.toks else 1

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def skip_separators(self):
        while self.peek()[0] == ";":
            self.i += 1

    def expect(self, want: str):
        tok, line = self.next()
        if tok != want:
            raise ParseError(f"expected {want!r}, got {tok!r}", line)
        return line

    def integer(self, what: str) -> int:
        tok, line = self.next()
        try:
            value = int(tok)
        except (TypeError, ValueError):
            raise ParseError(f"expected integer {what}, got {tok!r}", line) from None
        if value < 0:
            raise ParseError(f"{what} must be nonnegative", line)
        return value

    def size(self) -> int:
        tok, line = self.next()
        m = _SIZE.match(tok or "")
        if not m:
            raise ParseError(f"expected message size like '4b', got {tok!r}", line)
        return int(m.group(1))


def parse_goal(text: str) -> ScheduleProgram:
    """Parse schedule text into a validated ScheduleProgram."""
    s = _Stream(text)
    s.skip_separators()
    declared = None
    if s.peek()[0] == "num_ranks":
        s.next()
        declared = s.integer("num_ranks")
    blocks: dict[int, list[ScheduleOp]] = {}
    max_rank = -1
    while True:
        s.skip_separators()
        tok, line = s.peek()
        if tok is None:
            break
        if tok != "rank":
            raise ParseError(f"expected 'rank', got {tok!r}", line)
        s.next()
        rank = s.integer("rank index")
        if declared is not None and rank >= declared:
            raise ParseError(f"rank {rank} not below declared num_ranks {declared}", line)
        if rank in blocks:
            raise ParseError(f"rank {rank} defined twice", line)
        ops = _parse_block(s, rank)
        blocks[rank] = ops
        max_rank = max(max_rank, rank)
        for op in ops:
            peer = getattr(op.kind, "dest", getattr(op.kind, "src", -1))
            max_rank = max(max_rank, peer)
    num_ranks = declared if declared is not None else max_rank + 1
    program = ScheduleProgram(
        num_ranks, tuple(tuple(blocks.get(r, ())) for r in range(num_ranks)))
    program.check()
    return program


def _parse_block(s: _Stream, rank: int) -> list[ScheduleOp]:
    s.skip_separators()
    s.expect("{")
    kinds: dict[str, object] = {}
    order: list[str] = []
    deps: dict[str, list[str]] = {}
    dep_lines: list[tuple[str, str, int]] = []
    while True:
        s.skip_separators()
        tok, line = s.next()
        if tok is None:
            raise ParseError(f"unterminated block for rank {rank}", line)
        if tok == "}":
            break
        nxt, _ = s.peek()
        if nxt == ":":
            s.next()
            if tok in kinds:
                raise ScheduleError(f"rank {rank}: duplicate label {tok!r} (line {line})")
            kinds[tok] = _parse_kind(s)
            order.append(tok)
            deps.setdefault(tok, [])
        elif nxt == "requires":
            s.next()
            target, tline = s.next()
            if target in (None, ";", "}", "{", ":"):
                raise ParseError("expected label after 'requires'", tline)
            dep_lines.append((tok, target, line))
        else:
            raise ParseError(f"expected ':' or 'requires' after {tok!r}", line)
        end, eline = s.peek()
        if end not in (";", "}"):
            raise ParseError(f"unexpected token {end!r}", eline)
    for label, target, line in dep_lines:
        if label not in kinds:
            raise ScheduleError(f"rank {rank}: undefined label {label!r} (line {line})")
        if target not in kinds:
            raise ScheduleError(
                f"rank {rank}: {label!r} requires undefined label {target!r} (line {line})")
        if target not in deps[label]:
            deps[label].append(target)
    return [ScheduleOp(lbl, kinds[lbl], tuple(deps[lbl])) for lbl in order]


def _parse_kind(s: _Stream):
    tok, line = s.next()
    if tok == "calc":
        return Calc(s.integer("calc cost"))
    if tok in ("send", "recv"):
        size = s.size()
        s.expect("to" if tok == "send" else "from")
        peer = s.integer("peer rank")
        tag = 0
        if s.peek()[0] == "tag":
            s.next()
            tag = s.integer("tag")
        return Send(size, peer, tag) if tok == "send" else Recv(size, peer, tag)
    raise ParseError(f"unknown operation {tok!r}", line)


def serialize_goal(program: ScheduleProgram) -> str:
    """Canonical text form; ``parse_goal(serialize_goal(p)) == p``."""
    out = [f"num_ranks {program.num_ranks}"]
    for rank, ops in enumerate(program.ranks):
        if not ops:
            continue
        out.append(f"rank {rank} {{")
        for op in ops:
            out.append(f"{op.label}: {_format_kind(op.kind)};")
        for op in ops:
            for dep in op.requires:
                out.append(f"{op.label} requires {dep};")
        out.append("}")
    return "\n".join(out) + "\n"


def _format_kind(kind) -> str:
    if isinstance(kind, Calc):
        return f"calc {kind.cost}"
    if isinstance(kind, Send):
        return f"send {kind.size}b to {kind.dest} tag {kind.tag}"
    return f"recv {kind.size}b from {kind.src} tag {kind.tag}"

"""Grammar-driven mimic text: payload bits choose among grammar alternatives.

Grammar files are UTF-8::

    # comment
    mail:
    | <greeting> Thank-you for your interest !
    greeting:
    | Dear Friend ;
    | Dear Cybercitizen ,

The first production is the start symbol. ``<name>`` refers to a
production; every other whitespace-separated token is literal text.

Encoding derives the start symbol repeatedly until the frame bits run out.
At a production with m alternatives the next bits select one through an
equal-weight canonical prefix code (alternative 0 is all zeros), and once
the bits are gone the encoder keeps reading zeros until the current
derivation closes. Decoding is an LL(1) parse that replays those choices.
"""

from __future__ import annotations

import re
import textwrap
from dataclasses import dataclass, field
from importlib import resources

from .errors import FormatError, UsageError
from .payload import BitStream, frame_payload, parse_frame, read_frame

_REF = re.compile(r"^<([A-Za-z_][A-Za-z0-9_-]*)>$")
_NAME_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_-]*):$")


class GrammarSyntaxError(FormatError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class MimicParseError(FormatError):
    def __init__(self, index: int, token: str | None, message: str):
        self.index = index
        self.token = token
        super().__init__(f"token {index} ({token!r}): {message}")


@dataclass(frozen=True)
class Ref:
    name: str

    def __str__(self):
        return f"<{self.name}>"


def prefix_code(m: int) -> list[str]:
    """Canonical codewords for m equally likely alternatives.

    Lengths are what Huffman gives equal weights (floor(log2 m) or one
    more); the shorter codewords go to the earlier alternatives.
    """
    if m < 1:
        raise ValueError("need at least one alternative")
    short_len = m.bit_length() - 1
    n_long = 2 * (m - (1 << short_len))
    n_short = m - n_long
    codes = [format(i, f"0{short_len}b") if short_len else "" for i in range(n_short)]
    codes += [format(2 * n_short + i, f"0{short_len + 1}b") for i in range(n_long)]
    return codes


@dataclass
class Violation:
    kind: str
    production: str | None
    alternative: int | None
    message: str

    def __str__(self):
        where = self.production or "<grammar>"
        if self.alternative is not None:
            where += f"[{self.alternative}]"
        return f"{self.kind}: {where}: {self.message}"


@dataclass
class GrammarReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class MimicGrammar:
    productions: dict  # name -> list of alternatives (tuples of str | Ref)
    start: str

    def __post_init__(self):
        self._first = None
        self._table = None

    # -- analysis ---------------------------------------------------------

    def first_sets(self) -> dict:
        if self._first is None:
            first = {name: set() for name in self.productions}
            changed = True
            while changed:
                changed = False
                for name, alts in self.productions.items():
                    for alt in alts:
                        new = self._first_of(alt, first)
                        if not new <= first[name]:
                            first[name] |= new
                            changed = True
            self._first = first
        return self._first

    def _first_of(self, alt, first) -> set:
        head = alt[0]
        if isinstance(head, Ref):
            return set(first.get(head.name, ()))
        return {head}

    def parse_table(self) -> dict:
        """``{(production, token): alternative index}``."""
        if self._table is None:
            first = self.first_sets()
            table = {}
            for name, alts in self.productions.items():
                for i, alt in enumerate(alts):
                    for tok in self._first_of(alt, first):
                        table.setdefault((name, tok), i)
            self._table = table
        return self._table

    def codes(self, name: str) -> list[str]:
        return prefix_code(len(self.productions[name]))

    # -- encode / decode --------------------------------------------------

    def derive(self, bits: BitStream) -> list[str]:
        """One derivation of the start symbol, choices read from ``bits``."""
        out = []
        stack = [Ref(self.start)]
        while stack:
            sym = stack.pop()
            if not isinstance(sym, Ref):
                out.append(sym)
                continue
            alts = self.productions[sym.name]
            idx = _read_choice(bits, len(alts))
            stack.extend(reversed(alts[idx]))
        return out

    def parse(self, tokens: list[str], pos: int) -> tuple[int, list[int]]:
        """LL(1) parse of one start-symbol derivation from ``tokens[pos:]``.

        Returns the position after it and the choice bits it encodes.
        """
        table = self.parse_table()
        bits: list[int] = []
        stack = [Ref(self.start)]
        while stack:
            sym = stack.pop()
            if pos >= len(tokens):
                raise MimicParseError(pos, None, f"text ends while expecting {sym}")
            tok = tokens[pos]
            if isinstance(sym, Ref):
                alts = self.productions[sym.name]
                idx = table.get((sym.name, tok))
                if idx is None:
                    raise MimicParseError(pos, tok, f"not derivable from {sym}")
                bits.extend(int(b) for b in prefix_code(len(alts))[idx])
                stack.extend(reversed(alts[idx]))
            else:
                if tok != sym:
                    raise MimicParseError(pos, tok, f"expected {sym!r}")
                pos += 1
        return pos, bits


def _read_choice(bits: BitStream, m: int) -> int:
    short_len = m.bit_length() - 1
    n_short = m - 2 * (m - (1 << short_len))
    value = 0
    for b in bits.read(short_len):
        value = (value << 1) | b
    if value < n_short:
        return value
    value = (value << 1) | bits.read(1)[0]
    return n_short + value - 2 * n_short


# -- loading and validation ---------------------------------------------------

def parse_grammar_text(text: str) -> MimicGrammar:
    """Parse grammar syntax; raises :class:`GrammarSyntaxError`."""
    productions: dict = {}
    current = None
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("|"):
            if current is None:
                raise GrammarSyntaxError(lineno, "alternative outside a production")
            tokens = line[1:].split()
            if not tokens:
                raise GrammarSyntaxError(lineno, "empty alternative")
            alt = tuple(Ref(m.group(1)) if (m := _REF.match(t)) else t for t in tokens)
            productions[current].append(alt)
            continue
        m = _NAME_LINE.match(line)
        if not m:
            raise GrammarSyntaxError(lineno, f"expected 'name:' or '| ...', got {line!r}")
        current = m.group(1)
        if current in productions:
            raise GrammarSyntaxError(
                lineno, f"duplicate production {current!r} (first at line {lines[current]})")
        productions[current] = []
        lines[current] = lineno
    if not productions:
        raise GrammarSyntaxError(1, "grammar is empty")
    for name, alts in productions.items():
        if not alts:
            raise GrammarSyntaxError(lines[name], f"production {name!r} has no alternatives")
    return MimicGrammar(productions, next(iter(productions)))


def validate_grammar(g: MimicGrammar) -> GrammarReport:
    report = GrammarReport()
    bad = report.violations
    prods = g.productions

    undefined = False
    for name, alts in prods.items():
        for i, alt in enumerate(alts):
            for sym in alt:
                if isinstance(sym, Ref) and sym.name not in prods:
                    bad.append(Violation("undefined", name, i,
                                         f"reference to undefined production {sym}"))
                    undefined = True
    if undefined:
        return report

    # left recursion: cycles through leading nonterminals
    lead = {name: {alt[0].name for alt in alts if isinstance(alt[0], Ref)}
            for name, alts in prods.items()}
    for name in prods:
        if _reaches(lead, name, name):
            bad.append(Violation("left-recursion", name, None,
                                 "production can derive itself without consuming a token"))

    first = g.first_sets()
    for name, alts in prods.items():
        seen: dict = {}
        for i, alt in enumerate(alts):
            for tok in sorted(g._first_of(alt, first)):
                if tok in seen:
                    bad.append(Violation(
                        "ll1-conflict", name, i,
                        f"alternatives {seen[tok]} and {i} can both start with {tok!r}"))
                else:
                    seen[tok] = i

    # padding picks alternative 0 everywhere; that derivation must close
    zero = {name: {s.name for s in alts[0] if isinstance(s, Ref)} for name, alts in prods.items()}
    for name in prods:
        if _reaches(zero, name, name):
            bad.append(Violation("non-terminating", name, 0,
                                 "always choosing alternative 0 never terminates"))

    if not _always_chooses(prods, g.start):
        bad.append(Violation("no-choice", g.start, None,
                             "a derivation of the start symbol can carry no bits"))

    reachable = {g.start}
    todo = [g.start]
    while todo:
        for alt in prods[todo.pop()]:
            for s in alt:
                if isinstance(s, Ref) and s.name not in reachable:
                    reachable.add(s.name)
                    todo.append(s.name)
    for name in prods:
        if name not in reachable:
            report.warnings.append(Violation("unreachable", name, None,
                                             "not reachable from the start symbol"))
    return report


def _reaches(graph: dict, src: str, target: str) -> bool:
    seen = set()
    todo = list(graph.get(src, ()))
    while todo:
        n = todo.pop()
        if n == target:
            return True
        if n not in seen:
            seen.add(n)
            todo.extend(graph.get(n, ()))
    return False


def _always_chooses(prods: dict, start: str) -> bool:
    """Does every derivation of ``start`` pass a production with >= 2 alternatives?"""
    yes: set = set()
    changed = True
    while changed:
        changed = False
        for name, alts in prods.items():
            if name in yes:
                continue
            if len(alts) >= 2 or any(isinstance(s, Ref) and s.name in yes for s in alts[0]):
                yes.add(name)
                changed = True
    return start in yes


def load_grammar(data: bytes | str) -> MimicGrammar:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GrammarSyntaxError(1, f"not UTF-8: {exc}") from None
    g = parse_grammar_text(data)
    report = validate_grammar(g)
    if not report.ok:
        raise FormatError("invalid grammar:\n  " + "\n  ".join(map(str, report.violations)))
    return g


def default_grammar() -> MimicGrammar:
    return load_grammar(resources.files("stegkit").joinpath("data/spam.grammar").read_bytes())


# -- public operations --------------------------------------------------------

def encode_bits(data: bytes, g: MimicGrammar) -> list[list[str]]:
    """Token lists, one per start-symbol derivation, carrying ``data``."""
    bits = BitStream(data)
    messages = [g.derive(bits)]
    while not bits.exhausted:
        before = bits.cursor
        messages.append(g.derive(bits))
        if bits.cursor == before:
            raise UsageError("grammar derivation consumed no bits")
    return messages


def render(messages: list[list[str]], width: int = 72) -> str:
    return "\n\n".join(
        textwrap.fill(" ".join(m), width=width, break_long_words=False, break_on_hyphens=False)
        for m in messages) + "\n"


def mimic_encode(frame: bytes, g: MimicGrammar, width: int = 72) -> str:
    report = validate_grammar(g)
    if not report.ok:
        raise UsageError("cannot encode with an invalid grammar: " + str(report.violations[0]))
    return render(encode_bits(frame, g), width)


def decode_bits(text: str, g: MimicGrammar) -> list[int]:
    tokens = text.split()
    if not tokens:
        raise MimicParseError(0, None, "empty text")
    pos, bits = 0, []
    while pos < len(tokens):
        pos, chunk = g.parse(tokens, pos)
        bits.extend(chunk)
    return bits


def mimic_decode(text: str, g: MimicGrammar, passphrase: str | None = None) -> tuple[bytes, str]:
    bits = decode_bits(text, g)
    data = bytes(int("".join(map(str, bits[i:i + 8])), 2) for i in range(0, len(bits) - 7, 8))
    pos = 0

    def read(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("stego text ends before the hidden frame is complete")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    return parse_frame(read_frame(read), passphrase)


def is_member(text: str, g: MimicGrammar) -> bool:
    """True when ``text`` is a sequence of complete start-symbol derivations."""
    try:
        decode_bits(text, g)
    except FormatError:
        return False
    return True


def hide_text(body: bytes, g: MimicGrammar, name: str = "",
              passphrase: str | None = None) -> str:
    return mimic_encode(frame_payload(body, name, passphrase), g)

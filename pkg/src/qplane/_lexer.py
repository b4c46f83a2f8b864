"""Tiny shared tokenizer for the expression languages (generators and functions)."""

import re
from dataclasses import dataclass

__all__ = ["Token", "ParseError", "tokenize"]


class ParseError(ValueError):
    """Syntax error in an expression string; ``pos`` is a 0-based character offset."""

    def __init__(self, message, pos):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    pos: int


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*#?)"
    r"|(?P<op>[-+*/^(),#−]))"
)


def tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        if value == "−":
            value = "-"
        tokens.append(Token(kind, value, start))
        pos = m.end()
    tokens.append(Token("end", "", n))
    return tokens


class TokenStream:
    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def accept(self, text):
        if self.peek.kind == "op" and self.peek.text == text:
            return self.next()
        return None

    def expect(self, text):
        tok = self.accept(text)
        if tok is None:
            raise ParseError(f"expected {text!r}, found {self.peek.text or 'end of input'!r}", self.peek.pos)
        return tok

    def expect_end(self):
        if self.peek.kind != "end":
            raise ParseError(f"unexpected token {self.peek.text!r}", self.peek.pos)

    def read_int(self):
        sign = -1 if self.accept("-") else 1
        tok = self.next()
        if tok.kind != "num" or not tok.text.isdigit():
            raise ParseError("expected integer", tok.pos)
        return sign * int(tok.text)

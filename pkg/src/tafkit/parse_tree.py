"""Decoupled intent/slot trees in bracketed form.

A parse looks like ``[IN:CREATE_ALARM [SL:DATE_TIME 8 am ] ]``: the root is an
intent, an intent holds an ordered list of slots, and a slot holds either a
token span, a nested intent, or nothing at all (the signature form).
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

INTENT_PREFIX = "IN:"
SLOT_PREFIX = "SL:"

_LABEL_RE = re.compile(r"[A-Z0-9_.#]+")
_WS_RE = re.compile(r"\s+")


class MalformedParse(ValueError):
    """Raised when a bracketed string does not follow the parse grammar.

    ``pos`` is the character index of the problem, ``offset`` the matching
    UTF-8 byte offset.
    """

    def __init__(self, message: str, text: str = "", pos: int = 0):
        self.pos = pos
        self.offset = len(text[:pos].encode("utf-8"))
        self.text = text
        super().__init__(f"{message} (byte offset {self.offset})")


def _check_label(label: str) -> None:
    if not _LABEL_RE.fullmatch(label):
        raise ValueError(f"invalid label {label!r}")


def _check_token(token: str) -> None:
    if not token or "[" in token or "]" in token or _WS_RE.search(token):
        raise ValueError(f"invalid token {token!r}")


@dataclass(frozen=True)
class IntentNode:
    label: str
    slots: tuple[SlotNode, ...] = ()

    def __post_init__(self):
        _check_label(self.label)
        object.__setattr__(self, "slots", tuple(self.slots))
        for s in self.slots:
            if not isinstance(s, SlotNode):
                raise ValueError("intent children must be slots")


@dataclass(frozen=True)
class SlotNode:
    """A slot whose payload is a token span, a nested intent, or empty."""

    label: str
    tokens: tuple[str, ...] = ()
    intent: IntentNode | None = None

    def __post_init__(self):
        _check_label(self.label)
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tokens and self.intent is not None:
            raise ValueError("slot cannot hold both tokens and a nested intent")
        for t in self.tokens:
            _check_token(t)

    @property
    def is_leaf(self) -> bool:
        return self.intent is None

    @property
    def is_empty(self) -> bool:
        return self.intent is None and not self.tokens

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class ParseTree:
    root: IntentNode

    @property
    def intent(self) -> str:
        return self.root.label

    def __str__(self) -> str:
        return serialize(self)


# A signature is a ParseTree whose leaf slots are all empty.
Signature = ParseTree


@dataclass
class Utterance:
    """Raw text plus optional tokenization.

    ``retokenized`` marks utterances whose tokens were produced by a tokenizer
    that changed segmentation, so the tokens need not agree with ``raw``.
    """

    raw: str
    tokens: list[str] | None = None
    language: str = "en"
    retokenized: bool = False

    def is_consistent(self) -> bool:
        if self.tokens is None or self.retokenized:
            return True
        return " ".join(self.tokens) == " ".join(self.raw.split())

    @property
    def text(self) -> str:
        """Space-joined tokens when tokenized, raw text otherwise."""
        if self.tokens is None:
            return self.raw
        return " ".join(self.tokens)


# ---------------------------------------------------------------- parsing


def _lex(text: str) -> Iterator[tuple[str, str, int]]:
    """Yield (kind, value, pos) with kind in {open, close, word}."""
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == "[":
            j = i + 1
            while j < n and not text[j].isspace() and text[j] not in "[]":
                j += 1
            yield "open", text[i + 1 : j], i
            i = j
        elif c == "]":
            yield "close", "]", i
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "[]":
                j += 1
            yield "word", text[i:j], i
            i = j


def parse(text: str) -> ParseTree:
    """Parse a bracketed decoupled representation into a ParseTree."""
    tokens = list(_lex(text))
    if not tokens:
        raise MalformedParse("empty input", text, 0)
    pos = 0

    def expect_label(value: str, prefix: str, at: int) -> str:
        if not value.startswith(prefix):
            raise MalformedParse(f"expected {prefix!r} label, got {value!r}", text, at)
        label = value[len(prefix) :]
        if not _LABEL_RE.fullmatch(label):
            raise MalformedParse(f"bad label {value!r}", text, at)
        return label

    def parse_intent() -> IntentNode:
        nonlocal pos
        kind, value, at = tokens[pos]
        if kind != "open":
            raise MalformedParse("expected '['", text, at)
        label = expect_label(value, INTENT_PREFIX, at)
        pos += 1
        slots = []
        while True:
            if pos >= len(tokens):
                raise MalformedParse("unbalanced brackets", text, len(text))
            kind, value, at = tokens[pos]
            if kind == "close":
                pos += 1
                return IntentNode(label, tuple(slots))
            if kind == "word":
                raise MalformedParse(f"bare token {value!r} under intent", text, at)
            slots.append(parse_slot())

    def parse_slot() -> SlotNode:
        nonlocal pos
        _, value, at = tokens[pos]
        label = expect_label(value, SLOT_PREFIX, at)
        pos += 1
        words: list[str] = []
        nested = None
        while True:
            if pos >= len(tokens):
                raise MalformedParse("unbalanced brackets", text, len(text))
            kind, value, at = tokens[pos]
            if kind == "close":
                pos += 1
                return SlotNode(label, tuple(words), nested)
            if kind == "word":
                if nested is not None:
                    raise MalformedParse("slot mixes tokens and intent", text, at)
                words.append(value)
                pos += 1
            else:
                if words or nested is not None:
                    raise MalformedParse("slot mixes tokens and intent", text, at)
                nested = parse_intent()

    root = parse_intent()
    if pos != len(tokens):
        raise MalformedParse("trailing content after root", text, tokens[pos][2])
    return ParseTree(root)


def _serialize_intent(node: IntentNode, out: list[str]) -> None:
    out.append("[" + INTENT_PREFIX + node.label)
    for slot in node.slots:
        out.append("[" + SLOT_PREFIX + slot.label)
        if slot.intent is not None:
            _serialize_intent(slot.intent, out)
        else:
            out.extend(slot.tokens)
        out.append("]")
    out.append("]")


def serialize(tree: ParseTree) -> str:
    out: list[str] = []
    _serialize_intent(tree.root, out)
    return " ".join(out)


# ---------------------------------------------------------------- transforms


def map_leaves(tree: ParseTree, fn) -> ParseTree:
    """Rebuild ``tree`` with every leaf slot replaced by ``fn(slot)``."""

    def walk(node: IntentNode) -> IntentNode:
        slots = []
        for s in node.slots:
            if s.intent is not None:
                slots.append(SlotNode(s.label, (), walk(s.intent)))
            else:
                slots.append(fn(s))
        return IntentNode(node.label, tuple(slots))

    return ParseTree(walk(tree.root))


def leaf_slots(tree: ParseTree) -> list[SlotNode]:
    """Leaf slots in document order, nested intents flattened."""
    out: list[SlotNode] = []

    def walk(node: IntentNode) -> None:
        for s in node.slots:
            if s.intent is not None:
                walk(s.intent)
            else:
                out.append(s)

    walk(tree.root)
    return out


def iter_nodes(tree: ParseTree) -> Iterator[IntentNode | SlotNode]:
    stack: list[IntentNode | SlotNode] = [tree.root]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, IntentNode):
            stack.extend(reversed(node.slots))
        elif node.intent is not None:
            stack.append(node.intent)


def extract_signature(tree: ParseTree) -> Signature:
    """Drop every slot value, keeping labels and nesting."""
    return map_leaves(tree, lambda s: SlotNode(s.label))


def is_signature(tree: ParseTree) -> bool:
    return all(s.is_empty for s in leaf_slots(tree))


def _ordered_key(node: IntentNode):
    return (
        node.label,
        tuple(
            (s.label, s.tokens, None if s.intent is None else _ordered_key(s.intent))
            for s in node.slots
        ),
    )


def _unordered_key(node: IntentNode):
    return (
        node.label,
        tuple(
            sorted(
                (s.label, s.tokens, () if s.intent is None else _unordered_key(s.intent))
                for s in node.slots
            )
        ),
    )


def signatures_equal(a: Signature, b: Signature, ignore_order: bool = True) -> bool:
    """Compare two signatures; with ``ignore_order`` slots are a multiset."""
    key = _unordered_key if ignore_order else _ordered_key
    return key(a.root) == key(b.root)


def slot_label_counts(tree: ParseTree, non_empty: bool = False) -> Counter:
    return Counter(s.label for s in leaf_slots(tree) if not (non_empty and s.is_empty))


def normalize_text(text: str, form: str = "NFC", lowercase: bool = False) -> str:
    text = unicodedata.normalize(form, text)
    if lowercase:
        # lowering can produce decomposed sequences (e.g. U+0130)
        text = unicodedata.normalize(form, text.lower())
    return text


def normalize_tree(tree: ParseTree, form: str = "NFC", lowercase: bool = False) -> ParseTree:
    return map_leaves(
        tree,
        lambda s: SlotNode(s.label, tuple(normalize_text(t, form, lowercase) for t in s.tokens)),
    )

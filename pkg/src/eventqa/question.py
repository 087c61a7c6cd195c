"""Template question grammar: AST, recursive-descent parser, renderer, generator.

The grammar, in EBNF (words are matched case-insensitively)::

    question       = count | exist | query | explanatory | predictive | counterfactual ;
    count          = "how many" plural ( "are" state time_point | verb_pl [ event_time ] ) "?" ;
    exist          = "are there any" plural "that" ( "are" state time_point | verb_pl [ event_time ] ) "?" ;
    query          = "what is the" attribute "of the" singular "that"
                     ( "is" state time_point | verb_sg [ event_time ] ) "?" ;
    explanatory    = "which of the following is responsible for" event_np "?" option option { option } ;
    predictive     = "which of the following will happen next" "?" event_opt event_opt { event_opt } ;
    counterfactual = "without the" singular "," "which of the following will happen" "?"
                     event_opt event_opt { event_opt } ;
    option         = "|" ( "the presence of the" singular | event_np ) ;
    event_opt      = "|" event_np ;
    verb_pl        = "enter the scene" | "exit the scene" | "collide" [ "with the" singular ] ;
    verb_sg        = "enters the scene" | "exits the scene" | "collides" [ "with the" singular ] ;
    event_time     = ( "before" | "after" ) event_np ;
    time_point     = "when the video begins" | "when the video ends" ;
    event_np       = "the collision between the" singular "and the" singular
                   | "the entrance of the" singular | "the exit of the" singular ;
    state          = "moving" | "stationary" | "present" ;
    attribute      = "color" | "shape" | "material" ;
    singular       = [ color ] [ material ] ( "object" | shape ) ;
    plural         = [ color ] [ material ] ( "objects" | shape "s" ) ;

Every production is selected by its leading words, so each sentence has
exactly one parse.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .scene import COLORS, MATERIALS, SHAPES, Vocabulary, DEFAULT_VOCABULARY

QTYPES = ("count", "exist", "query_attribute", "explanatory", "predictive", "counterfactual")
DESCRIPTIVE = ("count", "exist", "query_attribute")
MULTIPLE_CHOICE = ("explanatory", "predictive", "counterfactual")
STATES = ("moving", "stationary", "present")
ATTRIBUTE_NAMES = ("color", "shape", "material")
EVENT_NP_KINDS = ("collision", "entry", "exit")


class QuestionParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at character {position})")
        self.position = position


@dataclass(frozen=True)
class ObjectFilter:
    color: str | None = None
    material: str | None = None
    shape: str | None = None

    def matches(self, attrs: dict) -> bool:
        return all(
            value is None or attrs.get(name) == value
            for name, value in (("color", self.color), ("material", self.material), ("shape", self.shape))
        )

    def constraints(self) -> list:
        return [
            (name, value)
            for name, value in (("color", self.color), ("material", self.material), ("shape", self.shape))
            if value is not None
        ]

    def render(self, plural: bool = False) -> str:
        words = [w for w in (self.color, self.material) if w]
        noun = self.shape or "object"
        words.append(noun + "s" if plural else noun)
        return " ".join(words)


@dataclass(frozen=True)
class EventRef:
    """A noun phrase naming one event: a collision, an entrance or an exit."""

    kind: str
    objects: tuple

    def render(self) -> str:
        if self.kind == "collision":
            a, b = self.objects
            return f"the collision between the {a.render()} and the {b.render()}"
        word = "entrance" if self.kind == "entry" else "exit"
        return f"the {word} of the {self.objects[0].render()}"


@dataclass(frozen=True)
class EventPattern:
    """What the subject of a descriptive question does: enter, exit or collide."""

    kind: str
    partner: ObjectFilter | None = None


@dataclass(frozen=True)
class Temporal:
    relation: str  # begin | end | before | after
    event: EventRef | None = None


@dataclass(frozen=True)
class Presence:
    """Explanatory option: the presence of an object."""

    obj: ObjectFilter

    def render(self) -> str:
        return f"the presence of the {self.obj.render()}"


@dataclass(frozen=True)
class QuestionAST:
    qtype: str
    subject: ObjectFilter | None = None
    event: EventPattern | None = None
    state: str | None = None
    temporal: Temporal | None = None
    target_attribute: str | None = None
    target_event: EventRef | None = None
    removed: ObjectFilter | None = None
    options: tuple = ()

    def __post_init__(self):
        if self.qtype not in QTYPES:
            raise ValueError(f"unknown question type {self.qtype!r}")
        if self.qtype == "query_attribute" and self.target_attribute not in ATTRIBUTE_NAMES:
            raise ValueError("query_attribute needs exactly one target attribute")
        if self.qtype in MULTIPLE_CHOICE and len(self.options) < 2:
            raise ValueError(f"{self.qtype} questions need at least two options")


_WORD_RE = re.compile(r"[A-Za-z]+|[?,|]")


def _tokens(text: str) -> list[tuple[str, int]]:
    out = []
    pos = 0
    for m in _WORD_RE.finditer(text):
        gap = text[pos : m.start()]
        if gap.strip():
            raise QuestionParseError(f"unexpected character {gap.strip()[0]!r}", pos + gap.index(gap.strip()[0]))
        out.append((m.group().lower(), m.start()))
        pos = m.end()
    if text[pos:].strip():
        raise QuestionParseError(f"unexpected character {text[pos:].strip()[0]!r}", pos)
    return out


class _QParser:
    def __init__(self, text: str, vocab: Vocabulary):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0
        self.vocab = vocab
        self.plural_shapes = {s + "s": s for s in vocab.shapes}

    def peek(self, k: int = 0) -> str | None:
        j = self.i + k
        return self.toks[j][0] if j < len(self.toks) else None

    @property
    def pos(self) -> int:
        return self.toks[self.i][1] if self.i < len(self.toks) else len(self.text)

    def fail(self, message: str):
        raise QuestionParseError(message, self.pos)

    def accept(self, *words: str) -> bool:
        if all(self.peek(k) == w for k, w in enumerate(words)):
            self.i += len(words)
            return True
        return False

    def expect(self, *words: str):
        for w in words:
            if self.peek() != w:
                found = self.peek()
                self.fail(f"expected {w!r}, found {found!r}" if found else f"expected {w!r}, found end of question")
            self.i += 1

    def end(self):
        if self.peek() is not None:
            self.fail(f"unexpected {self.peek()!r} after end of question")

    def question(self) -> QuestionAST:
        if self.accept("how", "many"):
            subject = self.filter(plural=True)
            ast = self.predicate("count", subject, plural=True)
            self.expect("?")
        elif self.accept("are", "there", "any"):
            subject = self.filter(plural=True)
            self.expect("that")
            ast = self.predicate("exist", subject, plural=True)
            self.expect("?")
        elif self.accept("what", "is", "the"):
            attr = self.peek()
            if attr not in ATTRIBUTE_NAMES:
                self.fail(f"expected one of {', '.join(ATTRIBUTE_NAMES)}")
            self.i += 1
            self.expect("of", "the")
            subject = self.filter(plural=False)
            self.expect("that")
            ast = self.predicate("query_attribute", subject, plural=False, attribute=attr)
            self.expect("?")
        elif self.accept("which", "of", "the", "following"):
            if self.accept("is", "responsible", "for"):
                target = self.event_np()
                self.expect("?")
                options = self.options(allow_presence=True)
                ast = QuestionAST("explanatory", target_event=target, options=options)
            else:
                self.expect("will", "happen", "next", "?")
                ast = QuestionAST("predictive", options=self.options(allow_presence=False))
        elif self.accept("without", "the"):
            removed = self.filter(plural=False)
            self.expect(",", "which", "of", "the", "following", "will", "happen", "?")
            ast = QuestionAST("counterfactual", removed=removed, options=self.options(allow_presence=False))
        else:
            self.fail("no question template starts like this")
        self.end()
        return ast

    def predicate(self, qtype, subject, plural, attribute=None) -> QuestionAST:
        be = "are" if plural else "is"
        if self.accept(be):
            state = self.peek()
            if state not in STATES:
                self.fail(f"expected one of {', '.join(STATES)}")
            self.i += 1
            self.expect("when", "the", "video")
            if self.accept("begins"):
                temporal = Temporal("begin")
            else:
                self.expect("ends")
                temporal = Temporal("end")
            return QuestionAST(qtype, subject=subject, state=state, temporal=temporal, target_attribute=attribute)
        verbs = ("enter", "exit", "collide") if plural else ("enters", "exits", "collides")
        word = self.peek()
        if word not in verbs:
            self.fail(f"expected '{be}' or one of {', '.join(verbs)}")
        self.i += 1
        partner = None
        if word.startswith("collide"):
            kind = "collision"
            if self.accept("with"):
                self.expect("the")
                partner = self.filter(plural=False)
        else:
            kind = "entry" if word.startswith("enter") else "exit"
            self.expect("the", "scene")
        temporal = None
        for rel in ("before", "after"):
            if self.accept(rel):
                temporal = Temporal(rel, self.event_np())
        return QuestionAST(
            qtype, subject=subject, event=EventPattern(kind, partner), temporal=temporal, target_attribute=attribute
        )

    def options(self, allow_presence: bool) -> tuple:
        opts = []
        while self.accept("|"):
            if allow_presence and self.accept("the", "presence", "of", "the"):
                opts.append(Presence(self.filter(plural=False)))
            else:
                opts.append(self.event_np())
        if len(opts) < 2:
            self.fail("expected at least two options, each introduced by '|'")
        return tuple(opts)

    def event_np(self) -> EventRef:
        self.expect("the")
        if self.accept("collision", "between", "the"):
            a = self.filter(plural=False)
            self.expect("and", "the")
            return EventRef("collision", (a, self.filter(plural=False)))
        if self.accept("entrance", "of", "the"):
            return EventRef("entry", (self.filter(plural=False),))
        if self.accept("exit", "of", "the"):
            return EventRef("exit", (self.filter(plural=False),))
        self.fail("expected 'collision between', 'entrance of' or 'exit of'")

    def filter(self, plural: bool) -> ObjectFilter:
        color = material = None
        if self.peek() in self.vocab.colors:
            color = self.peek()
            self.i += 1
        if self.peek() in self.vocab.materials:
            material = self.peek()
            self.i += 1
        word = self.peek()
        if plural:
            if word == "objects":
                shape = None
            elif word in self.plural_shapes:
                shape = self.plural_shapes[word]
            else:
                self._bad_noun(word, "objects")
        else:
            if word == "object":
                shape = None
            elif word in self.vocab.shapes:
                shape = word
            else:
                self._bad_noun(word, "object")
        self.i += 1
        return ObjectFilter(color, material, shape)

    def _bad_noun(self, word, noun):
        if word is not None and word not in _KNOWN_WORDS:
            self.fail(f"unknown attribute token {word!r}")
        self.fail(f"expected {noun!r} or a shape")


_KNOWN_WORDS = set(
    "how many are there any that what is the of which following responsible for will happen next "
    "without enter exit collide enters exits collides with scene before after when video begins ends "
    "collision between and entrance presence moving stationary present color shape material object objects".split()
)


def parse_question(text: str, vocab: Vocabulary = DEFAULT_VOCABULARY) -> QuestionAST:
    """Parse one templated question; raises QuestionParseError with a character offset."""
    return _QParser(text, vocab).question()


def _cap(s: str) -> str:
    return s[0].upper() + s[1:]


def render_question(ast: QuestionAST) -> str:
    q = ast.qtype
    if q in DESCRIPTIVE:
        plural = q != "query_attribute"
        subject = ast.subject.render(plural=plural)
        if ast.state is not None:
            when = "when the video begins" if ast.temporal.relation == "begin" else "when the video ends"
            tail = f"{'are' if plural else 'is'} {ast.state} {when}"
        else:
            kind = ast.event.kind
            if kind == "collision":
                tail = "collide" if plural else "collides"
                if ast.event.partner is not None:
                    tail += f" with the {ast.event.partner.render()}"
            else:
                verb = {"entry": "enter", "exit": "exit"}[kind]
                tail = f"{verb if plural else verb + 's'} the scene"
            if ast.temporal is not None:
                tail += f" {ast.temporal.relation} {ast.temporal.event.render()}"
        if q == "count":
            return f"How many {subject} {tail}?"
        if q == "exist":
            return f"Are there any {subject} that {tail}?"
        return f"What is the {ast.target_attribute} of the {subject} that {tail}?"
    opts = "".join(f" | {o.render()}" for o in ast.options)
    if q == "explanatory":
        return f"Which of the following is responsible for {ast.target_event.render()}?{opts}"
    if q == "predictive":
        return f"Which of the following will happen next?{opts}"
    return f"Without the {ast.removed.render()}, which of the following will happen?{opts}"


def random_filter(rng, vocab: Vocabulary = DEFAULT_VOCABULARY) -> ObjectFilter:
    color = vocab.colors[rng.integers(len(vocab.colors))] if rng.random() < 0.5 else None
    material = vocab.materials[rng.integers(len(vocab.materials))] if rng.random() < 0.4 else None
    shape = vocab.shapes[rng.integers(len(vocab.shapes))] if rng.random() < 0.6 else None
    return ObjectFilter(color, material, shape)


def random_event_ref(rng, vocab: Vocabulary = DEFAULT_VOCABULARY) -> EventRef:
    kind = EVENT_NP_KINDS[rng.integers(3)]
    n = 2 if kind == "collision" else 1
    return EventRef(kind, tuple(random_filter(rng, vocab) for _ in range(n)))


def random_question(rng, vocab: Vocabulary = DEFAULT_VOCABULARY) -> QuestionAST:
    """Draw an AST uniformly over templates, with random attribute filters."""
    qtype = QTYPES[rng.integers(len(QTYPES))]
    if qtype in DESCRIPTIVE:
        subject = random_filter(rng, vocab)
        attr = ATTRIBUTE_NAMES[rng.integers(3)] if qtype == "query_attribute" else None
        if rng.random() < 0.5:
            state = STATES[rng.integers(3)]
            temporal = Temporal(("begin", "end")[rng.integers(2)])
            return QuestionAST(qtype, subject=subject, state=state, temporal=temporal, target_attribute=attr)
        kind = EVENT_NP_KINDS[rng.integers(3)]
        partner = random_filter(rng, vocab) if kind == "collision" and rng.random() < 0.5 else None
        temporal = None
        if rng.random() < 0.5:
            temporal = Temporal(("before", "after")[rng.integers(2)], random_event_ref(rng, vocab))
        return QuestionAST(
            qtype, subject=subject, event=EventPattern(kind, partner), temporal=temporal, target_attribute=attr
        )
    n_opts = int(rng.integers(2, 5))
    if qtype == "explanatory":
        opts = tuple(
            Presence(random_filter(rng, vocab)) if rng.random() < 0.4 else random_event_ref(rng, vocab)
            for _ in range(n_opts)
        )
        return QuestionAST(qtype, target_event=random_event_ref(rng, vocab), options=opts)
    opts = tuple(random_event_ref(rng, vocab) for _ in range(n_opts))
    if qtype == "predictive":
        return QuestionAST(qtype, options=opts)
    return QuestionAST(qtype, removed=random_filter(rng, vocab), options=opts)


def read_questions(text: str) -> list[tuple[str, str]]:
    """Parse a question file into (id, text) pairs.

    One question per line with an optional ``# id`` suffix; lines without an
    id are numbered ``q<line>``. Blank lines are skipped.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        body, sep, qid = line.partition("#")
        qid = qid.strip() if sep else f"q{lineno}"
        out.append((qid, body.strip()))
    return out


def write_questions(items) -> str:
    return "".join(f"{text} # {qid}\n" for qid, text in items)


__all__ = [
    "ATTRIBUTE_NAMES",
    "COLORS",
    "DESCRIPTIVE",
    "EventPattern",
    "EventRef",
    "MATERIALS",
    "MULTIPLE_CHOICE",
    "ObjectFilter",
    "Presence",
    "QTYPES",
    "QuestionAST",
    "QuestionParseError",
    "SHAPES",
    "STATES",
    "Temporal",
    "parse_question",
    "random_question",
    "read_questions",
    "render_question",
    "write_questions",
]

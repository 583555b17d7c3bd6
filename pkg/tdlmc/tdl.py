#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
TDL: язык описания потоков. Синтаксис, разбор, проверка корректности и печать.

    const c;
    thread Init(id_A, n_A, m_A) {
      initial init_A;
      init_A -fresh-> gen_A [n_A := new];
      gen_A -send c!(n_A)-> wait_A;
      wait_A -recv n_A?(y)-> stop_A [m_A := y];
    }
    init { Main(bot) }
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union

logger = logging.getLogger(__name__)

RESERVED_LOCATIONS = ("init", "fresh", "zero")
KEYWORDS = {"bot", "true", "new", "run", "with", "send", "recv", "thread", "const", "initial", "init"}


class TdlSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        super().__init__(f"{message} at {line}:{column}" if line else message)
        self.message = message
        self.line = line
        self.column = column


# === AST ===

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Bottom:
    pass


BOT = Bottom()
Expression = Union[Var, Const, Bottom]


@dataclass(frozen=True)
class GuardAtom:
    kind: str  # "=" или "!="
    left: str
    right: Expression


Guard = Tuple[GuardAtom, ...]
Assignment = Tuple[Tuple[str, Expression], ...]


@dataclass(frozen=True)
class InternalMove:
    guard: Guard = ()
    assignment: Assignment = ()


@dataclass(frozen=True)
class NameGen:
    target: str


@dataclass(frozen=True)
class ThreadCreate:
    thread: str
    assignment: Assignment = ()


@dataclass(frozen=True)
class Send:
    channel: Expression
    template: Tuple[str, ...]
    guard: Guard = ()
    assignment: Assignment = ()


@dataclass(frozen=True)
class Receive:
    channel: Expression
    template: Tuple[str, ...]
    guard: Guard = ()
    assignment: Assignment = ()


RuleBody = Union[InternalMove, NameGen, ThreadCreate, Send, Receive]


@dataclass(frozen=True)
class TdlRule:
    source: str
    target: str
    body: RuleBody
    label: Optional[str] = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    @property
    def name(self) -> str:
        return self.label or f"{self.source}->{self.target}"


@dataclass(frozen=True)
class ThreadDef:
    name: str
    locals: Tuple[str, ...]
    initial: str
    rules: Tuple[TdlRule, ...] = ()
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    @property
    def locations(self) -> Tuple[str, ...]:
        seen: Dict[str, None] = {self.initial: None}
        for r in self.rules:
            seen.setdefault(r.source)
            seen.setdefault(r.target)
        return tuple(seen)


@dataclass(frozen=True)
class InitEntry:
    thread: str
    count: int = 1


@dataclass(frozen=True)
class Program:
    threads: Tuple[ThreadDef, ...] = ()
    constants: Tuple[str, ...] = ()
    init: Tuple[InitEntry, ...] = ()

    def thread(self, name: str) -> ThreadDef:
        for t in self.threads:
            if t.name == name:
                return t
        raise KeyError(name)

    def constant_index(self, name: str) -> int:
        """Константа c_i кодируется числом i (нумерация с 1)."""
        return self.constants.index(name) + 1


# --------- лексер ---------

@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<sym>->|:=|!=|[{}()\[\];,/=!?*\-])
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)


def lex(code: str) -> Iterator[Token]:
    pos, line, line_start = 0, 1, 0
    while pos < len(code):
        m = _TOKEN_RE.match(code, pos)
        if not m:
            raise TdlSyntaxError(f"unexpected character {code[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            yield Token(kind, m.group(), line, m.start() - line_start + 1)
        pos = m.end()


class TokenStream:
    def __init__(self, code: str) -> None:
        self.tokens = list(lex(code))
        self.pos = 0

    @property
    def finished(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self, offset: int = 0) -> Optional[Token]:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    @property
    def current(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise self.make_error("unexpected end of input")
        return tok

    def accept(self, expected: str) -> Optional[Token]:
        tok = self.peek()
        if tok is None:
            return None
        if tok.text == expected or (expected in ("ident", "int") and tok.kind == expected):
            self.pos += 1
            return tok
        return None

    def check(self, expected: str) -> bool:
        tok = self.peek()
        return tok is not None and (tok.text == expected or tok.kind == expected)

    def expect(self, expected: str) -> Token:
        tok = self.accept(expected)
        if tok is None:
            raise self.make_error(f"expected {expected}")
        return tok

    def make_error(self, message: str, tok: Optional[Token] = None) -> TdlSyntaxError:
        tok = tok or self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else Token("eof", "", 0, 0)
            return TdlSyntaxError(f"{message} (found end of input)", last.line, last.column)
        return TdlSyntaxError(f"{message} (found `{tok.text}`)", tok.line, tok.column)


# --------- парсер ---------

class _Parser:
    def __init__(self, code: str) -> None:
        self.stream = TokenStream(code)
        self.signatures: Dict[str, Tuple[str, ...]] = {}
        self.constants: List[str] = []
        self._prescan()

    def _prescan(self) -> None:
        # сигнатуры потоков и константы нужны до разбора тел (run P with ...)
        toks = self.stream.tokens
        for i, tok in enumerate(toks):
            if tok.text == "thread" and i + 2 < len(toks) and toks[i + 1].kind == "ident" and toks[i + 2].text == "(":
                names, j = [], i + 3
                while j < len(toks) and toks[j].text != ")":
                    if toks[j].kind == "ident":
                        names.append(toks[j].text)
                    j += 1
                self.signatures.setdefault(toks[i + 1].text, tuple(names))
            elif tok.text == "const" and (i == 0 or toks[i - 1].text != "-"):
                j = i + 1
                while j < len(toks) and toks[j].text != ";":
                    if toks[j].kind == "ident" and toks[j].text not in self.constants:
                        self.constants.append(toks[j].text)
                    j += 1

    def ident(self) -> Token:
        tok = self.stream.current
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.stream.make_error("expected identifier")
        self.stream.pos += 1
        return tok

    def parse(self) -> Program:
        threads: List[ThreadDef] = []
        init: List[InitEntry] = []
        s = self.stream
        while not s.finished:
            if s.accept("const"):
                self.ident()
                while s.accept(","):
                    self.ident()
                s.expect(";")
            elif s.check("thread"):
                threads.append(self.thread())
            elif s.accept("init"):
                init.extend(self.init_block())
            else:
                raise s.make_error("expected `const`, `thread` or `init`")
        return Program(tuple(threads), tuple(self.constants), tuple(init))

    def thread(self) -> ThreadDef:
        s = self.stream
        head = s.expect("thread")
        name = self.ident().text
        s.expect("(")
        params: List[str] = []
        if not s.check(")"):
            params.append(self.ident().text)
            while s.accept(","):
                params.append(self.ident().text)
        s.expect(")")
        s.expect("{")
        initial: Optional[str] = None
        rules: List[TdlRule] = []
        while not s.accept("}"):
            if s.accept("initial"):
                initial = self.ident().text
                s.expect(";")
            else:
                rules.append(self.rule(name, tuple(params)))
        if initial is None:
            if not rules:
                raise TdlSyntaxError(f"thread {name} has no initial location", head.line, head.column)
            initial = rules[0].source
        return ThreadDef(name, tuple(params), initial, tuple(rules), head.line, head.column)

    def rule(self, thread: str, params: Tuple[str, ...]) -> TdlRule:
        s = self.stream
        src_tok = self.ident()
        s.expect("-")
        kind, label, channel_tok, template = "plain", None, None, ()
        verb = None
        nxt = s.peek(1)
        if s.current.text in ("send", "recv") and not (nxt is not None and nxt.text == "->"):
            verb = s.expect(s.current.text)
        if verb is not None:
            kind = verb.text
            channel_tok = self.ident() if s.current.text != "bot" else s.expect("bot")
            s.expect("!" if kind == "send" else "?")
            s.expect("(")
            names: List[str] = []
            if not s.check(")"):
                names.append(self.ident().text)
                while s.accept(","):
                    names.append(self.ident().text)
            s.expect(")")
            template = tuple(names)
        else:
            # метка: любое слово, в том числе ключевое (-send->, -new->)
            tok = s.current
            if tok.kind != "ident":
                raise s.make_error("expected rule label")
            s.pos += 1
            label = tok.text
        s.expect("->")
        target = self.ident().text
        where = f"rule {src_tok.text}->{target} of thread {thread}"

        scope = _Scope(params, template if kind == "recv" else (), self.constants, where, s)
        body: RuleBody
        if s.accept("["):
            body = self.rule_body(kind, scope)
            s.expect("]")
        else:
            body = InternalMove()
        s.expect(";")

        if kind in ("send", "recv"):
            if not isinstance(body, InternalMove):
                raise TdlSyntaxError(f"communication {where} cannot generate names or create threads",
                                     src_tok.line, src_tok.column)
            channel = scope.expression(channel_tok)
            if kind == "send":
                for x in template:
                    if x not in params:
                        raise TdlSyntaxError(f"unknown local '{x}' in {where}", channel_tok.line, channel_tok.column)
                body = Send(channel, template, body.guard, body.assignment)
            else:
                body = Receive(channel, template, body.guard, body.assignment)
        return TdlRule(src_tok.text, target, body, label, src_tok.line, src_tok.column)

    def rule_body(self, kind: str, scope: "_Scope") -> RuleBody:
        s = self.stream
        if s.check("run"):
            run_tok = s.expect("run")
            child = self.ident()
            if child.text not in self.signatures:
                raise TdlSyntaxError(f"unknown thread '{child.text}' in {scope.where}", child.line, child.column)
            assignment: List[Tuple[str, Expression]] = []
            if s.accept("with"):
                while True:
                    target = self.ident()
                    if target.text not in self.signatures[child.text]:
                        raise TdlSyntaxError(f"'{target.text}' is not a local of thread {child.text} in {scope.where}",
                                             target.line, target.column)
                    s.expect(":=")
                    assignment.append((target.text, scope.expression(self._expr_token())))
                    if not s.accept(","):
                        break
            if kind != "plain":
                raise TdlSyntaxError(f"thread creation must be an internal move in {scope.where}",
                                     run_tok.line, run_tok.column)
            return ThreadCreate(child.text, tuple(assignment))

        guard: List[GuardAtom] = []
        assignment = []
        fresh_target: Optional[Token] = None
        if s.check("]"):
            return InternalMove()
        while True:
            if s.accept("/"):
                pass
            if s.accept("true"):
                pass
            else:
                left = self.ident()
                if s.accept(":="):
                    scope.local(left)
                    if s.accept("new"):
                        fresh_target = left
                        assignment.append((left.text, BOT))
                    else:
                        assignment.append((left.text, scope.expression(self._expr_token())))
                else:
                    op = s.accept("=") or s.accept("!=")
                    if op is None:
                        raise s.make_error("expected `=`, `!=` or `:=`")
                    scope.variable(left)
                    guard.append(GuardAtom(op.text, left.text, scope.expression(self._expr_token())))
            if not (s.accept(",") or s.check("/")):
                break
        if fresh_target is not None:
            if guard or len(assignment) != 1 or kind != "plain":
                raise TdlSyntaxError(f"name generation must be the only action in {scope.where}",
                                     fresh_target.line, fresh_target.column)
            return NameGen(fresh_target.text)
        return InternalMove(tuple(guard), tuple(assignment))

    def _expr_token(self) -> Token:
        tok = self.stream.current
        if tok.kind != "ident" or (tok.text in KEYWORDS and tok.text != "bot"):
            raise self.stream.make_error("expected expression")
        self.stream.pos += 1
        return tok

    def init_block(self) -> List[InitEntry]:
        s = self.stream
        s.expect("{")
        entries: List[InitEntry] = []
        if s.accept("}"):
            return entries
        while True:
            name = self.ident()
            if name.text not in self.signatures:
                raise TdlSyntaxError(f"unknown thread '{name.text}' in init", name.line, name.column)
            if s.accept("("):
                args: List[Token] = []
                if not s.check(")"):
                    args.append(self._expr_token())
                    while s.accept(","):
                        args.append(self._expr_token())
                s.expect(")")
                if len(args) != len(self.signatures[name.text]):
                    raise TdlSyntaxError(
                        f"arity misuse: {name.text} has {len(self.signatures[name.text])} locals, got {len(args)}",
                        name.line, name.column)
                for a in args:
                    if a.text != "bot":
                        raise TdlSyntaxError(f"initial locals must be bot in init entry {name.text}", a.line, a.column)
            count = 1
            if s.accept("*"):
                count = int(s.expect("int").text)
            entries.append(InitEntry(name.text, count))
            if not s.accept(","):
                break
        s.expect("}")
        return entries


class _Scope:
    """Разрешение идентификаторов внутри одного правила."""

    def __init__(self, params: Sequence[str], template: Sequence[str], constants: Sequence[str],
                 where: str, stream: TokenStream) -> None:
        self.params = tuple(params)
        self.template = tuple(template)
        self.constants = tuple(constants)
        self.where = where
        self.stream = stream

    def local(self, tok: Token) -> None:
        if tok.text not in self.params:
            raise TdlSyntaxError(f"unknown local '{tok.text}' in {self.where}", tok.line, tok.column)

    def variable(self, tok: Token) -> None:
        if tok.text not in self.params and tok.text not in self.template:
            raise TdlSyntaxError(f"unknown variable '{tok.text}' in {self.where}", tok.line, tok.column)

    def expression(self, tok: Token) -> Expression:
        if tok.text == "bot":
            return BOT
        if tok.text in self.template or tok.text in self.params:
            return Var(tok.text)
        if tok.text in self.constants:
            return Const(tok.text)
        raise TdlSyntaxError(f"unknown identifier '{tok.text}' in {self.where}", tok.line, tok.column)


def parse_program(text: str) -> Program:
    program = _Parser(text).parse()
    logger.debug("Разобрано потоков: %d, констант: %d", len(program.threads), len(program.constants))
    return program


def load_program(path) -> Program:
    with open(path, "r", encoding="utf-8") as f:
        return parse_program(f.read())


# --------- проверка корректности ---------

@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    severity: str  # "error" | "warning"
    message: str

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.column}: {self.severity}: {self.message}"


def validate(p: Program) -> List[Diagnostic]:
    out: List[Diagnostic] = []

    def err(node, message: str, severity: str = "error") -> None:
        out.append(Diagnostic(getattr(node, "line", 0), getattr(node, "column", 0), severity, message))

    names = [t.name for t in p.threads]
    by_name = {t.name: t for t in p.threads}
    seen_threads: Set[str] = set()
    local_owner: Dict[str, str] = {}
    location_owner: Dict[str, str] = {}
    for c in sorted({c for c in p.constants if list(p.constants).count(c) > 1}):
        out.append(Diagnostic(0, 0, "error", f"duplicate constant '{c}'"))

    for t in p.threads:
        if t.name in seen_threads:
            err(t, f"duplicate thread name '{t.name}'")
        seen_threads.add(t.name)
        for x in t.locals:
            if x in local_owner:
                where = "twice" if local_owner[x] == t.name else f"in threads {local_owner[x]} and {t.name}"
                err(t, f"local variable '{x}' declared {where}")
            local_owner.setdefault(x, t.name)
            if x in p.constants:
                err(t, f"constant '{x}' shadows local of thread {t.name}", "warning")
        for loc in t.locations:
            if loc in RESERVED_LOCATIONS:
                err(t, f"location name '{loc}' is reserved")
            if loc in location_owner and location_owner[loc] != t.name:
                err(t, f"location '{loc}' used by threads {location_owner[loc]} and {t.name}")
            location_owner.setdefault(loc, t.name)

        for r in t.rules:
            out.extend(_validate_rule(p, t, r, by_name))

    for e in p.init:
        if e.thread not in names:
            out.append(Diagnostic(0, 0, "error", f"init refers to unknown thread '{e.thread}'"))
        if e.count < 1:
            out.append(Diagnostic(0, 0, "error", f"init multiplicity of '{e.thread}' must be positive"))
    return out


def _validate_rule(p: Program, t: ThreadDef, r: TdlRule, threads: Dict[str, ThreadDef]) -> List[Diagnostic]:
    out: List[Diagnostic] = []
    where = f"rule {r.name} of thread {t.name}"

    def err(message: str) -> None:
        out.append(Diagnostic(r.line, r.column, "error", f"{message} ({where})"))

    def check_expr(e: Expression, scope: Sequence[str]) -> None:
        if isinstance(e, Var) and e.name not in scope:
            err(f"unknown variable '{e.name}'")
        if isinstance(e, Const) and e.name not in p.constants:
            err(f"unknown constant '{e.name}'")

    def check_assignment(assignment: Assignment, targets: Sequence[str], scope: Sequence[str]) -> None:
        seen: Set[str] = set()
        for x, e in assignment:
            if x in seen:
                err("duplicate assignment target")
            seen.add(x)
            if x not in targets:
                err(f"assignment target '{x}' is not a local")
            check_expr(e, scope)

    def check_guard(guard: Guard, scope: Sequence[str]) -> None:
        for g in guard:
            if g.left not in scope:
                err(f"unknown variable '{g.left}'")
            check_expr(g.right, scope)

    body = r.body
    locals_ = t.locals
    if isinstance(body, InternalMove):
        check_guard(body.guard, locals_)
        check_assignment(body.assignment, locals_, locals_)
    elif isinstance(body, NameGen):
        if body.target not in locals_:
            err(f"assignment target '{body.target}' is not a local")
    elif isinstance(body, ThreadCreate):
        child = threads.get(body.thread)
        if child is None:
            err(f"run of unknown thread '{body.thread}'")
        else:
            check_assignment(body.assignment, child.locals, locals_)
    else:
        if body.channel == BOT:
            err("channel is bot")
        check_expr(body.channel, locals_)
        if len(set(body.template)) != len(body.template):
            err("duplicate template variable")
        if isinstance(body, Send):
            for x in body.template:
                if x not in locals_:
                    err(f"template variable '{x}' is not a local")
            check_guard(body.guard, locals_)
            check_assignment(body.assignment, locals_, locals_)
        else:
            if any(x in locals_ for x in body.template):
                err("template variable not fresh")
            scope = tuple(locals_) + tuple(body.template)
            check_guard(body.guard, scope)
            check_assignment(body.assignment, locals_, scope)
    return out


def has_errors(diagnostics: Sequence[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)


def is_monadic(p: Program) -> bool:
    """Не более одной локальной переменной и шаблоны не длиннее одной переменной."""
    for t in p.threads:
        if len(t.locals) > 1:
            return False
        for r in t.rules:
            if isinstance(r.body, (Send, Receive)) and len(r.body.template) > 1:
                return False
    return True


# --------- печать ---------

def format_expression(e: Expression) -> str:
    if isinstance(e, (Var, Const)):
        return e.name
    return "bot"


def _format_items(guard: Guard, assignment: Assignment) -> str:
    g = ", ".join(f"{a.left} {a.kind} {format_expression(a.right)}" for a in guard)
    a = ", ".join(f"{x} := {format_expression(e)}" for x, e in assignment)
    if g and a:
        return f" [{g} / {a}]"
    if g or a:
        return f" [{g or a}]"
    return ""


def format_rule(r: TdlRule) -> str:
    body = r.body
    if isinstance(body, (Send, Receive)):
        mark = "!" if isinstance(body, Send) else "?"
        verb = "send" if isinstance(body, Send) else "recv"
        arrow = f"-{verb} {format_expression(body.channel)}{mark}({', '.join(body.template)})->"
        tail = _format_items(body.guard, body.assignment)
    else:
        arrow = f"-{r.label}->"
        if isinstance(body, NameGen):
            tail = f" [{body.target} := new]"
        elif isinstance(body, ThreadCreate):
            with_ = ", ".join(f"{x} := {format_expression(e)}" for x, e in body.assignment)
            tail = f" [run {body.thread}{' with ' + with_ if with_ else ''}]"
        else:
            tail = _format_items(body.guard, body.assignment)
    return f"{r.source} {arrow} {r.target}{tail};"


def pretty_print(p: Program) -> str:
    blocks: List[str] = []
    if p.constants:
        blocks.append(f"const {', '.join(p.constants)};")
    for t in p.threads:
        lines = [f"thread {t.name}({', '.join(t.locals)}) {{", f"  initial {t.initial};"]
        lines.extend(f"  {format_rule(r)}" for r in t.rules)
        lines.append("}")
        blocks.append("\n".join(lines))
    if p.init:
        entries = []
        for e in p.init:
            try:
                arity = len(p.thread(e.thread).locals)
            except KeyError:
                arity = 0
            text = f"{e.thread}({', '.join(['bot'] * arity)})"
            entries.append(text + (f" * {e.count}" if e.count != 1 else ""))
        blocks.append(f"init {{ {', '.join(entries)} }}")
    return "\n\n".join(blocks) + "\n" if blocks else ""

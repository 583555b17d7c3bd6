#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Трансляция TDL -> MSR_NC.

Имена интерпретируются рациональными числами: ⟦⊥⟧ = 0, ⟦c_i⟧ = i.
Каждой управляющей точке соответствует предикат с аргументами-локальными
переменными потока; предикат fresh хранит значение, большее всех имён.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from tdlmc.constraints import Atom, NCConstraint, Term, build, eliminate, eq, gt, is_var
from tdlmc.msr import FRESH, INIT, AtomTemplate, Configuration, GroundAtom, MSRRule, MSRSpec
from tdlmc.simulator import GlobalConfiguration, LocalConfiguration
from tdlmc.tdl import (
    BOT, Assignment, Const, Expression, Guard, InternalMove, NameGen, Program, Receive, Send, TdlRule,
    ThreadCreate, ThreadDef, Var,
)

logger = logging.getLogger(__name__)

ZERO = "zero"


class TranslationError(ValueError):
    pass


@dataclass(frozen=True)
class NameEncoding:
    constants: Tuple[str, ...] = ()

    @property
    def C(self) -> int:
        return len(self.constants)

    def term(self, e: Expression, names: Mapping[str, str]) -> Term:
        if isinstance(e, Var):
            return names.get(e.name, e.name)
        if isinstance(e, Const):
            return self.constants.index(e.name) + 1
        return 0


class _Allocator:
    """Выдаёт имена переменных, не пересекающиеся с уже занятыми."""

    def __init__(self, taken: Iterable[str] = ()) -> None:
        self.taken: Set[str] = set(taken)

    def __call__(self, base: str) -> str:
        name, i = base, 0
        while name in self.taken:
            i += 1
            name = f"{base}{i}"
        self.taken.add(name)
        return name


# --------- охраны и присваивания ---------

def translate_guard(guard: Guard, encoding: NameEncoding = NameEncoding(),
                    names: Optional[Mapping[str, str]] = None) -> List[NCConstraint]:
    """Множество ⟦γ⟧: каждое x≠e расщепляется на e>x и x>e; невыполнимые ветви отбрасываются."""
    names = names or {}
    options: List[List[Atom]] = []
    for g in guard:
        left = names.get(g.left, g.left)
        right = encoding.term(g.right, names)
        if g.kind == "=":
            options.append([eq(left, right)])
        else:
            options.append([gt(right, left), gt(left, right)])
    out: List[NCConstraint] = []
    for combo in itertools.product(*options):
        c = build(combo)
        if c.sat and c not in out:
            out.append(c)
    return out


def translate_assignment(assignment: Assignment, locals_: Sequence[str], encoding: NameEncoding = NameEncoding(),
                         head: Optional[Mapping[str, str]] = None,
                         body: Optional[Mapping[str, str]] = None) -> NCConstraint:
    """⟦α⟧: x'=⟦e⟧ для присваиваемых переменных и x'=x для остальных."""
    head = head or {}
    body = body or {x: f"{x}'" for x in locals_}
    targets = dict(assignment)
    atoms = []
    for x in locals_:
        rhs = encoding.term(targets[x], head) if x in targets else head.get(x, x)
        atoms.append(eq(body[x], rhs))
    return build(atoms)


# --------- трансляция программы ---------

class _Translator:
    def __init__(self, program: Program, self_sync: bool) -> None:
        self.program = program
        self.encoding = NameEncoding(program.constants)
        self.self_sync = self_sync
        self.rules: List[MSRRule] = []
        self.dropped = 0
        self.numbers: Dict[str, int] = {}

    def primed(self, t: ThreadDef) -> Dict[str, str]:
        return {x: f"{x}'" for x in t.locals}

    def atom(self, location: str, names: Mapping[str, str], t: ThreadDef) -> AtomTemplate:
        return AtomTemplate(location, tuple(names[x] for x in t.locals))

    def emit(self, base: str, head: Sequence[AtomTemplate], body: Sequence[AtomTemplate],
             atoms: Iterable[Atom], drop: Iterable[str] = ()) -> bool:
        variables = [x for a in list(head) + list(body) for x in a.args]
        c = build(atoms, variables)
        drop = frozenset(drop)
        if drop:
            c = eliminate(c, drop)
        if not c.sat:
            self.dropped += 1
            return False
        # #k сквозной по всем правилам с общей основой имени
        k = self.numbers.get(base, 0)
        self.numbers[base] = k + 1
        name = base if base == INIT else f"{base}#{k}"
        self.rules.append(MSRRule(name, tuple(head), tuple(body), c))
        return True

    def init_rule(self) -> None:
        alloc = _Allocator(x for t in self.program.threads for x in t.locals)
        f = alloc("x")
        body = [AtomTemplate(FRESH, (f,))]
        atoms = [gt(f, self.encoding.C)]
        for entry in self.program.init:
            t = self.program.thread(entry.thread)
            for _ in range(entry.count):
                args = tuple(alloc(x) for x in t.locals)
                body.append(AtomTemplate(t.initial, args))
                atoms.extend(eq(v, 0) for v in args)
        self.emit(INIT, [AtomTemplate(INIT)], body, atoms)

    def thread_rules(self, t: ThreadDef) -> None:
        ident = {x: x for x in t.locals}
        primed = self.primed(t)
        for r in t.rules:
            base = f"{t.name}.{r.source}->{r.target}"
            body = r.body
            head = [self.atom(r.source, ident, t)]
            if isinstance(body, InternalMove):
                assign = translate_assignment(body.assignment, t.locals, self.encoding, ident, primed)
                for nu in translate_guard(body.guard, self.encoding, ident):
                    self.emit(base, head, [self.atom(r.target, primed, t)], list(nu.atoms()) + list(assign.atoms()))
            elif isinstance(body, NameGen):
                alloc = _Allocator(list(ident) + list(primed.values()))
                u, u2 = alloc("u"), alloc("u'")
                new = primed[body.target]
                atoms = [gt(u2, new), gt(new, u)]
                atoms.extend(eq(primed[x], x) for x in t.locals if x != body.target)
                self.emit(base, head + [AtomTemplate(FRESH, (u,))],
                          [self.atom(r.target, primed, t), AtomTemplate(FRESH, (u2,))], atoms)
            elif isinstance(body, ThreadCreate):
                child = self.program.thread(body.thread)
                alloc = _Allocator(list(ident) + list(primed.values()))
                child_names = {y: alloc(f"{y}'") for y in child.locals}
                targets = dict(body.assignment)
                atoms = [eq(primed[x], x) for x in t.locals]
                for y in child.locals:
                    rhs = self.encoding.term(targets[y], ident) if y in targets else 0
                    atoms.append(eq(child_names[y], rhs))
                self.emit(base, head,
                          [self.atom(r.target, primed, t), self.atom(child.initial, child_names, child)], atoms)
            elif isinstance(body, Send):
                for other in self.program.threads:
                    if other.name != t.name or self.self_sync:
                        for rr in other.rules:
                            if isinstance(rr.body, Receive) and len(rr.body.template) == len(body.template):
                                self.rendezvous(t, r, other, rr)

    def rendezvous(self, t: ThreadDef, send: TdlRule, q: ThreadDef, recv: TdlRule) -> None:
        sb: Send = send.body
        rb: Receive = recv.body
        ident = {x: x for x in t.locals}
        primed = self.primed(t)
        alloc = _Allocator(list(ident) + list(primed.values()))
        if q.name == t.name:
            qhead = {x: alloc(f"{x}_2") for x in q.locals}
        else:
            qhead = {x: alloc(x) for x in q.locals}
        qbody = {x: alloc(f"{qhead[x]}'") for x in q.locals}
        tvars = {w: alloc(w) for w in rb.template}
        qscope = dict(qhead)
        qscope.update(tvars)

        shared = [eq(self.encoding.term(sb.channel, ident), self.encoding.term(rb.channel, qscope))]
        shared.extend(eq(x, tvars[w]) for x, w in zip(sb.template, rb.template))
        shared.extend(translate_assignment(sb.assignment, t.locals, self.encoding, ident, primed).atoms())
        shared.extend(translate_assignment(rb.assignment, q.locals, self.encoding, qscope, qbody).atoms())

        head = [self.atom(send.source, ident, t), self.atom(recv.source, qhead, q)]
        body = [self.atom(send.target, primed, t), self.atom(recv.target, qbody, q)]
        base = f"{t.name}.{send.source}->{send.target}|{q.name}.{recv.source}->{recv.target}"
        for nu in translate_guard(sb.guard, self.encoding, ident):
            for nu2 in translate_guard(rb.guard, self.encoding, qscope):
                atoms = list(nu.atoms()) + list(nu2.atoms()) + shared
                self.emit(base, head, body, atoms, tvars.values())

    def spec(self) -> MSRSpec:
        self.init_rule()
        for t in self.program.threads:
            self.thread_rules(t)
        predicates: Dict[str, int] = {INIT: 0, FRESH: 1}
        locations: Dict[str, str] = {}
        for t in self.program.threads:
            for loc in t.locations:
                predicates[loc] = len(t.locals)
                locations[loc] = t.name
        return MSRSpec(predicates, (Configuration.of([GroundAtom(INIT)]),), tuple(self.rules), locations)


def self_sync_warnings(p: Program) -> List[str]:
    """Определения, где есть send и receive одинаковой арности (синхронизация с собой не транслируется)."""
    out = []
    for t in p.threads:
        sends = {len(r.body.template) for r in t.rules if isinstance(r.body, Send)}
        recvs = {len(r.body.template) for r in t.rules if isinstance(r.body, Receive)}
        if sends & recvs:
            out.append(f"thread {t.name} has a send and an arity-matching receive; "
                       f"rendez-vous between two {t.name} instances is not translated (use --self-sync)")
    return out


def translate_program(p: Program, self_sync: bool = False) -> MSRSpec:
    if not self_sync:
        for w in self_sync_warnings(p):
            logger.warning(w)
    tr = _Translator(p, self_sync)
    spec = tr.spec()
    logger.info("Трансляция: %d правил, отброшено невыполнимых ветвей: %d", len(spec.rules), tr.dropped)
    return spec


# --------- кодирование конфигураций ---------

def encode_global(g: GlobalConfiguration, h: Mapping[int, Fraction],
                  encoding: Optional[NameEncoding] = None) -> Configuration:
    """⟦G⟧(h): атом на каждую локальную конфигурацию плюс fresh(1 + max h)."""
    images = list(h.values())
    if len(set(images)) != len(images):
        raise TranslationError("name mapping is not injective")
    if h.get(0, 0) != 0:
        raise TranslationError("bottom must be mapped to 0")
    if encoding is not None:
        for i in range(1, encoding.C + 1):
            if h.get(i, i) != i:
                raise TranslationError(f"constant name {i} must be mapped to {i}")
    atoms = []
    for p in g.locals:
        try:
            atoms.append(GroundAtom(p.location, tuple(Fraction(h[v]) for v in p.values)))
        except KeyError as e:
            raise TranslationError(f"name {e.args[0]} has no image") from e
    atoms.append(GroundAtom(FRESH, (Fraction(1) + max(images, default=Fraction(0)),)))
    return Configuration.of(atoms)


def decode_config(m: Configuration, f: Mapping[Fraction, int], spec: MSRSpec,
                  used: Iterable[int] = ()) -> GlobalConfiguration:
    fresh = [a for a in m if a.predicate == FRESH]
    if len(fresh) != 1:
        raise TranslationError(f"expected exactly one fresh atom, found {len(fresh)}")
    images = [f[v] for v in f]
    if len(set(images)) != len(images):
        raise TranslationError("value mapping is not injective")
    locals_ = []
    for a in m:
        if a.predicate == FRESH:
            continue
        thread = spec.locations.get(a.predicate)
        if thread is None:
            raise TranslationError(f"unknown predicate {a.predicate}")
        try:
            locals_.append(LocalConfiguration(thread, a.predicate, tuple(f[v] for v in a.args)))
        except KeyError as e:
            raise TranslationError(f"value {e.args[0]} has no name") from e
    names = frozenset(used) | frozenset(images) | {0}
    return GlobalConfiguration(names, tuple(locals_))


# --------- монадический фрагмент ---------

def monadize(spec: MSRSpec) -> MSRSpec:
    """
    Убирает целые константы: значение 0 переносится в атом zero(z),
    который протягивается через все правила, где 0 встречается.
    """
    bad = sorted(f"{p}/{a}" for p, a in spec.predicates.items() if a > 1)
    if bad:
        raise TranslationError(f"not monadic: {', '.join(bad)}")
    rules: List[MSRRule] = []
    for r in spec.rules:
        constants = r.constraint.constants()
        if not constants:
            rules.append(r)
            continue
        alloc = _Allocator(r.variables)
        z = alloc("z")
        is_init = [a.predicate for a in r.head] == [INIT]
        if not is_init and constants - {0}:
            raise TranslationError(
                f"rule {r.name}: constant(s) {', '.join(str(k) for k in sorted(constants - {0}))} "
                f"cannot be expressed in the monadic encoding")

        def sub(t: Term) -> Term:
            return t if is_var(t) else z

        atoms = [type(a)(a.kind, sub(a.left), sub(a.right)) for a in r.constraint.atoms()]
        if is_init:
            head = r.head
            body = r.body + (AtomTemplate(ZERO, (z,)),)
        else:
            z2 = alloc("z'")
            head = r.head + (AtomTemplate(ZERO, (z,)),)
            body = r.body + (AtomTemplate(ZERO, (z2,)),)
            atoms.append(eq(z2, z))
        variables = [x for a in head + body for x in a.args]
        rules.append(MSRRule(r.name, head, body, build(atoms, variables)))
    predicates = dict(spec.predicates)
    predicates[ZERO] = 1
    logger.info("Монадическое кодирование: %d правил", len(rules))
    return MSRSpec(predicates, spec.initial, tuple(rules), dict(spec.locations))

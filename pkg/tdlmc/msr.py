#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MSR с NC-ограничениями: конфигурации, срабатывание правил, Post и
ограниченный перебор достижимых конфигураций.
"""
from __future__ import annotations

import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

from tqdm import tqdm

from tdlmc import config
from tdlmc.constraints import (
    TRUE, Atom, ConstraintError, NCConstraint, Number, build, conjoin_atoms, eq, evaluate,
    format_term, parse_atoms, witness,
)

logger = logging.getLogger(__name__)

INIT = "init"
FRESH = "fresh"


class MsrError(ValueError):
    pass


# === Атомы и конфигурации ===

@dataclass(frozen=True)
class AtomTemplate:
    predicate: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.args)})" if self.args else self.predicate


@dataclass(frozen=True, order=True)
class GroundAtom:
    predicate: str
    args: Tuple[Fraction, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", tuple(Fraction(a) for a in self.args))

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({','.join(format_term(a) for a in self.args)})"


@dataclass(frozen=True)
class Configuration:
    """Мультимножество основных атомов (хранится отсортированным)."""
    atoms: Tuple[GroundAtom, ...] = ()

    @classmethod
    def of(cls, atoms: Iterable[GroundAtom]) -> "Configuration":
        return cls(tuple(sorted(atoms)))

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator[GroundAtom]:
        return iter(self.atoms)

    def plus(self, other: Iterable[GroundAtom]) -> "Configuration":
        return Configuration.of(list(self.atoms) + list(other))

    def minus(self, other: Iterable[GroundAtom]) -> "Configuration":
        left = Counter(self.atoms)
        left.subtract(Counter(other))
        if any(n < 0 for n in left.values()):
            raise MsrError("multiset difference of a non-included multiset")
        return Configuration.of(left.elements())

    def includes(self, other: Iterable[GroundAtom]) -> bool:
        have = Counter(self.atoms)
        need = Counter(other)
        return all(have[a] >= n for a, n in need.items())

    def values(self) -> Set[Fraction]:
        return {v for a in self.atoms for v in a.args}

    def __str__(self) -> str:
        return " | ".join(str(a) for a in self.atoms) if self.atoms else "ε"


# === Правила и спецификация ===

@dataclass(frozen=True)
class MSRRule:
    name: str
    head: Tuple[AtomTemplate, ...]
    body: Tuple[AtomTemplate, ...]
    constraint: NCConstraint = TRUE

    def __post_init__(self) -> None:
        names = [x for a in self.head + self.body for x in a.args]
        if len(set(names)) != len(names):
            dup = sorted({x for x in names if names.count(x) > 1})
            raise MsrError(f"rule {self.name}: variables not pairwise distinct: {', '.join(dup)}")
        extra = self.constraint.mentioned() - set(names)
        if extra:
            raise MsrError(f"rule {self.name}: constraint mentions foreign variables {', '.join(sorted(extra))}")

    @property
    def variables(self) -> FrozenSet[str]:
        return frozenset(x for a in self.head + self.body for x in a.args)

    def __str__(self) -> str:
        head = " | ".join(str(a) for a in self.head) or "()"
        body = " | ".join(str(a) for a in self.body) or "()"
        return f"{self.name}: {head} -> {body} : {self.constraint}"


@dataclass(frozen=True)
class MSRSpec:
    predicates: Mapping[str, int]
    initial: Tuple[Configuration, ...]
    rules: Tuple[MSRRule, ...]
    locations: Mapping[str, str] = field(default_factory=dict)  # предикат -> поток

    def __post_init__(self) -> None:
        for r in self.rules:
            for a in r.head + r.body:
                self._check(a.predicate, len(a.args), r.name)
        for m in self.initial:
            for a in m:
                self._check(a.predicate, len(a.args), "init")

    def _check(self, predicate: str, arity: int, where: str) -> None:
        if predicate not in self.predicates:
            raise MsrError(f"{where}: undeclared predicate {predicate}")
        if self.predicates[predicate] != arity:
            raise MsrError(f"{where}: {predicate} has arity {self.predicates[predicate]}, used with {arity}")

    def rule(self, name: str) -> MSRRule:
        for r in self.rules:
            if r.name == name:
                return r
        raise MsrError(f"unknown rule {name}")

    def constants(self) -> Tuple[Number, ...]:
        ks: Set[Number] = set()
        for r in self.rules:
            ks.update(r.constraint.constants())
        return tuple(sorted(ks))


# --------- срабатывание ---------

def instantiate(atoms: Iterable[AtomTemplate], sigma: Mapping[str, Number]) -> List[GroundAtom]:
    return [GroundAtom(a.predicate, tuple(sigma[x] for x in a.args)) for a in atoms]


def fire(r: MSRRule, m: Configuration, sigma: Mapping[str, Number]) -> Configuration:
    try:
        ok = evaluate(r.constraint, sigma)
    except ConstraintError as e:
        raise MsrError(f"rule {r.name}: {e}") from e
    if not ok:
        raise MsrError(f"rule {r.name}: substitution violates the constraint {r.constraint}")
    try:
        head = instantiate(r.head, sigma)
        body = instantiate(r.body, sigma)
    except KeyError as e:
        raise MsrError(f"rule {r.name}: no binding for variable {e.args[0]}") from e
    if not m.includes(head):
        raise MsrError(f"rule {r.name}: instantiated head is not included in the configuration")
    return m.minus(head).plus(body)


def placements(templates: Sequence[AtomTemplate], atoms: Sequence[GroundAtom]) -> Iterator[Tuple[int, ...]]:
    """Инъективные размещения шаблонов по позициям атомов (лексикографически)."""
    n = len(templates)
    chosen: List[int] = []
    used = [False] * len(atoms)

    def rec(k: int) -> Iterator[Tuple[int, ...]]:
        if k == n:
            yield tuple(chosen)
            return
        t = templates[k]
        for i, a in enumerate(atoms):
            if used[i] or a.predicate != t.predicate or len(a.args) != len(t.args):
                continue
            used[i] = True
            chosen.append(i)
            yield from rec(k + 1)
            chosen.pop()
            used[i] = False

    yield from rec(0)


def bind(templates: Sequence[AtomTemplate], atoms: Sequence[GroundAtom], pos: Sequence[int]) -> Dict[str, Fraction]:
    return {x: v for t, i in zip(templates, pos) for x, v in zip(t.args, atoms[i].args)}


def enabled_instances(r: MSRRule, m: Configuration) -> List[Dict[str, Fraction]]:
    out: List[Dict[str, Fraction]] = []
    seen: Set[Tuple] = set()
    atoms = m.atoms
    for pos in placements(r.head, atoms):
        key = tuple(atoms[i] for i in pos)
        if key in seen:
            continue
        seen.add(key)
        sigma = witness(r.constraint, bind(r.head, atoms, pos))
        if sigma is not None:
            out.append(sigma)
    return out


def post(m: Configuration, spec: MSRSpec) -> List[Tuple[str, Configuration]]:
    """Преемники с каноническими свидетелями, в порядке правил."""
    out: List[Tuple[str, Configuration]] = []
    for r in spec.rules:
        for sigma in enabled_instances(r, m):
            out.append((r.name, fire(r, m, sigma)))
    return out


def find_step(spec: MSRSpec, m: Configuration, m_next: Configuration) -> Optional[Tuple[MSRRule, Dict[str, Fraction]]]:
    """Правило и подстановка, для которых m ⇒ m_next за один шаг."""
    atoms = m.atoms
    for r in spec.rules:
        for pos in placements(r.head, atoms):
            sigma = bind(r.head, atoms, pos)
            rest = m.minus(atoms[i] for i in pos)
            if not m_next.includes(rest.atoms):
                continue
            produced = m_next.minus(rest.atoms).atoms
            if len(produced) != len(r.body):
                continue
            for bpos in placements(r.body, produced):
                full = dict(sigma)
                full.update(bind(r.body, produced, bpos))
                if evaluate(r.constraint, full):
                    return r, full
    return None


def fire_into(r: MSRRule, m: Configuration, pattern: Sequence[AtomTemplate],
              constraint: NCConstraint) -> Optional[Tuple[Configuration, Dict[str, Fraction]]]:
    """
    Срабатывание r в m, при котором результат покрывает шаблон (pattern : constraint).
    Переменные шаблона должны быть отделены от переменных правила.
    """
    atoms = m.atoms
    for pos in placements(r.head, atoms):
        fixed = bind(r.head, atoms, pos)
        rest = m.minus(atoms[i] for i in pos).atoms
        # результат: шаблоны тела (символьно) плюс остаток (конкретно)
        slots: List[Tuple[str, object]] = [("body", b) for b in r.body] + [("rest", a) for a in rest]
        for choice in _cover(pattern, slots):
            eqs: List[Atom] = []
            pinned = dict(fixed)
            for t, (kind, target) in zip(pattern, choice):
                if kind == "body":
                    eqs.extend(eq(x, y) for x, y in zip(t.args, target.args))
                else:
                    pinned.update(zip(t.args, target.args))
            joint = conjoin_atoms(r.constraint, eqs + list(constraint.atoms()),
                                  constraint.variables | r.variables)
            sigma = witness(joint, pinned)
            if sigma is None:
                continue
            return fire(r, m, sigma), sigma
    return None


def _cover(pattern: Sequence[AtomTemplate], slots: Sequence[Tuple[str, object]]) -> Iterator[List[Tuple[str, object]]]:
    chosen: List[Tuple[str, object]] = []
    used = [False] * len(slots)

    def rec(k: int) -> Iterator[List[Tuple[str, object]]]:
        if k == len(pattern):
            yield list(chosen)
            return
        t = pattern[k]
        for i, (kind, target) in enumerate(slots):
            if used[i] or target.predicate != t.predicate or len(target.args) != len(t.args):
                continue
            used[i] = True
            chosen.append((kind, target))
            yield from rec(k + 1)
            chosen.pop()
            used[i] = False

    yield from rec(0)


# --------- ограниченный перебор ---------

def normalize(m: Configuration, constants: Sequence[Number]) -> Configuration:
    """
    Порядково-изоморфное переименование значений, сохраняющее целые константы:
    значения между константами распределяются равномерно, значения выше
    наибольшей константы становятся C+1, C+2, ...
    """
    ks = sorted(Fraction(k) for k in constants)
    fixed = set(ks)
    free = sorted(v for v in m.values() if v not in fixed)
    image: Dict[Fraction, Fraction] = {k: k for k in ks}
    if not ks:
        image.update({v: Fraction(i) for i, v in enumerate(free)})
    else:
        below = [v for v in free if v < ks[0]]
        image.update({v: ks[0] - len(below) + i for i, v in enumerate(below)})
        for lo, hi in zip(ks, ks[1:]):
            gap = [v for v in free if lo < v < hi]
            image.update({v: lo + (hi - lo) * (i + 1) / (len(gap) + 1) for i, v in enumerate(gap)})
        above = [v for v in free if v > ks[-1]]
        image.update({v: ks[-1] + i + 1 for i, v in enumerate(above)})
    return Configuration.of(GroundAtom(a.predicate, tuple(image[v] for v in a.args)) for a in m)


@dataclass
class Exploration:
    configurations: List[Configuration]
    truncated: bool = False
    hit: Optional[Configuration] = None
    parents: Dict[Configuration, Tuple[Optional[Configuration], str]] = field(default_factory=dict)

    def path_to(self, m: Configuration) -> List[Tuple[str, Configuration]]:
        out = []
        cur: Optional[Configuration] = m
        while cur is not None:
            parent, rule = self.parents[cur]
            out.append((rule, cur))
            cur = parent
        return list(reversed(out))


def post_star_bounded(spec: MSRSpec, max_atoms: int, value_cap: Number, max_configs: int,
                      stop: Optional[Callable[[Configuration], bool]] = None,
                      threads: Optional[int] = None, progress: bool = False) -> Exploration:
    """Поиск в ширину по конфигурациям с не более max_atoms атомами и значениями ≤ value_cap."""
    constants = spec.constants()
    cap = Fraction(value_cap)
    threads = max(1, threads or config.THREADS)

    def admissible(m: Configuration) -> bool:
        return len(m) <= max_atoms and all(v <= cap for v in m.values())

    result = Exploration([])
    frontier: List[Configuration] = []
    for m0 in spec.initial:
        m0 = normalize(m0, constants)
        if admissible(m0) and m0 not in result.parents:
            result.parents[m0] = (None, "")
            frontier.append(m0)

    def expand(m: Configuration) -> List[Tuple[str, Configuration]]:
        return [(name, normalize(n, constants)) for name, n in post(m, spec)]

    for m0 in frontier:
        if stop is not None and stop(m0):
            result.hit = m0
            result.configurations = list(result.parents)
            return result

    bar = tqdm(desc="post*", unit="conf", disable=not progress)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        while frontier and result.hit is None and not result.truncated:
            level: List[Configuration] = []
            for m, succ in zip(frontier, pool.map(expand, frontier)):
                for name, n in succ:
                    if n in result.parents or not admissible(n):
                        continue
                    result.parents[n] = (m, name)
                    level.append(n)
                    bar.update(1)
                    if stop is not None and stop(n):
                        result.hit = n
                        break
                    if len(result.parents) >= max_configs:
                        result.truncated = True
                        break
                if result.hit is not None or result.truncated:
                    break
            frontier = sorted(level)
    bar.close()
    result.configurations = sorted(result.parents, key=lambda c: c.atoms)
    if result.truncated:
        logger.warning("Перебор усечён на %d конфигурациях", len(result.parents))
    logger.info("Ограниченный перебор: %d конфигураций, усечён=%s, найдено=%s",
                len(result.parents), result.truncated, result.hit is not None)
    return result


# --------- текстовый формат ---------

_ATOM_RE = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(?:\(([^)]*)\))?\s*$")
_COMMENT_RE = re.compile(r"(?:^|\s)#")


def format_spec(spec: MSRSpec) -> str:
    lines = [f"init {m}" for m in spec.initial]
    lines.extend(str(r) for r in spec.rules)
    return "\n".join(lines) + "\n"


def split_top(text: str, sep: str) -> List[str]:
    # разделитель вне скобок
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_templates(text: str) -> List[AtomTemplate]:
    text = text.strip()
    if text in ("", "()", "ε"):
        return []
    out = []
    for part in split_top(text, "|"):
        m = _ATOM_RE.match(part)
        if not m:
            raise MsrError(f"bad atom {part.strip()!r}")
        args = [x.strip() for x in (m.group(2) or "").split(",") if x.strip()]
        out.append(AtomTemplate(m.group(1), tuple(args)))
    return out


def parse_ground(text: str) -> Configuration:
    atoms = []
    for t in parse_templates(text):
        try:
            atoms.append(GroundAtom(t.predicate, tuple(Fraction(a) for a in t.args)))
        except ValueError as e:
            raise MsrError(f"bad ground value in {t}") from e
    return Configuration.of(atoms)


def parse_spec(text: str) -> MSRSpec:
    """Разбор текстового формата: `name: H -> B : atoms` и строки `init <атомы>`."""
    rules: List[MSRRule] = []
    initial: List[Configuration] = []
    predicates: Dict[str, int] = {}

    def declare(predicate: str, arity: int, where: str) -> None:
        if predicates.setdefault(predicate, arity) != arity:
            raise MsrError(f"{where}: inconsistent arity for {predicate}")

    for n, line in enumerate(text.splitlines(), 1):
        # `#` внутри имени правила (A.s->t#0) комментарием не считается
        line = _COMMENT_RE.split(line, 1)[0].strip()
        if not line:
            continue
        if "->" not in line.partition(":")[2]:
            if not line.startswith("init "):
                raise MsrError(f"line {n}: expected a rule or an init line")
            m = parse_ground(line[len("init "):])
            for a in m:
                declare(a.predicate, len(a.args), f"line {n}")
            initial.append(m)
            continue
        name, _, rest = line.partition(":")
        lhs, _, rhs = rest.partition("->")
        body_text, _, constraint_text = rhs.partition(":")
        head, body = parse_templates(lhs), parse_templates(body_text)
        for a in head + body:
            declare(a.predicate, len(a.args), f"line {n}")
        try:
            constraint = build(parse_atoms(constraint_text), [x for a in head + body for x in a.args])
        except ConstraintError as e:
            raise MsrError(f"line {n}: {e}") from e
        rules.append(MSRRule(name.strip(), tuple(head), tuple(body), constraint))
    return MSRSpec(predicates, tuple(initial), tuple(rules))

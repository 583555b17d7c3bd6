# tdlmc/constraints.py
#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NC-ограничения: конъюнкции атомов x=y, x>y, x=c, x>c (и c>x) над рациональными числами.

Ограничение всегда хранится в замкнутой канонической форме:
классы равенства плюс транзитивно замкнутый строгий порядок между
представителями классов. Константы участвуют в графе как обычные
вершины, их числовой порядок добавляется заранее.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Number = Union[int, Fraction]
Term = Union[str, int, Fraction]


class ConstraintError(ValueError):
    """Недопустимая операция над ограничением."""


def is_var(t: Term) -> bool:
    return isinstance(t, str)


def as_number(v: Union[int, Fraction, str]) -> Number:
    """Приводит числовое значение к int, если оно целое."""
    if isinstance(v, str):
        v = Fraction(v)
    if isinstance(v, Fraction) and v.denominator == 1:
        return int(v.numerator)
    return v


def format_term(t: Term) -> str:
    if is_var(t):
        return t
    n = as_number(t)
    return str(n) if isinstance(n, int) else f"{n.numerator}/{n.denominator}"


def term_key(t: Term):
    # константы раньше переменных
    if is_var(t):
        return (1, 0, t)
    return (0, t, "")


class Atom(NamedTuple):
    kind: str  # "=" или ">"
    left: Term
    right: Term

    def __str__(self) -> str:
        left, right = self.left, self.right
        if self.kind == "=" and not is_var(left) and is_var(right):
            left, right = right, left
        return f"{format_term(left)}{self.kind}{format_term(right)}"

    def terms(self) -> Tuple[Term, Term]:
        return (self.left, self.right)


def eq(a: Term, b: Term) -> Atom:
    return Atom("=", a, b)


def gt(a: Term, b: Term) -> Atom:
    return Atom(">", a, b)


# --------- замыкание графа порядка ---------

class _Closure:
    """Классы равенства термов и транзитивное замыкание строгого порядка (Уоршелл на numpy)."""

    def __init__(self, atoms: Iterable[Atom], variables: Iterable[str] = (),
                 constants: Iterable[Number] = ()) -> None:
        index: Dict[Term, int] = {}
        terms: List[Term] = []

        def node(t: Term) -> int:
            if not is_var(t):
                t = as_number(t)
            i = index.get(t)
            if i is None:
                i = index[t] = len(terms)
                terms.append(t)
            return i

        atoms = list(atoms)
        for v in variables:
            node(v)
        for k in constants:
            node(k)
        edges = []
        parent = list(range(len(terms)))
        for a in atoms:
            i, j = node(a.left), node(a.right)
            parent.extend(range(len(parent), len(terms)))
            if a.kind == "=":
                ri, rj = self._find(parent, i), self._find(parent, j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
            elif a.kind == ">":
                edges.append((i, j))
            else:
                raise ConstraintError(f"unknown atom kind {a.kind!r}")

        roots: Dict[int, int] = {}
        members: List[List[Term]] = []
        class_of: Dict[Term, int] = {}
        for i, t in enumerate(terms):
            r = self._find(parent, i)
            cid = roots.get(r)
            if cid is None:
                cid = roots[r] = len(members)
                members.append([])
            members[cid].append(t)
            class_of[t] = cid

        self.sat = True
        const: List[Optional[Number]] = []
        for ms in members:
            ks = [t for t in ms if not is_var(t)]
            if len(ks) > 1:
                self.sat = False
            const.append(ks[0] if ks else None)

        n = len(members)
        matrix = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            matrix[class_of[terms[i]], class_of[terms[j]]] = True
        seeded = sorted((k, cid) for cid, k in enumerate(const) if k is not None)
        for (_, lo), (_, hi) in zip(seeded, seeded[1:]):
            matrix[hi, lo] = True
        for k in range(n):
            matrix |= np.outer(matrix[:, k], matrix[k, :])
        if n and matrix.diagonal().any():
            self.sat = False

        self.members = [sorted(ms, key=term_key) for ms in members]
        self.const = const
        self.class_of = class_of
        self.matrix = matrix

    @staticmethod
    def _find(parent: List[int], i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    @cached_property
    def lower(self) -> List[Optional[Tuple[Number, bool]]]:
        # наибольшая константа не выше класса: (значение, строго)
        out = []
        for cid, k in enumerate(self.const):
            if k is not None:
                out.append((k, False))
                continue
            below = [self.const[b] for b in np.flatnonzero(self.matrix[cid]) if self.const[b] is not None]
            out.append((max(below), True) if below else None)
        return out

    @cached_property
    def upper(self) -> List[Optional[Tuple[Number, bool]]]:
        out = []
        for cid, k in enumerate(self.const):
            if k is not None:
                out.append((k, False))
                continue
            above = [self.const[b] for b in np.flatnonzero(self.matrix[:, cid]) if self.const[b] is not None]
            out.append((min(above), True) if above else None)
        return out


# --------- каноническая форма ---------

@dataclass(frozen=True)
class NCConstraint:
    """
    Замкнутое NC-ограничение.

    classes: классы равенства, содержащие хотя бы одну переменную
    (представитель: первый элемент, константы идут первыми);
    order: пары (старший, младший) представителей, замкнутые транзитивно;
    для границ-констант хранится только самая точная.
    """
    sat: bool
    variables: FrozenSet[str]
    classes: Tuple[Tuple[Term, ...], ...] = ()
    order: FrozenSet[Tuple[Term, Term]] = frozenset()

    def atoms(self) -> Tuple[Atom, ...]:
        if not self.sat:
            return (gt(0, 0),)
        out = [eq(cls[0], t) for cls in self.classes for t in cls[1:]]
        out.extend(gt(h, l) for h, l in sorted(self.order, key=lambda p: (term_key(p[0]), term_key(p[1]))))
        return tuple(out)

    def constants(self) -> FrozenSet[Number]:
        ks = {t for cls in self.classes for t in cls if not is_var(t)}
        ks.update(t for pair in self.order for t in pair if not is_var(t))
        return frozenset(ks)

    def mentioned(self) -> FrozenSet[str]:
        """Переменные, реально связанные хоть одним атомом."""
        out = {t for cls in self.classes if len(cls) > 1 for t in cls if is_var(t)}
        out.update(t for pair in self.order for t in pair if is_var(t))
        return frozenset(out)

    def __str__(self) -> str:
        if not self.sat:
            return "false"
        atoms = self.atoms()
        return ", ".join(str(a) for a in atoms) if atoms else "true"

    @cached_property
    def _graph(self) -> _Closure:
        return _Closure(self.atoms(), self.variables)

    def implies(self, atom: Atom) -> bool:
        """Следует ли атом из ограничения (константы атома могут отсутствовать в графе)."""
        if not self.sat:
            return True
        left, right = atom.left, atom.right
        if not is_var(left):
            left = as_number(left)
        if not is_var(right):
            right = as_number(right)
        g = self._graph
        if atom.kind == "=":
            if left == right:
                return True
            cl, cr = g.class_of.get(left), g.class_of.get(right)
            return cl is not None and cl == cr
        cl, cr = g.class_of.get(left), g.class_of.get(right)
        if cl is not None and cr is not None and g.matrix[cl, cr]:
            return True
        lo = (left, False) if not is_var(left) else (g.lower[cl] if cl is not None else None)
        hi = (right, False) if not is_var(right) else (g.upper[cr] if cr is not None else None)
        if lo is None or hi is None:
            return False
        return lo[0] > hi[0] or (lo[0] == hi[0] and (lo[1] or hi[1]))


def _canonical(cl: _Closure, keep: FrozenSet[str]) -> NCConstraint:
    if not cl.sat:
        return NCConstraint(False, keep)
    var_classes: List[Tuple[int, Tuple[Term, ...]]] = []
    for cid, ms in enumerate(cl.members):
        vs = [t for t in ms if is_var(t) and t in keep]
        if vs:
            k = cl.const[cid]
            var_classes.append((cid, tuple(([k] if k is not None else []) + vs)))
    rep = {cid: ms[0] for cid, ms in var_classes}
    const_cids = [cid for cid, k in enumerate(cl.const) if k is not None]
    order = set()
    for a, ra in rep.items():
        row = cl.matrix[a]
        for b, rb in rep.items():
            if row[b] and (is_var(ra) or is_var(rb)):
                order.add((ra, rb))
        if not is_var(ra):
            continue
        lows = [cl.const[c] for c in const_cids if row[c]]
        if lows:
            order.add((ra, max(lows)))
        highs = [cl.const[c] for c in const_cids if cl.matrix[c, a]]
        if highs:
            order.add((min(highs), ra))
    classes = tuple(sorted((ms for _, ms in var_classes), key=lambda ms: term_key(ms[0])))
    return NCConstraint(True, keep, classes, frozenset(order))


def _vars_of(atoms: Iterable[Atom]) -> FrozenSet[str]:
    return frozenset(t for a in atoms for t in a.terms() if is_var(t))


TRUE = NCConstraint(True, frozenset())
FALSE = NCConstraint(False, frozenset())


def build(atoms: Iterable[Atom], variables: Iterable[str] = ()) -> NCConstraint:
    """Строит замкнутое ограничение из атомов; variables: дополнительные свободные переменные."""
    atoms = list(atoms)
    keep = _vars_of(atoms) | frozenset(variables)
    return _canonical(_Closure(atoms, keep), keep)


def conjoin(a: NCConstraint, *others: NCConstraint) -> NCConstraint:
    parts = (a,) + others
    keep = frozenset().union(*(c.variables for c in parts))
    if not all(c.sat for c in parts):
        return NCConstraint(False, keep)
    atoms = [x for c in parts for x in c.atoms()]
    return _canonical(_Closure(atoms, keep), keep)


def conjoin_atoms(c: NCConstraint, atoms: Iterable[Atom], variables: Iterable[str] = ()) -> NCConstraint:
    atoms = list(atoms)
    keep = c.variables | _vars_of(atoms) | frozenset(variables)
    if not c.sat:
        return NCConstraint(False, keep)
    return _canonical(_Closure(list(c.atoms()) + atoms, keep), keep)


def is_satisfiable(c: NCConstraint) -> bool:
    return c.sat


def eliminate(c: NCConstraint, drop: Iterable[str]) -> NCConstraint:
    """Проекция: существование значений для переменных из drop."""
    drop = frozenset(drop)
    keep = c.variables - drop
    if not c.sat:
        return NCConstraint(False, keep)
    if not (drop & c.variables):
        return c
    return _canonical(c._graph, keep)


def restrict(c: NCConstraint, keep: Iterable[str]) -> NCConstraint:
    return eliminate(c, c.variables - frozenset(keep))


def entails(a: NCConstraint, b: NCConstraint) -> bool:
    """Sol(a) ⊆ Sol(b)."""
    if not a.sat:
        return True
    if not b.sat:
        return False
    return all(a.implies(atom) for atom in b.atoms())


def rename(c: NCConstraint, mapping: Mapping[str, str]) -> NCConstraint:
    images = [mapping.get(v, v) for v in c.variables]
    if len(set(images)) != len(images):
        raise ConstraintError(f"non-injective renaming of {sorted(c.variables)}")
    new_vars = frozenset(images)
    if not c.sat:
        return NCConstraint(False, new_vars)

    def m(t: Term) -> Term:
        return mapping.get(t, t) if is_var(t) else t

    rep: Dict[Term, Term] = {}
    classes = []
    for cls in c.classes:
        new_cls = tuple(sorted((m(t) for t in cls), key=term_key))
        rep[cls[0]] = new_cls[0]
        classes.append(new_cls)
    order = frozenset((rep.get(h, h), rep.get(l, l)) for h, l in c.order)
    classes.sort(key=lambda ms: term_key(ms[0]))
    return NCConstraint(True, new_vars, tuple(classes), order)


def evaluate(c: NCConstraint, sigma: Mapping[str, Number]) -> bool:
    missing = sorted(v for v in c.variables if v not in sigma)
    if missing:
        raise ConstraintError(f"no binding for variable(s) {', '.join(missing)}")
    if not c.sat:
        return False

    def val(t: Term) -> Number:
        return sigma[t] if is_var(t) else t

    for cls in c.classes:
        first = val(cls[0])
        if any(val(t) != first for t in cls[1:]):
            return False
    return all(val(h) > val(l) for h, l in c.order)


def canonicalize(c: NCConstraint) -> NCConstraint:
    if not c.sat:
        return NCConstraint(False, c.variables)
    return _canonical(_Closure(c.atoms(), c.variables), c.variables)


def witness(c: NCConstraint, fixed: Optional[Mapping[str, Number]] = None) -> Optional[Dict[str, Fraction]]:
    """
    Каноническое решение, продолжающее fixed, или None.
    Свободные классы получают floor(нижней границы)+1, если это ниже
    верхней границы, иначе середину интервала.
    """
    fixed = dict(fixed or {})
    if not c.sat:
        return None
    atoms = list(c.atoms()) + [eq(v, as_number(Fraction(x))) for v, x in fixed.items()]
    cl = _Closure(atoms, c.variables | frozenset(fixed))
    if not cl.sat:
        return None
    values: Dict[int, Fraction] = {cid: Fraction(k) for cid, k in enumerate(cl.const) if k is not None}
    free = [cid for cid, k in enumerate(cl.const) if k is None]
    free.sort(key=lambda cid: (int(cl.matrix[cid].sum()), cid))
    for cid in free:
        below = [values[b] for b in np.flatnonzero(cl.matrix[cid]) if b in values]
        above = [Fraction(cl.const[b]) for b in np.flatnonzero(cl.matrix[:, cid]) if cl.const[b] is not None]
        lo = max(below) if below else None
        hi = min(above) if above else None
        if lo is None:
            v = Fraction(0) if hi is None or hi > 0 else hi - 1
        else:
            v = Fraction(math.floor(lo) + 1)
            if hi is not None and v >= hi:
                v = (lo + hi) / 2
        values[cid] = v
    variables = c.variables | frozenset(fixed)
    return {v: values[cl.class_of[v]] for v in variables}


# --------- текстовый формат ---------

_TERM = r"-?\d+(?:/\d+)?|[A-Za-z_][\w.']*"
_ATOM_RE = re.compile(rf"^\s*({_TERM})\s*(=|>|<)\s*({_TERM})\s*$")


def parse_term(text: str) -> Term:
    text = text.strip()
    if re.fullmatch(r"-?\d+(?:/\d+)?", text):
        return as_number(Fraction(text))
    return text


def parse_atoms(text: str) -> List[Atom]:
    """Разбор списка `x=y, x>3, 3>x`; `true` даёт пустую конъюнкцию, `false` противоречие."""
    out: List[Atom] = []
    for part in text.split(","):
        part = part.strip()
        if not part or part == "true":
            continue
        if part == "false":
            out.append(gt(0, 0))
            continue
        m = _ATOM_RE.match(part)
        if not m:
            raise ConstraintError(f"bad constraint atom {part!r}")
        left, op, right = parse_term(m.group(1)), m.group(2), parse_term(m.group(3))
        if op == "<":
            out.append(gt(right, left))
        else:
            out.append(Atom(op, left, right))
    return out


def parse_constraint(text: str, variables: Sequence[str] = ()) -> NCConstraint:
    return build(parse_atoms(text), variables)

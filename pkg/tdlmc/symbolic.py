#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Символьная обратная достижимость для MSR_NC.

Ограниченная конфигурация (atoms : constraint) обозначает замыкание вверх
(по включению мультимножеств) своих основных экземпляров.
"""
from __future__ import annotations

import enum
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from tdlmc import config
from tdlmc.constraints import (
    TRUE, Atom, ConstraintError, NCConstraint, conjoin, conjoin_atoms, eliminate, eq, evaluate, is_var,
    parse_atoms, rename, restrict,
)
from tdlmc.msr import (
    AtomTemplate, Configuration, MSRRule, MSRSpec, MsrError, bind, fire_into, parse_templates,
    placements, split_top,
)

logger = logging.getLogger(__name__)


class SymbolicError(ValueError):
    pass


class ReplayError(RuntimeError):
    pass


# === Ограниченные конфигурации ===

@dataclass(frozen=True)
class ConstrainedConfiguration:
    atoms: Tuple[AtomTemplate, ...]
    constraint: NCConstraint = TRUE

    @classmethod
    def make(cls, atoms: Iterable[AtomTemplate],
             constraint: NCConstraint = TRUE) -> Optional["ConstrainedConfiguration"]:
        """
        Нормализует пару: повторные переменные заменяются равенствами, лишние
        переменные исключаются, атомы сортируются по предикату, переменные
        переименовываются в x<атом>_<аргумент>. Невыполнимая пара даёт None.
        """
        seen = set()
        extra: List[Atom] = []
        atoms_ = []
        for a in atoms:
            args = []
            for x in a.args:
                if x in seen:
                    y = f"{x}#{len(extra)}"
                    extra.append(eq(y, x))
                    x = y
                seen.add(x)
                args.append(x)
            atoms_.append(AtomTemplate(a.predicate, tuple(args)))
        c = conjoin_atoms(constraint, extra, seen)
        if not c.sat:
            return None
        c = restrict(c, seen)
        atoms_.sort(key=lambda a: a.predicate)
        mapping: Dict[str, str] = {}
        out = []
        for i, a in enumerate(atoms_):
            names = tuple(f"x{i}_{j}" for j in range(len(a.args)))
            mapping.update(zip(a.args, names))
            out.append(AtomTemplate(a.predicate, names))
        return cls(tuple(out), rename(c, mapping))

    @property
    def variables(self) -> List[str]:
        return [x for a in self.atoms for x in a.args]

    def renamed(self, prefix: str) -> "ConstrainedConfiguration":
        mapping = {x: prefix + x for x in self.variables}
        atoms = tuple(AtomTemplate(a.predicate, tuple(mapping[x] for x in a.args)) for a in self.atoms)
        return ConstrainedConfiguration(atoms, rename(self.constraint, mapping))

    def __str__(self) -> str:
        atoms = " | ".join(str(a) for a in self.atoms) or "()"
        return f"{atoms} : {self.constraint}"


CC = ConstrainedConfiguration


def member(cc: ConstrainedConfiguration, m: Configuration) -> bool:
    """m ∈ ⟦cc⟧: атомы cc инъективно вкладываются в m, а значения удовлетворяют ограничению."""
    for pos in placements(cc.atoms, m.atoms):
        if evaluate(cc.constraint, bind(cc.atoms, m.atoms, pos)):
            return True
    return False


def match_theta(part: Sequence[AtomTemplate], phi: NCConstraint,
                target: Sequence[AtomTemplate], psi: NCConstraint) -> List[NCConstraint]:
    """Все выполнимые θ = φ ∧ ψ ∧ попарные равенства аргументов, по перестановкам target."""
    if len(part) != len(target):
        raise SymbolicError(f"cannot match {len(part)} atoms against {len(target)}")
    base = conjoin(phi, psi)
    out: List[NCConstraint] = []
    if not base.sat:
        return out
    for perm in itertools.permutations(range(len(target))):
        eqs: List[Atom] = []
        for a, j in zip(part, perm):
            b = target[j]
            if a.predicate != b.predicate or len(a.args) != len(b.args):
                break
            eqs.extend(eq(x, y) for x, y in zip(a.args, b.args))
        else:
            theta = conjoin_atoms(base, eqs)
            if theta.sat and theta not in out:
                out.append(theta)
    return out


def _overlaps(m: Sequence[AtomTemplate], b: Sequence[AtomTemplate]) -> Iterator[List[Tuple[int, int]]]:
    """Частичные инъективные сопоставления атомов m атомам b (включая пустое)."""
    chosen: List[Tuple[int, int]] = []
    used = [False] * len(b)

    def rec(i: int) -> Iterator[List[Tuple[int, int]]]:
        if i == len(m):
            yield list(chosen)
            return
        yield from rec(i + 1)
        for j, bj in enumerate(b):
            if used[j] or bj.predicate != m[i].predicate or len(bj.args) != len(m[i].args):
                continue
            used[j] = True
            chosen.append((i, j))
            yield from rec(i + 1)
            chosen.pop()
            used[j] = False

    yield from rec(0)


def pre_rule(r: MSRRule, cc: ConstrainedConfiguration,
             with_empty_overlap: bool = True) -> List[ConstrainedConfiguration]:
    """Pre одного правила для одной ограниченной конфигурации."""
    rmap = {x: f"r.{x}" for x in r.variables}
    head = [AtomTemplate(a.predicate, tuple(rmap[x] for x in a.args)) for a in r.head]
    body = [AtomTemplate(a.predicate, tuple(rmap[x] for x in a.args)) for a in r.body]
    src = cc.renamed("m.")
    base = conjoin(rename(r.constraint, rmap), src.constraint)
    out: List[ConstrainedConfiguration] = []
    if not base.sat:
        return out
    for pairs in _overlaps(src.atoms, body):
        if not pairs and not with_empty_overlap:
            continue
        eqs = [eq(x, y) for i, j in pairs for x, y in zip(src.atoms[i].args, body[j].args)]
        theta = conjoin_atoms(base, eqs)
        if not theta.sat:
            continue
        matched = {i for i, _ in pairs}
        atoms = head + [a for i, a in enumerate(src.atoms) if i not in matched]
        keep = {x for a in atoms for x in a.args}
        result = CC.make(atoms, eliminate(theta, theta.variables - keep))
        if result is not None and result not in out:
            out.append(result)
    return out


def pre_member(rules: Sequence[MSRRule], cc: ConstrainedConfiguration) -> List[Tuple[str, ConstrainedConfiguration]]:
    return [(r.name, p) for r in rules for p in pre_rule(r, cc)]


def entails_cc(n: ConstrainedConfiguration, m: ConstrainedConfiguration) -> bool:
    """
    Достаточное условие ⟦n⟧ ⊆ ⟦m⟧: атомы m инъективно вкладываются в атомы n
    так, что ограничение n влечёт переименованное ограничение m.
    """
    if len(m.atoms) > len(n.atoms):
        return False
    if not n.constraint.sat or not m.atoms:
        return True
    owner = {x: i for i, a in enumerate(m.atoms) for x in a.args}
    # атомы ограничения m проверяются, как только размещены все их переменные
    checks: List[List[Atom]] = [[] for _ in m.atoms]
    for atom in m.constraint.atoms():
        idx = [owner[t] for t in (atom.left, atom.right) if is_var(t)]
        checks[max(idx) if idx else 0].append(atom)
    mapping: Dict[str, str] = {}
    used = [False] * len(n.atoms)

    def sub(t):
        return mapping[t] if is_var(t) else t

    def rec(i: int) -> bool:
        if i == len(m.atoms):
            return True
        a = m.atoms[i]
        for j, b in enumerate(n.atoms):
            if used[j] or b.predicate != a.predicate or len(b.args) != len(a.args):
                continue
            mapping.update(zip(a.args, b.args))
            if all(n.constraint.implies(Atom(c.kind, sub(c.left), sub(c.right))) for c in checks[i]):
                used[j] = True
                if rec(i + 1):
                    return True
                used[j] = False
        return False

    return rec(0)


# === Множества ограниченных конфигураций ===

@dataclass(frozen=True)
class Derivation:
    rule: str
    parent: int
    iteration: int


class SymbolicSet:
    """
    Минимизированное множество ограниченных конфигураций.
    Вытесненные элементы остаются в списке (alive=False), чтобы ссылки на родителей не рвались.
    """

    def __init__(self, members: Iterable[ConstrainedConfiguration] = ()) -> None:
        self.members: List[ConstrainedConfiguration] = []
        self.parents: List[Optional[Derivation]] = []
        self.predicates: Dict[str, int] = {}
        self.counts = np.zeros((16, 4), dtype=np.int32)
        self.alive = np.zeros(16, dtype=bool)
        for cc in members:
            self.insert(cc)

    def _vector(self, cc: ConstrainedConfiguration) -> np.ndarray:
        for a in cc.atoms:
            if a.predicate not in self.predicates:
                self.predicates[a.predicate] = len(self.predicates)
        while len(self.predicates) > self.counts.shape[1]:
            self.counts = np.pad(self.counts, ((0, 0), (0, self.counts.shape[1])))
        v = np.zeros(self.counts.shape[1], dtype=np.int32)
        for a in cc.atoms:
            v[self.predicates[a.predicate]] += 1
        return v

    def insert(self, cc: ConstrainedConfiguration, parent: Optional[Derivation] = None) -> Optional[int]:
        """Добавляет cc, если он не следует из имеющихся; вытесняет следующие из него. Возвращает индекс."""
        v = self._vector(cc)
        n = len(self.members)
        counts, alive = self.counts[:n], self.alive[:n]
        for i in np.flatnonzero(alive & (counts <= v).all(axis=1)):
            if entails_cc(cc, self.members[i]):
                return None
        for i in np.flatnonzero(alive & (counts >= v).all(axis=1)):
            if entails_cc(self.members[i], cc):
                self.alive[i] = False
        if n == len(self.alive):
            self.counts = np.concatenate([self.counts, np.zeros_like(self.counts)])
            self.alive = np.concatenate([self.alive, np.zeros_like(self.alive)])
        self.counts[n] = v
        self.alive[n] = True
        self.members.append(cc)
        self.parents.append(parent)
        return n

    def live(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.alive[:len(self.members)])]

    def __iter__(self) -> Iterator[ConstrainedConfiguration]:
        return (self.members[i] for i in self.live())

    def __len__(self) -> int:
        return int(self.alive[:len(self.members)].sum())

    def covers(self, m: Configuration) -> Optional[int]:
        for i in self.live():
            if member(self.members[i], m):
                return i
        return None


def sym_pre(rules: Sequence[MSRRule], s: Iterable[ConstrainedConfiguration]) -> SymbolicSet:
    out = SymbolicSet()
    for cc in s:
        for _, p in pre_member(rules, cc):
            out.insert(p)
    return out


# === SBR ===

class Verdict(str, enum.Enum):
    SAFE = "SAFE"
    UNSAFE = "UNSAFE"
    BOUND_EXCEEDED = "BOUND_EXCEEDED"


@dataclass
class SbrReport:
    verdict: Verdict
    iterations: int
    fixpoint_size: int
    trace: Optional[List[Tuple[str, ConstrainedConfiguration]]] = None
    elapsed: float = 0.0
    initial: Optional[Configuration] = field(default=None, repr=False)
    # живые элементы множества на момент остановки
    fixpoint: List[ConstrainedConfiguration] = field(default_factory=list, repr=False)


def _trace(s: SymbolicSet, i: int) -> List[Tuple[str, ConstrainedConfiguration]]:
    # запись (правило, cc): правило ведёт из cc в следующую запись
    out: List[Tuple[str, ConstrainedConfiguration]] = []
    d = s.parents[i]
    while d is not None:
        out.append((d.rule, s.members[i]))
        i = d.parent
        d = s.parents[i]
    out.append(("", s.members[i]))
    return out


def sbr(spec: MSRSpec, unsafe: Iterable[ConstrainedConfiguration],
        max_iterations: Optional[int] = None, max_set_size: Optional[int] = None,
        threads: Optional[int] = None, progress: bool = False) -> SbrReport:
    """Итерации I_{i+1} = I_i ∪ Pre(I_i) с минимизацией до неподвижной точки."""
    max_iterations = config.MAX_ITERATIONS if max_iterations is None else max_iterations
    max_set_size = config.MAX_SET_SIZE if max_set_size is None else max_set_size
    threads = max(1, threads or config.THREADS)
    start = time.perf_counter()
    s = SymbolicSet()
    for cc in unsafe:
        s.insert(cc)
    if not s.members:
        raise SymbolicError("empty unsafe set")

    def finish(verdict: Verdict, iterations: int, hit: Optional[Tuple[int, Configuration]] = None) -> SbrReport:
        report = SbrReport(verdict, iterations, len(s), elapsed=time.perf_counter() - start, fixpoint=list(s))
        if hit is not None:
            report.trace = _trace(s, hit[0])
            report.initial = hit[1]
        if verdict is Verdict.BOUND_EXCEEDED:
            logger.warning("SBR: превышены границы после %d итераций (%d элементов)", iterations, len(s))
        logger.info("SBR: %s за %d итераций, размер %d", verdict.value, iterations, len(s))
        return report

    def covering(indices: Iterable[int]) -> Optional[Tuple[int, Configuration]]:
        for i in indices:
            if s.alive[i]:
                for m0 in spec.initial:
                    if member(s.members[i], m0):
                        return i, m0
        return None

    hit = covering(s.live())
    if hit is not None:
        return finish(Verdict.UNSAFE, 0, hit)

    rules = list(spec.rules)
    frontier = s.live()
    bar = tqdm(total=max_iterations, desc="sbr", unit="iter", disable=not progress)
    try:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for it in range(1, max_iterations + 1):
                results = pool.map(lambda i: pre_member(rules, s.members[i]), frontier)
                inserted: List[int] = []
                discarded = 0
                for parent, pres in zip(frontier, results):
                    for rule, cc in pres:
                        idx = s.insert(cc, Derivation(rule, parent, it))
                        if idx is None:
                            discarded += 1
                            continue
                        inserted.append(idx)
                        hit = covering([idx])
                        if hit is not None:
                            return finish(Verdict.UNSAFE, it, hit)
                    if len(s) > max_set_size:
                        return finish(Verdict.BOUND_EXCEEDED, it)
                frontier = [i for i in inserted if s.alive[i]]
                bar.update(1)
                bar.set_postfix(size=len(s), new=len(frontier))
                logger.info("SBR итерация %d: элементов %d, добавлено %d, отброшено %d",
                            it, len(s), len(frontier), discarded)
                if not frontier:
                    return finish(Verdict.SAFE, it)
    finally:
        bar.close()
    return finish(Verdict.BOUND_EXCEEDED, max_iterations)


def replay_trace(report: SbrReport, spec: MSRSpec) -> List[Tuple[str, Configuration]]:
    """Конкретизирует обратный след вперёд от начальной конфигурации каноническими свидетелями."""
    if report.verdict is not Verdict.UNSAFE or not report.trace:
        raise ReplayError("no trace")
    m = report.initial if report.initial is not None else spec.initial[0]
    run: List[Tuple[str, Configuration]] = [("", m)]
    for k, ((rule, _), (_, target)) in enumerate(zip(report.trace, report.trace[1:]), 1):
        try:
            r = spec.rule(rule)
        except MsrError as e:
            raise ReplayError(str(e)) from e
        pattern = target.renamed("t.")
        fired = fire_into(r, m, pattern.atoms, pattern.constraint)
        if fired is None:
            raise ReplayError(f"trace step {k} ({rule}) cannot be instantiated at {m}")
        m = fired[0]
        run.append((rule, m))
    if not member(report.trace[-1][1], m):
        raise ReplayError(f"replayed run ends outside the unsafe set: {m}")
    return run


# === Текстовый формат множества плохих состояний ===

def parse_unsafe(text: str) -> List[ConstrainedConfiguration]:
    """`unsafe { A | B : c ; ... }`; `#` начинает комментарий."""
    body = " ".join(line.split("#", 1)[0] for line in text.splitlines()).strip()
    if not body.startswith("unsafe") or "{" not in body or not body.endswith("}"):
        raise SymbolicError("expected `unsafe { ... }`")
    inner = body[body.index("{") + 1:-1]
    out: List[ConstrainedConfiguration] = []
    for n, part in enumerate(split_top(inner, ";"), 1):
        if not part.strip():
            continue
        atoms_text, _, constraint_text = part.partition(":")
        try:
            atoms = parse_templates(atoms_text)
            constraint = conjoin_atoms(TRUE, parse_atoms(constraint_text))
        except (MsrError, ConstraintError) as e:
            raise SymbolicError(f"unsafe member {n}: {e}") from e
        extra = constraint.mentioned() - {x for a in atoms for x in a.args}
        if extra:
            raise SymbolicError(f"unsafe member {n}: constraint mentions {', '.join(sorted(extra))}")
        cc = CC.make(atoms, constraint)
        if cc is None:
            logger.warning("Элемент %d множества плохих состояний невыполним и пропущен", n)
            continue
        out.append(cc)
    return out


def format_unsafe(members: Iterable[ConstrainedConfiguration]) -> str:
    return "unsafe { " + " ; ".join(str(cc) for cc in members) + " }\n"

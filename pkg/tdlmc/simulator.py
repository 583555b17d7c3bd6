#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Конкретная семантика TDL: глобальные конфигурации, разрешённые шаги, прогоны.

Имена задаются неотрицательными целыми: ⊥ = 0, константа c_i = i,
новое имя выбирается как max(used)+1.
"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from tdlmc.msr import Configuration, GroundAtom
from tdlmc.symbolic import member
from tdlmc.tdl import (
    Assignment, Const, Expression, Guard, InternalMove, NameGen, Program, Receive, Send,
    TdlRule, ThreadCreate, ThreadDef, Var,
)

logger = logging.getLogger(__name__)

BOTTOM_NAME = 0


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LocalConfiguration:
    thread: str
    location: str
    values: Tuple[int, ...]

    def __str__(self) -> str:
        return f"{self.location}({','.join(str(v) for v in self.values)})"


@dataclass(frozen=True)
class GlobalConfiguration:
    used: FrozenSet[int]
    locals: Tuple[LocalConfiguration, ...]

    def multiset_key(self) -> Tuple[LocalConfiguration, ...]:
        return tuple(sorted(self.locals, key=lambda p: (p.location, p.values, p.thread)))

    def same_as(self, other: "GlobalConfiguration") -> bool:
        """Равенство с точностью до порядка локальных конфигураций."""
        return self.used == other.used and self.multiset_key() == other.multiset_key()

    def __str__(self) -> str:
        used = "{" + ",".join(str(n) for n in sorted(self.used)) + "}"
        return " | ".join([used] + [str(p) for p in self.locals])


class StepKind(str, enum.Enum):
    INTERNAL = "internal"
    NAME_GEN = "name-gen"
    CREATE = "create"
    RENDEZVOUS = "rendezvous"


@dataclass(frozen=True)
class Step:
    """Шаг; у rendez-vous actors = (отправитель, получатель)."""
    kind: StepKind
    actors: Tuple[int, ...]
    rules: Tuple[TdlRule, ...]
    fresh: Optional[int] = None

    def describe(self) -> str:
        if self.kind is StepKind.RENDEZVOUS:
            return f"{self.rules[0].name}|{self.rules[1].name} @ {self.actors[0]}, {self.actors[1]}"
        return f"{self.rules[0].name} @ {self.actors[0]}"


@dataclass
class Run:
    configurations: List[GlobalConfiguration]
    steps: List[Step] = field(default_factory=list)
    stop_reason: str = "step limit reached"


@dataclass(frozen=True)
class ScriptStep:
    rule: str
    actor: int
    partner: Optional[int] = None


_SCRIPT_RE = re.compile(r"^\s*(?P<rule>[^@]+?)\s*@\s*(?P<actor>\d+)\s*(?:,\s*(?P<partner>\d+)\s*)?$")


def parse_script(text: str) -> List[ScriptStep]:
    """Строки вида `rule-name @ instance [, partner]`; `#` начинает комментарий."""
    out: List[ScriptStep] = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SCRIPT_RE.match(line)
        if not m:
            raise SimulationError(f"bad script line {n}: {line!r}")
        partner = m.group("partner")
        out.append(ScriptStep(m.group("rule"), int(m.group("actor")), int(partner) if partner else None))
    return out


class Simulator:
    def __init__(self, program: Program) -> None:
        self.program = program
        self.threads: Dict[str, ThreadDef] = {t.name: t for t in program.threads}
        self.constant_names = {c: program.constant_index(c) for c in program.constants}

    # --------- вычисление выражений ---------

    def _env(self, p: LocalConfiguration) -> Dict[str, int]:
        return dict(zip(self.threads[p.thread].locals, p.values))

    def _eval(self, e: Expression, env: Mapping[str, int]) -> int:
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, Const):
            return self.constant_names[e.name]
        return BOTTOM_NAME

    def _holds(self, guard: Guard, env: Mapping[str, int]) -> bool:
        for g in guard:
            equal = env[g.left] == self._eval(g.right, env)
            if equal != (g.kind == "="):
                return False
        return True

    def _assign(self, t: ThreadDef, assignment: Assignment, env: Mapping[str, int],
                base: Sequence[int]) -> Tuple[int, ...]:
        values = dict(zip(t.locals, base))
        for x, e in assignment:
            values[x] = self._eval(e, env)
        return tuple(values[x] for x in t.locals)

    # --------- операции ---------

    def initial_configuration(self) -> GlobalConfiguration:
        used = frozenset([BOTTOM_NAME, *self.constant_names.values()])
        locals_: List[LocalConfiguration] = []
        for entry in self.program.init:
            t = self.threads[entry.thread]
            locals_.extend(LocalConfiguration(t.name, t.initial, (BOTTOM_NAME,) * len(t.locals))
                           for _ in range(entry.count))
        return GlobalConfiguration(used, tuple(locals_))

    def enabled_steps(self, g: GlobalConfiguration) -> List[Step]:
        steps: List[Step] = []
        fresh = max(g.used) + 1
        for i, p in enumerate(g.locals):
            t = self.threads[p.thread]
            env = self._env(p)
            for r in t.rules:
                if r.source != p.location:
                    continue
                body = r.body
                if isinstance(body, InternalMove):
                    if self._holds(body.guard, env):
                        steps.append(Step(StepKind.INTERNAL, (i,), (r,)))
                elif isinstance(body, NameGen):
                    steps.append(Step(StepKind.NAME_GEN, (i,), (r,), fresh))
                elif isinstance(body, ThreadCreate):
                    steps.append(Step(StepKind.CREATE, (i,), (r,)))
                elif isinstance(body, Send):
                    if self._holds(body.guard, env):
                        steps.extend(self._partners(g, i, r, env))
        return steps

    def _partners(self, g: GlobalConfiguration, i: int, send: TdlRule, env: Mapping[str, int]) -> List[Step]:
        body = send.body
        channel = self._eval(body.channel, env)
        message = [env[x] for x in body.template]
        out = []
        for j, q in enumerate(g.locals):
            if j == i:
                continue
            qt = self.threads[q.thread]
            qenv = self._env(q)
            for r in qt.rules:
                rb = r.body
                if r.source != q.location or not isinstance(rb, Receive) or len(rb.template) != len(message):
                    continue
                if self._eval(rb.channel, qenv) != channel:
                    continue
                renv = dict(qenv)
                renv.update(zip(rb.template, message))
                if self._holds(rb.guard, renv):
                    out.append(Step(StepKind.RENDEZVOUS, (i, j), (send, r)))
        return out

    def _is_enabled(self, g: GlobalConfiguration, s: Step) -> bool:
        if s.kind is StepKind.NAME_GEN:
            if s.fresh is None or s.fresh in g.used:
                return False
            s = replace(s, fresh=max(g.used) + 1)
        return s in self.enabled_steps(g)

    def apply_step(self, g: GlobalConfiguration, s: Step) -> GlobalConfiguration:
        """Преемник по шагу; для NameGen допускается любое неиспользованное имя."""
        if not self._is_enabled(g, s):
            raise SimulationError(f"step not enabled: {s.describe()}")
        locals_ = list(g.locals)
        used = g.used
        i = s.actors[0]
        p = g.locals[i]
        t = self.threads[p.thread]
        body = s.rules[0].body
        target = s.rules[0].target
        if s.kind is StepKind.INTERNAL:
            values = self._assign(t, body.assignment, self._env(p), p.values)
            locals_[i] = LocalConfiguration(t.name, target, values)
        elif s.kind is StepKind.NAME_GEN:
            values = tuple(s.fresh if x == body.target else v for x, v in zip(t.locals, p.values))
            locals_[i] = LocalConfiguration(t.name, target, values)
            used = used | {s.fresh}
        elif s.kind is StepKind.CREATE:
            child = self.threads[body.thread]
            values = self._assign(child, body.assignment, self._env(p), (BOTTOM_NAME,) * len(child.locals))
            locals_[i] = LocalConfiguration(t.name, target, p.values)
            locals_.append(LocalConfiguration(child.name, child.initial, values))
        else:
            j = s.actors[1]
            q = g.locals[j]
            qt = self.threads[q.thread]
            recv = s.rules[1]
            env = self._env(p)
            message = [env[x] for x in body.template]
            renv = self._env(q)
            renv.update(zip(recv.body.template, message))
            locals_[i] = LocalConfiguration(t.name, target, self._assign(t, body.assignment, env, p.values))
            locals_[j] = LocalConfiguration(qt.name, recv.target,
                                            self._assign(qt, recv.body.assignment, renv, q.values))
        return GlobalConfiguration(used, tuple(locals_))

    def run_random(self, g0: GlobalConfiguration, steps: int, seed: int) -> Run:
        rng = np.random.default_rng(seed)
        run = Run([g0])
        g = g0
        for _ in range(steps):
            enabled = self.enabled_steps(g)
            if not enabled:
                run.stop_reason = "no enabled steps"
                break
            s = enabled[int(rng.integers(len(enabled)))]
            g = self.apply_step(g, s)
            run.steps.append(s)
            run.configurations.append(g)
        logger.debug("Случайный прогон: %d шагов (%s)", len(run.steps), run.stop_reason)
        return run

    def script_step(self, g: GlobalConfiguration, item: ScriptStep) -> Optional[Step]:
        for s in self.enabled_steps(g):
            if item.actor not in s.actors:
                continue
            pos = s.actors.index(item.actor)
            if s.rules[pos].name != item.rule:
                continue
            if item.partner is not None:
                if len(s.actors) != 2 or s.actors[1 - pos] != item.partner:
                    continue
            return s
        return None

    def run_script(self, g0: GlobalConfiguration, script: Sequence[ScriptStep]) -> Run:
        run = Run([g0], stop_reason="script finished")
        g = g0
        for n, item in enumerate(script, 1):
            s = self.script_step(g, item)
            if s is None:
                partner = f", {item.partner}" if item.partner is not None else ""
                raise SimulationError(f"script step {n} not enabled: {item.rule} @ {item.actor}{partner}")
            g = self.apply_step(g, s)
            run.steps.append(s)
            run.configurations.append(g)
        return run

    def find_step(self, g: GlobalConfiguration, g_next: GlobalConfiguration) -> Optional[Step]:
        """Шаг, переводящий g в g_next (с точностью до порядка локальных конфигураций)."""
        new_names = g_next.used - g.used
        target = g_next.multiset_key()
        for s in self.enabled_steps(g):
            if s.kind is StepKind.NAME_GEN:
                if len(new_names) != 1:
                    continue
                s = replace(s, fresh=next(iter(new_names)))
            succ = self.apply_step(g, s)
            if succ.multiset_key() == target and succ.used <= g_next.used:
                return s
        return None

    def match_unsafe(self, g: GlobalConfiguration, unsafe: Iterable) -> bool:
        """Покрывается ли g хотя бы одной плохой ограниченной конфигурацией."""
        m = Configuration.of(GroundAtom(p.location, tuple(p.values)) for p in g.locals)
        return any(member(cc, m) for cc in unsafe)

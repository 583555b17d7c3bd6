#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""JSON-отчёты команд check / simulate / oracle."""
from __future__ import annotations

from typing import Optional, Sequence

from pydantic import BaseModel

from tdlmc.msr import Exploration
from tdlmc.simulator import Run
from tdlmc.symbolic import SbrReport


class TraceStepModel(BaseModel):
    rule: str
    configuration: str
    constraint: str


class ReportModel(BaseModel):
    verdict: str
    iterations: int
    fixpoint_size: int
    elapsed_ms: int
    trace: list[TraceStepModel] = []


class SimulationStepModel(BaseModel):
    index: int
    rule: str
    instances: list[int]
    configuration: str


class SimulationModel(BaseModel):
    steps: list[SimulationStepModel]
    stop_reason: str
    unsafe_hit: Optional[int] = None


class OracleModel(BaseModel):
    explored: int
    truncated: bool
    bad_found: bool
    witness: list[str] = []
    agreement: Optional[bool] = None


def report_model(report: SbrReport) -> ReportModel:
    trace = [
        TraceStepModel(rule=rule, configuration=" | ".join(str(a) for a in cc.atoms) or "()",
                       constraint=str(cc.constraint))
        for rule, cc in report.trace or []
    ]
    return ReportModel(verdict=report.verdict.value, iterations=report.iterations,
                       fixpoint_size=report.fixpoint_size, elapsed_ms=int(report.elapsed * 1000), trace=trace)


def simulation_model(run: Run, unsafe_hit: Optional[int] = None) -> SimulationModel:
    steps = [SimulationStepModel(index=0, rule="", instances=[], configuration=str(run.configurations[0]))]
    for k, (s, g) in enumerate(zip(run.steps, run.configurations[1:]), 1):
        rule = "|".join(r.name for r in s.rules)
        steps.append(SimulationStepModel(index=k, rule=rule, instances=list(s.actors), configuration=str(g)))
    return SimulationModel(steps=steps, stop_reason=run.stop_reason, unsafe_hit=unsafe_hit)


def oracle_model(result: Exploration, prior_verdict: Optional[str] = None) -> OracleModel:
    bad = result.hit is not None
    witness: Sequence[str] = []
    if bad:
        witness = [f"{rule or 'start'}: {m}" for rule, m in result.path_to(result.hit)]
    agreement = None
    if prior_verdict is not None:
        # SAFE и найденное плохое состояние несовместимы; UNSAFE при пустом поиске не опровергается
        agreement = not (prior_verdict == "SAFE" and bad)
    return OracleModel(explored=len(result.configurations), truncated=result.truncated,
                       bad_found=bad, witness=list(witness), agreement=agreement)

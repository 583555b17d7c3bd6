from dataclasses import replace

import numpy as np
import pytest

from tdlmc import config
from tdlmc.simulator import (
    GlobalConfiguration, LocalConfiguration, ScriptStep, SimulationError, Simulator, StepKind, parse_script,
)
from tdlmc.symbolic import parse_unsafe
from tdlmc.tdl import load_program, parse_program
from tests.oracle import random_program

SESSION = """
# одна полная сессия вызов-ответ
id @ 0
new_A @ 0
id @ 0
new_B @ 0
fresh @ 1
gen_A->wait_A @ 1, 2
fresh @ 2
wait_A->stop_A @ 1, 2
"""


@pytest.fixture
def sim():
    return Simulator(load_program(config.CORPUS_DIR / "challenge_response.tdl"))


def test_initial_configuration(sim):
    g0 = sim.initial_configuration()
    assert g0.used == frozenset({0, 1})
    assert g0.locals == (LocalConfiguration("Main", "init_M", (0,)),)


def test_scripted_session(sim):
    run = sim.run_script(sim.initial_configuration(), parse_script(SESSION))
    g = run.configurations[-1]
    assert len(run.steps) == 8
    assert run.stop_reason == "script finished"
    assert g.used == frozenset(range(6))
    assert LocalConfiguration("Init", "stop_A", (2, 4, 5)) in g.locals
    assert LocalConfiguration("Resp", "stop_B", (3, 4, 5)) in g.locals
    assert LocalConfiguration("Main", "init_M", (3,)) in g.locals
    assert run.steps[5].kind is StepKind.RENDEZVOUS
    assert run.steps[5].actors == (1, 2)


def test_script_step_not_enabled(sim):
    with pytest.raises(SimulationError, match="script step 1 not enabled: new_A @ 0"):
        sim.run_script(sim.initial_configuration(), [ScriptStep("new_A", 0)])


def test_bad_script_line():
    with pytest.raises(SimulationError, match="bad script line 2"):
        parse_script("id @ 0\nid at zero\n")


def test_name_generation_accepts_any_unused_name(sim):
    g0 = sim.initial_configuration()
    (s,) = sim.enabled_steps(g0)
    assert s.kind is StepKind.NAME_GEN and s.fresh == 2
    g = sim.apply_step(g0, replace(s, fresh=17))
    assert g.locals[0].values == (17,)
    with pytest.raises(SimulationError):
        sim.apply_step(g0, replace(s, fresh=1))


def test_random_run_is_deterministic(sim):
    g0 = sim.initial_configuration()
    a = sim.run_random(g0, 60, seed=5)
    b = sim.run_random(g0, 60, seed=5)
    assert a.steps == b.steps
    assert [str(g) for g in a.configurations] == [str(g) for g in b.configurations]


def test_random_run_stops_without_enabled_steps():
    sim = Simulator(parse_program("thread T() { a -go-> b; } init { T() }"))
    run = sim.run_random(sim.initial_configuration(), 10, seed=0)
    assert len(run.steps) == 1
    assert run.stop_reason == "no enabled steps"


def test_zero_steps(sim):
    run = sim.run_random(sim.initial_configuration(), 0, seed=0)
    assert run.steps == [] and len(run.configurations) == 1


def test_guard_blocks_internal_move():
    p = parse_program("const k; thread T(x) { s -go-> t [x = k]; s -other-> u [x != k]; } init { T(bot) }")
    sim = Simulator(p)
    steps = sim.enabled_steps(sim.initial_configuration())
    assert [s.rules[0].label for s in steps] == ["other"]


def test_rendezvous_needs_distinct_instances():
    p = parse_program("const k; thread T(x) { s -send k!(x)-> t; s -recv k?(y)-> u [x := y]; } init { T(bot) }")
    sim = Simulator(p)
    assert sim.enabled_steps(sim.initial_configuration()) == []


def test_create_initializes_child_locals(sim):
    script = parse_script("id @ 0\nnew_B @ 0")
    g = sim.run_script(sim.initial_configuration(), script).configurations[-1]
    assert LocalConfiguration("Resp", "init_B", (2, 0, 0)) in g.locals


def test_find_step_recovers_run(sim):
    run = sim.run_random(sim.initial_configuration(), 40, seed=3)
    for g, s, g_next in zip(run.configurations, run.steps, run.configurations[1:]):
        found = sim.find_step(g, g_next)
        assert found is not None
        assert sim.apply_step(g, found).same_as(g_next)
        assert found.kind is s.kind


def test_match_unsafe(sim):
    unsafe = parse_unsafe((config.CORPUS_DIR / "s_u.spec").read_text(encoding="utf-8"))
    run = sim.run_script(sim.initial_configuration(), parse_script(SESSION))
    assert not any(sim.match_unsafe(g, unsafe) for g in run.configurations)
    bad = GlobalConfiguration(frozenset(range(7)), (
        LocalConfiguration("Resp", "stop_B", (1, 2, 6)),
        LocalConfiguration("Init", "stop_A", (4, 2, 5)),
    ))
    assert sim.match_unsafe(bad, unsafe)


def test_random_programs_run():
    rng = np.random.default_rng(23)
    for k in range(200):
        p = random_program(rng)
        sim = Simulator(p)
        run = sim.run_random(sim.initial_configuration(), 25, seed=k)
        for g in run.configurations:
            assert 0 in g.used
            for loc in g.locals:
                assert set(loc.values) <= g.used

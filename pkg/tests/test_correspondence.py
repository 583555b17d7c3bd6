"""Прогоны TDL и прогоны MSR_NC взаимно переводятся через отображения имён в значения."""
from fractions import Fraction

import numpy as np
import pytest

from tdlmc import config
from tdlmc.msr import MSRSpec, find_step, post
from tdlmc.simulator import Simulator
from tdlmc.tdl import Program, load_program
from tdlmc.translate import NameEncoding, decode_config, encode_global, translate_program

PROGRAMS = ["challenge_response.tdl", "challenge_response_buggy.tdl", "monadic_handoff.tdl", "monadic_server.tdl"]


def _compiled(name: str, self_sync: bool = True):
    program = load_program(config.CORPUS_DIR / name)
    # симулятор допускает rendez-vous внутри одного определения
    return program, translate_program(program, self_sync=self_sync)


def _check_forward(program: Program, spec: MSRSpec, seed: int, steps: int) -> None:
    encoding = NameEncoding(program.constants)
    sim = Simulator(program)
    run = sim.run_random(sim.initial_configuration(), steps, seed=seed)

    h = {n: Fraction(n) for n in range(len(program.constants) + 1)}
    m = encode_global(run.configurations[0], h, encoding)
    found = find_step(spec, spec.initial[0], m)
    assert found is not None and found[0].name == "init"
    for g, g_next in zip(run.configurations, run.configurations[1:]):
        for n in sorted(g_next.used - g.used):
            # новое имя выше текущего значения fresh
            h[n] = max(h.values()) + 2
        m_next = encode_global(g_next, h, encoding)
        assert find_step(spec, m, m_next) is not None, (str(g), str(g_next))
        m = m_next


def _check_backward(program: Program, spec: MSRSpec, seed: int, steps: int) -> None:
    sim = Simulator(program)
    rng = np.random.default_rng(seed)
    f = {Fraction(n): n for n in range(len(program.constants) + 1)}

    def decode(m):
        for a in m:
            if a.predicate == "fresh":
                continue
            for v in a.args:
                if v not in f:
                    f[v] = max(f.values()) + 1
        return decode_config(m, f, spec, f.values())

    (_, m), = post(spec.initial[0], spec)
    g = decode(m)
    assert g.same_as(sim.initial_configuration())
    for _ in range(steps):
        succ = post(m, spec)
        if not succ:
            break
        _, m = succ[int(rng.integers(len(succ)))]
        g_next = decode(m)
        assert sim.find_step(g, g_next) is not None, (str(g), str(g_next))
        g = g_next


@pytest.mark.parametrize("name", PROGRAMS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_tdl_run_is_msr_run(name, seed):
    _check_forward(*_compiled(name), seed, 40)


@pytest.mark.parametrize("name", PROGRAMS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_msr_run_is_tdl_run(name, seed):
    _check_backward(*_compiled(name), seed, 40)


@pytest.mark.slow
def test_two_hundred_runs_each_way():
    program, spec = _compiled("challenge_response.tdl")
    for seed in range(200):
        _check_forward(program, spec, seed, 20)
        _check_backward(program, spec, seed, 20)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_default_translation_of_challenge_response(seed):
    # каналы n_A, n_B свежие и не равны c: пары внутри одного определения не срабатывают
    program, spec = _compiled("challenge_response.tdl", self_sync=False)
    _check_forward(program, spec, seed, 40)
    _check_backward(program, spec, seed, 40)


@pytest.mark.slow
def test_two_hundred_runs_default_translation():
    program, spec = _compiled("challenge_response.tdl", self_sync=False)
    for seed in range(200):
        _check_forward(program, spec, seed, 20)
        _check_backward(program, spec, seed, 20)

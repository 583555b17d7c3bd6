from fractions import Fraction

import pytest

from tdlmc.constraints import parse_constraint
from tdlmc.msr import (
    AtomTemplate, Configuration, GroundAtom, MSRRule, MSRSpec, MsrError, enabled_instances, find_step, fire,
    fire_into, format_spec, normalize, parse_ground, parse_spec, post, post_star_bounded,
)

TOY = """
# счётчик: p(x) порождает q(y) с y>x, fresh держит верхнюю границу
init init
init: init -> fresh(f) | p(a) : f>1, a=0
step: p(x) | fresh(u) -> q(y) | fresh(u') : u'>y, y>u, x>0
bump: p(x) -> p(x') : x'>x, 1>x'
"""


@pytest.fixture
def toy():
    return parse_spec(TOY)


def _g(text: str) -> Configuration:
    return parse_ground(text)


def test_parse_spec(toy):
    assert [r.name for r in toy.rules] == ["init", "step", "bump"]
    assert toy.predicates == {"init": 0, "fresh": 1, "p": 1, "q": 1}
    assert toy.initial == (_g("init"),)
    assert toy.constants() == (0, 1)


def test_format_round_trip(toy):
    again = parse_spec(format_spec(toy))
    assert again.rules == toy.rules
    assert again.initial == toy.initial


def test_rule_names_with_hash_survive():
    text = "init init\nA.s->t#0: init -> fresh(x) : x>0  # комментарий\n"
    spec = parse_spec(text)
    assert spec.rules[0].name == "A.s->t#0"


def test_repeated_variable_rejected():
    with pytest.raises(MsrError, match="pairwise distinct"):
        MSRRule("r", (AtomTemplate("p", ("x",)),), (AtomTemplate("p", ("x",)),))


def test_foreign_constraint_variable_rejected():
    with pytest.raises(MsrError, match="foreign"):
        MSRRule("r", (AtomTemplate("p", ("x",)),), (), parse_constraint("y>x"))


def test_arity_mismatch_rejected():
    with pytest.raises(MsrError, match="arity"):
        parse_spec("r: p(x) -> p(y, z) : true")


def test_fire(toy):
    m0 = toy.initial[0]
    m1 = fire(toy.rule("init"), m0, {"f": 2, "a": 0})
    assert m1 == _g("fresh(2) | p(0)")


@pytest.mark.parametrize("sigma, message", [
    ({"f": 1, "a": 0}, "violates"),
    ({"f": 2}, "no binding"),
])
def test_fire_errors(toy, sigma, message):
    with pytest.raises(MsrError, match=message):
        fire(toy.rule("init"), toy.initial[0], sigma)


def test_fire_head_not_included(toy):
    with pytest.raises(MsrError, match="not included"):
        fire(toy.rule("step"), _g("p(1/2) | fresh(3)"), {"x": Fraction(1, 2), "u": 4, "y": 5, "u'": 6})


def test_enabled_instances_use_canonical_witness(toy):
    (sigma,) = enabled_instances(toy.rule("step"), _g("p(1/2) | fresh(3)"))
    assert sigma["y"] == 4 and sigma["u'"] == 5


def test_post(toy):
    m = _g("fresh(2) | p(0)")
    succ = post(m, toy)
    assert [(name, str(n)) for name, n in succ] == [("bump", "fresh(2) | p(1/2)")]
    assert post(_g("fresh(2) | p(1/2)"), toy)[0] == ("step", _g("fresh(4) | q(3)"))


def test_find_step(toy):
    m = _g("fresh(2) | p(1/2)")
    found = find_step(toy, m, _g("fresh(9) | q(7)"))
    assert found is not None
    rule, sigma = found
    assert rule.name == "step" and sigma["y"] == 7
    assert find_step(toy, m, _g("fresh(9) | q(1)")) is None


def test_fire_into_pattern(toy):
    m = _g("fresh(2) | p(1/2)")
    pattern = (AtomTemplate("q", ("t.a",)), AtomTemplate("fresh", ("t.b",)))
    fired = fire_into(toy.rule("step"), m, pattern, parse_constraint("t.b>t.a, t.a>10"))
    assert fired is not None
    m1, sigma = fired
    y, top = sigma["y"], sigma["u'"]
    assert y > 10
    assert m1 == Configuration.of([GroundAtom("q", (y,)), GroundAtom("fresh", (top,))])
    assert fire_into(toy.rule("step"), m, pattern, parse_constraint("1>t.a")) is None


def test_normalize_keeps_constants_and_order():
    m = _g("p(7/3) | q(10) | r(0) | s(1/5)")
    assert normalize(m, [0, 1]) == _g("p(2) | q(3) | r(0) | s(1/2)")
    assert normalize(_g("p(5) | q(9)"), []) == _g("p(0) | q(1)")


def test_post_star_bounded_finds_q(toy):
    result = post_star_bounded(toy, max_atoms=3, value_cap=10, max_configs=1000,
                               stop=lambda m: any(a.predicate == "q" for a in m))
    assert result.hit is not None
    path = result.path_to(result.hit)
    assert [rule for rule, _ in path] == ["", "init", "bump", "step"]
    assert not result.truncated


def test_post_star_bounded_exhausts(toy):
    result = post_star_bounded(toy, max_atoms=3, value_cap=10, max_configs=1000)
    assert result.hit is None and not result.truncated
    assert _g("init") in result.configurations
    assert len(result.configurations) == 4


def test_post_star_bounded_truncates(toy):
    result = post_star_bounded(toy, max_atoms=3, value_cap=10, max_configs=2)
    assert result.truncated
    assert len(result.configurations) == 2


def test_post_star_zero_atoms_explores_nothing(toy):
    assert post_star_bounded(toy, max_atoms=0, value_cap=10, max_configs=10).configurations == []


def test_spec_rejects_undeclared_predicate():
    r = MSRRule("r", (AtomTemplate("p", ("x",)),), ())
    with pytest.raises(MsrError, match="undeclared"):
        MSRSpec({"q": 1}, (), (r,))


def test_ground_atoms_are_fractions():
    a = GroundAtom("p", (1, Fraction(1, 2)))
    assert a.args == (Fraction(1), Fraction(1, 2))
    assert str(a) == "p(1,1/2)"

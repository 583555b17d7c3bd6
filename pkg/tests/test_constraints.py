import itertools
from fractions import Fraction

import numpy as np
import pytest

from tdlmc.constraints import (
    FALSE, TRUE, ConstraintError, build, canonicalize, conjoin, eliminate, entails, eq, evaluate, gt,
    is_satisfiable, is_var, parse_atoms, parse_constraint, rename, witness,
)
from tests.oracle import (
    atom_constants, atom_universe, oracle_entails, oracle_projection, oracle_sat, order_types, random_atoms,
    satisfies, signature,
)


def _c(text: str):
    return parse_constraint(text)


# --------- примеры ---------

@pytest.mark.parametrize("a, b, sat", [
    ("x=1", "x>z, z>x", False),
    ("true", "u=t, v>y", True),
    ("x>3", "x=2", False),
])
def test_conjoin_examples(a, b, sat):
    c = conjoin(_c(a), _c(b))
    assert c.sat is sat


def test_conjoin_with_true_keeps_constraint():
    assert conjoin(TRUE, _c("u=t, v>y")) == _c("u=t, v>y")
    assert str(conjoin(TRUE, _c("u=t, v>y"))) in ("t=u, v>y", "u=t, v>y")


@pytest.mark.parametrize("text, expected", [
    ("x>0, 1>x", True),
    ("x=y, y>x", False),
    ("n1=n2, m1>m2", True),
    ("x>2, 2>y, y>x", False),
    ("x=1, x=2", False),
])
def test_is_satisfiable(text, expected):
    assert is_satisfiable(_c(text)) is expected


def test_eliminate_rendezvous_template_variable():
    c = _c("y=m_B, n_A=n_B, m_A'=y, n_A'=n_A, m_B'=m_B, n_B'=n_B, id_1'=id_1, id_2'=id_2")
    expected = _c("n_B=n_A, m_A'=m_B, n_A'=n_A, m_B'=m_B, n_B'=n_B, id_1'=id_1, id_2'=id_2")
    assert eliminate(c, {"y"}) == expected


def test_eliminate_absent_variable_is_noop():
    c = _c("x>y")
    assert eliminate(c, {"z"}) == c


def test_eliminate_keeps_constant_bound():
    assert eliminate(_c("x>y, y>3"), {"y"}) == _c("x>3")


def test_eliminate_unsat_stays_unsat():
    assert not eliminate(_c("x>y, y>x"), {"y"}).sat


@pytest.mark.parametrize("a, b, expected", [
    ("x>y, y>z", "x>z", True),
    ("x>z", "x>y, y>z", False),
    ("x>3", "x>1", True),
    ("x=2", "x>1, 3>x", True),
    ("x>1", "x>3", False),
])
def test_entails(a, b, expected):
    vs = ["x", "y", "z"]
    assert entails(parse_constraint(a, vs), parse_constraint(b, vs)) is expected


def test_unsat_entails_everything():
    assert entails(FALSE, _c("x>y"))
    assert not entails(_c("x>y"), FALSE)


def test_rename():
    assert rename(_c("x>y"), {"x": "a", "y": "b"}) == _c("a>b")
    assert rename(_c("x=1"), {"x": "x'"}) == _c("x'=1")
    with pytest.raises(ConstraintError):
        rename(_c("x>y"), {"x": "y", "y": "y"})


def test_evaluate():
    six = Fraction(6)
    assert evaluate(_c("u=t, v>y"), {"u": six, "t": six, "v": six, "y": 0})
    assert not evaluate(build([gt("x", "x")]), {"x": 1})
    assert evaluate(_c("x>2, 3>x"), {"x": Fraction(5, 2)})


def test_evaluate_missing_binding():
    with pytest.raises(ConstraintError, match="no binding"):
        evaluate(_c("x>y"), {"x": 1})


def test_canonicalize():
    c = build(parse_atoms("y>x, x=1, x=1"))
    assert str(c) == "x=1, y>1"
    assert c.implies(gt("y", "x"))
    assert canonicalize(c) == c
    assert canonicalize(_c("x=y, y=z")).implies(eq("x", "z"))
    assert str(canonicalize(FALSE)) == "false"
    assert str(TRUE) == "true"


def test_equal_solutions_give_equal_forms():
    assert _c("x>y, y>z, x>z") == _c("y>z, x>y")
    assert _c("x=y, y=2") == _c("y=2, x=2")


def test_implies_constant_outside_graph():
    c = _c("x>3")
    assert c.implies(gt("x", 2))
    assert not c.implies(gt("x", 4))
    assert c.implies(gt(5, 4))


def test_witness_is_solution():
    c = _c("x>y, y>3, 5>x")
    sigma = witness(c)
    assert sigma is not None and evaluate(c, sigma)
    assert witness(_c("x>y"), {"y": 7})["x"] == 8
    assert witness(_c("x>y, 5>x"), {"y": 4})["x"] == Fraction(9, 2)
    assert witness(_c("x>y"), {"y": 2, "x": 1}) is None


def test_parse_atoms_less_than():
    assert _c("x<y") == _c("y>x")
    assert not _c("false").sat


# --------- сверка с перебором порядковых типов ---------

def _random_cases(seed: int, n: int, max_vars: int, constants):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        k = int(rng.integers(1, max_vars + 1))
        vs = [f"v{i}" for i in range(k)]
        atoms = random_atoms(rng, vs, constants, int(rng.integers(1, 5)))
        yield rng, vs, atoms


def test_sat_agrees_with_oracle():
    for _, vs, atoms in _random_cases(1, 400, 4, [0, 1, 2]):
        assert build(atoms, vs).sat == oracle_sat(atoms, vs), atoms


def test_entails_agrees_with_oracle():
    for rng, vs, a in _random_cases(2, 300, 3, [0, 1, 2]):
        b = random_atoms(rng, vs, [0, 1, 2], int(rng.integers(1, 3)))
        assert entails(build(a, vs), build(b, vs)) == oracle_entails(a, b, vs), (a, b)


def test_eliminate_agrees_with_oracle():
    for rng, vs, atoms in _random_cases(3, 300, 4, [0, 1, 2]):
        keep = [v for v in vs if rng.random() < 0.5]
        c = eliminate(build(atoms, vs), set(vs) - set(keep))
        ks = sorted(atom_constants(atoms))
        projected = oracle_projection(atoms, vs, keep, ks)
        own = oracle_projection(list(c.atoms()) if c.sat else [gt(0, 0)], keep, keep, ks)
        assert projected == own, (atoms, keep, str(c))


def test_witness_satisfies_random_constraints():
    for _, vs, atoms in _random_cases(4, 300, 4, [0, 1, 2, 3]):
        c = build(atoms, vs)
        sigma = witness(c)
        assert (sigma is not None) == c.sat
        if sigma is not None:
            assert satisfies(atoms, sigma)


def _agrees_with_oracle(a, b, vs, keep) -> None:
    """sat, entails и eliminate против одного перебора порядковых типов."""
    ks = sorted(atom_constants(a) | atom_constants(b))
    types = list(order_types(vs, ks))
    models = [s for s in types if satisfies(a, s)]
    c = build(a, vs)
    assert c.sat == bool(models), a
    assert entails(c, build(b, vs)) == all(satisfies(b, s) for s in models), (a, b)
    projected = eliminate(c, set(vs) - set(keep))
    expected = {signature(s, keep, ks) for s in models}
    own = oracle_projection(list(projected.atoms()) if projected.sat else [gt(0, 0)], keep, keep, ks)
    assert own == expected, (a, keep, str(projected))


@pytest.mark.slow
def test_exhaustive_small_constraints_agree_with_oracle():
    vs = ["a", "b", "c", "d"]
    universe = atom_universe(vs, [0, 1, 2])
    sets = itertools.chain.from_iterable(itertools.combinations(universe, k) for k in (1, 2, 3))
    for i, a in enumerate(itertools.islice(sets, 20000)):
        a = list(a)
        b = [universe[(7 * i + 3) % len(universe)]]
        mentioned = sorted({t for x in a + b for t in (x.left, x.right) if is_var(t)})
        _agrees_with_oracle(a, b, mentioned, mentioned[1:])


@pytest.mark.slow
def test_larger_random_constraints_agree_with_oracle():
    constants = [0, 1, 2, 3, 4]
    for rng, vs, a in _random_cases(5, 1000, 6, constants):
        b = random_atoms(rng, vs, constants, 1)
        # неупомянутые переменные ничего не ограничивают
        mentioned = sorted({t for x in a + b for t in (x.left, x.right) if is_var(t)})
        keep = [v for v in mentioned if rng.random() < 0.5]
        _agrees_with_oracle(a, b, mentioned, keep)

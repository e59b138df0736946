import pytest

from colombeau.config import ConfigError, parse_config
from colombeau.scenarios import NO_OVERRIDE, run_checks
from colombeau.userconfig import from_text

HEAD = """[scenario]
name = demo
domain = -2, 2
q = 4

[distributions]
d = delta(0)
h = heaviside(0)

[fields]
X = 1 + x/2
"""


def test_sections_and_positions():
    cfg = parse_config("# note\n[a]\nk = v w\n  other=1\n\n[b]\n")
    assert [s.name for s in cfg.sections] == ["a", "b"]
    e = cfg.section("a").entries["k"]
    assert (e.value, e.line, e.column) == ("v w", 3, 5)
    assert cfg.section("a").entries["other"].column == 9


@pytest.mark.parametrize("text, line, column, match", [
    ("k = 1", 1, 1, "outside"),
    ("[a\n", 1, 2, "unterminated"),
    ("[a]\nnovalue\n", 2, 1, "key = value"),
    ("[a]\nk = 1\nk = 2\n", 3, 1, "duplicate key"),
    ("[a]\n[a]\n", 2, 1, "duplicate section"),
])
def test_syntax_errors_carry_line_and_column(text, line, column, match):
    with pytest.raises(ConfigError, match=match) as info:
        parse_config(text, "f.cfg")
    assert (info.value.line, info.value.column) == (line, column)
    assert str(info.value).startswith(f"f.cfg:{line}:{column}:")


def _error(text):
    with pytest.raises(ConfigError) as info:
        from_text(text, "f.cfg")
    return info.value


def test_unknown_object_name_points_at_it():
    err = _error(HEAD + "[test: t]\nkind = moderateness\nobject = embed(d) * embed(zz)\n")
    assert "unknown distribution 'zz'" in str(err)
    assert err.line == 14 and err.column == 10 + len("embed(d) * embed(")


def test_order_above_moments_rejected():
    err = _error(HEAD + "[test: t]\nkind = negligibility\nobject = embed(d)\nm = 5\n")
    assert "q >= 5" in str(err) and (err.line, err.column) == (15, 5)


def test_unknown_kind_and_section():
    assert "unknown test kind" in str(_error(HEAD + "[test: t]\nkind = guess\nobject = embed(d)\n"))
    assert "unknown section" in str(_error(HEAD + "[extras]\na = 1\n"))


def test_bad_expression_and_domain():
    assert "domain" in str(_error("[scenario]\nname = x\ndomain = 2, 1\n"))
    err = _error(HEAD.replace("1 + x/2", "1 + y") + "[test: t]\nkind = moderateness\nobject = embed(d)\n")
    assert err.line == 11


def test_missing_tests_rejected():
    assert "no [test" in str(_error(HEAD))


def test_user_scenario_runs_and_matches_expectations():
    text = HEAD + """
[objects]
HD = embed(h) * embed(d)

[test: moderate]
kind = moderateness
object = HD
expect = moderate(1)

[test: assoc]
kind = association
object = HD
other = 0.5 * delta(0)
grid = 3, 8

[test: liehat vs lietilde]
kind = negligibility
object = liehat(X, embed(d)) - lietilde(X, embed(d))
m = 1
expect = fail
"""
    u = from_text(text)
    assert u.name == "demo" and u.q == 4 and len(u.checks()) == 3
    outcomes = run_checks(u.name, u.checks(), NO_OVERRIDE)
    assert [o.report.verdict for o in outcomes] == ["moderate(1)", "associated", "failed"]
    assert all(o.matched for o in outcomes)

import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgeci.quality import (
    EmptyCodebase,
    LineClassification,
    NegativePercent,
    UnknownFile,
    UnknownRule,
    classify_executable,
    compute_coverage,
    default_analyzer,
    fix_text,
    grade,
    lint_check,
    lint_fix,
    lint_text,
    to_letter,
)

KEYWORDS = ["end", "otherwise", "switch", "else", "case", "function"]


def oracle_is_executable(line: str) -> bool:
    """Independent re-statement of the rule, applied per line: non-empty
    after stripping, no leading %, first whole token not an excluded keyword.
    Character-scanning implementation, deliberately unlike the module's."""
    i = 0
    while i < len(line) and line[i] in " \t\x0b\f\r":
        i += 1
    rest = line[i:]
    if rest == "" or rest[0] == "%":
        return False
    token_chars = []
    for ch in rest:
        if ch.isalnum() or ch == "_":
            token_chars.append(ch)
        else:
            break
    token = "".join(token_chars)
    return token not in KEYWORDS


def oracle_classify(text: str) -> set[int]:
    return {
        n for n, line in enumerate(text.splitlines(), start=1) if oracle_is_executable(line)
    }


class TestClassifyExecutable:
    def test_spec_example_function_header(self):
        text = "\n".join(["function y = f(x)", "% doc", "", "y = 2*x;", "end"])
        # hand-applied rule: 1 starts with 'function', 2 starts with %, 3 is
        # blank, 4 is plain code, 5 is 'end'
        assert classify_executable("f.m", text).executable == {4}

    def test_all_comment_file(self):
        text = "% a\n% b\n"
        assert classify_executable("c.m", text).executable == set()

    def test_spec_example_switch(self):
        text = "\n".join(["switch x", "case 1", "y=1;", "otherwise", "y=0;", "end"])
        assert classify_executable("s.m", text).executable == {3, 5}

    def test_keyword_prefix_is_executable(self):
        cls = classify_executable("e.m", "endpoint = 1;\ncases = 2;\nfunctional = 3;\n")
        assert cls.executable == {1, 2, 3}

    def test_keyword_followed_by_punctuation_excluded(self):
        cls = classify_executable("e.m", "end;\nend  % trailing comment\n")
        assert cls.executable == set()

    def test_whitespace_only_line_not_executable(self):
        cls = classify_executable("w.m", "x = 1;\n   \nend\n")
        assert cls.executable == {1}


WORD_POOL = KEYWORDS + [
    "x = 1;",
    "y = 2*x;",
    "% comment",
    "%",
    "",
    "   ",
    "endpoint = 1;",
    "elseif x > 0",
    "  end",
    "  case 3",
    "disp('end')",
    "function y = f(x)",
    "\tend",
    "otherwise%",
    "case2 = 4;",
]


def test_classifier_matches_oracle_on_fuzz_sources():
    rng = random.Random(1234)
    for _ in range(500):
        n = rng.randint(0, 40)
        lines = []
        for _ in range(n):
            if rng.random() < 0.7:
                lines.append(rng.choice(WORD_POOL))
            else:
                lines.append(
                    "".join(rng.choice(string.printable.replace("\n", "").replace("\r", ""))
                            for _ in range(rng.randint(0, 30)))
                )
        text = "\n".join(lines)
        got = classify_executable("fuzz.m", text).executable
        assert got == oracle_classify(text)


class TestCoverage:
    def test_full_coverage(self):
        cls = classify_executable("f.m", "function f()\n% d\n\ny = 1;\nend")
        report = compute_coverage([cls], [("f.m", 4)])
        assert report.percent == 100.0

    def test_half_coverage_by_hand(self):
        # executable {3, 5}; executing only line 3 is 1/2 = 50%
        cls = classify_executable("s.m", "switch x\ncase 1\ny=1;\notherwise\ny=0;\nend")
        report = compute_coverage([cls], [("s.m", 3)])
        assert report.percent == pytest.approx(50.0, abs=1e-9)

    def test_empty_denominator_flag(self):
        cls = classify_executable("c.m", "% only comments\n")
        report = compute_coverage([cls], [])
        assert report.percent == 100.0
        assert report.empty_denominator

    def test_non_executable_hits_ignored(self):
        cls = classify_executable("f.m", "x = 1;\nend\n")
        report = compute_coverage([cls], [("f.m", 1), ("f.m", 2), ("f.m", 2)])
        assert report.percent == 100.0
        assert report.total_ignored == 2

    def test_unknown_file(self):
        with pytest.raises(UnknownFile):
            compute_coverage([], [("ghost.m", 1)])

    def test_duplicate_hits_count_once(self):
        cls = classify_executable("f.m", "x = 1;\ny = 2;\n")
        report = compute_coverage([cls], [("f.m", 1), ("f.m", 1)])
        assert report.percent == pytest.approx(50.0)

    @given(st.sets(st.integers(min_value=1, max_value=30)), st.sets(st.integers(min_value=1, max_value=30)))
    def test_monotone_in_executed_lines(self, executed, extra):
        cls = LineClassification("f.m", frozenset(range(1, 31)), 30)
        base = compute_coverage([cls], [("f.m", n) for n in executed])
        more = compute_coverage([cls], [("f.m", n) for n in executed | extra])
        assert 0.0 <= base.percent <= 100.0
        assert more.percent >= base.percent

    def test_report_serialization(self):
        cls = classify_executable("f.m", "x = 1;\n")
        report = compute_coverage([cls], [("f.m", 1)])
        assert report.to_dict()["percent"] == 100.0
        assert "TOTAL" in report.to_text()


class TestGrade:
    def test_two_messages_over_100_lines_is_a(self):
        cls = LineClassification("f.m", frozenset(range(1, 101)), 100)
        report = grade({"f.m": 2}, [cls])
        assert report.percent == pytest.approx(2.0)
        assert report.letter == "A"

    def test_five_over_100_is_b(self):
        cls = LineClassification("f.m", frozenset(range(1, 101)), 100)
        assert grade({"f.m": 5}, [cls]).letter == "B"

    def test_16_over_100_is_f(self):
        cls = LineClassification("f.m", frozenset(range(1, 101)), 100)
        assert grade({"f.m": 16}, [cls]).letter == "F"

    def test_empty_codebase(self):
        cls = LineClassification("c.m", frozenset(), 3)
        with pytest.raises(EmptyCodebase):
            grade({"c.m": 0}, [cls])

    def test_unknown_file_in_counts(self):
        with pytest.raises(UnknownFile):
            grade({"ghost.m": 1}, [])

    def test_split_invariance(self):
        # same totals across one file or two files: same percent
        one = [LineClassification("a.m", frozenset(range(1, 41)), 40)]
        two = [
            LineClassification("a.m", frozenset(range(1, 21)), 20),
            LineClassification("b.m", frozenset(range(1, 21)), 20),
        ]
        assert grade({"a.m": 6}, one).percent == grade({"a.m": 2, "b.m": 4}, two).percent


class TestToLetter:
    @pytest.mark.parametrize(
        "percent,letter",
        [
            (0, "A"), (2.9, "A"), (3, "B"), (5, "B"), (6, "C"), (9, "D"),
            (12, "E"), (15, "E"), (15.01, "F"), (16, "F"),
        ],
    )
    def test_chart(self, percent, letter):
        assert to_letter(percent) == letter

    def test_negative_rejected(self):
        with pytest.raises(NegativePercent):
            to_letter(-0.1)


class TestLint:
    def test_trailing_whitespace(self):
        violations = lint_text("a.m", "x = 1;  \n")
        assert [(v.rule, v.line) for v in violations] == [("trailing-whitespace", 1)]
        assert fix_text("x = 1;  \n") == "x = 1;\n"

    def test_clean_file(self):
        assert lint_text("a.m", "x = 1;\n") == []

    def test_tabs_fixed_to_four_spaces(self):
        violations = lint_text("a.m", "\tx = 1;\n")
        assert violations[0].rule == "tabs"
        assert fix_text("\tx = 1;\n") == "    x = 1;\n"

    def test_line_length_not_fixable(self):
        long = "x = 1; % " + "y" * 120 + "\n"
        violations = lint_text("a.m", long)
        assert violations[0].rule == "line-length"
        assert not violations[0].fixable
        assert fix_text(long) == long

    def test_missing_final_newline(self):
        violations = lint_text("a.m", "x = 1;")
        assert violations[0].rule == "missing-final-newline"
        assert fix_text("x = 1;") == "x = 1;\n"

    def test_space_after_comma(self):
        violations = lint_text("a.m", "f(a,b)\n")
        assert violations[0].rule == "space-after-comma"
        assert fix_text("f(a,b)\n") == "f(a, b)\n"

    def test_comma_at_line_end_ok(self):
        assert lint_text("a.m", "f(a,\n   b)\n") == []

    def test_unknown_rule(self):
        with pytest.raises(UnknownRule):
            lint_text("a.m", "x\n", rules=("no-such-rule",))

    @given(st.text(alphabet=string.printable, max_size=200))
    @settings(max_examples=300, deadline=None)
    def test_fix_idempotent_and_eliminates_fixables(self, text):
        once = fix_text(text)
        assert fix_text(once) == once
        remaining = lint_text("f.m", once)
        assert all(not v.fixable for v in remaining)

    def test_lint_files_and_fix(self, tmp_path):
        good = tmp_path / "good.m"
        bad = tmp_path / "bad.m"
        good.write_text("x = 1;\n")
        bad.write_text("y = 2;   \nf(a,b)")
        violations, errors = lint_check([str(good), str(bad)])
        assert errors == []
        assert {v.rule for v in violations} == {
            "trailing-whitespace", "space-after-comma", "missing-final-newline",
        }
        changed, remaining, errors = lint_fix([str(good), str(bad)])
        assert changed == [str(bad)]
        assert remaining == [] and errors == []
        assert bad.read_text() == "y = 2;\nf(a, b)\n"

    def test_io_error_does_not_stop_run(self, tmp_path):
        present = tmp_path / "p.m"
        present.write_text("x,y\n")
        violations, errors = lint_check([str(tmp_path / "missing.m"), str(present)])
        assert len(errors) == 1
        assert len(violations) == 1

    def test_default_analyzer_counts(self, tmp_path):
        f = tmp_path / "a.m"
        f.write_text("x = 1;  \nf(a,b)\n")
        assert default_analyzer([str(f)]) == {str(f): 2}

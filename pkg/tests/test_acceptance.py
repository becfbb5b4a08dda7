"""Acceptance gate: every criterion at its stated tolerance, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""
from __future__ import annotations

import json

import pytest

from spectralflow.acceptance import CRITERIA, run_criterion, summary_json

_results = {}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    r = run_criterion(number)
    _results[number] = r
    print(f"\n{r.line()}  ({r.seconds:.2f} s)")
    if not r.passed:
        print(json.dumps(json.loads(summary_json([r]))["criteria"][0]["detail"], indent=1))
    assert r.passed, r.line()


def test_summary_is_complete():
    results = [_results.get(n) or run_criterion(n) for n in sorted(CRITERIA)]
    d = json.loads(summary_json(results))
    assert [c["number"] for c in d["criteria"]] == list(range(1, 12))
    assert d["all_passed"] is True

"""Collects one pass/fail line per acceptance criterion for the session summary."""
from __future__ import annotations

RESULTS: dict[int, str] = {}


def record(number, passed, detail):
    RESULTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    print(RESULTS[number])

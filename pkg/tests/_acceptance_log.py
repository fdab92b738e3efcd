"""Collected acceptance outcomes, printed by the terminal-summary hook in conftest."""

RESULTS = []


def record(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    RESULTS.append((number, line))
    print(line)
    return passed

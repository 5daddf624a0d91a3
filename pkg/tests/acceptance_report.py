"""Collects one pass/fail line per acceptance criterion."""

RESULTS = {}


def report(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
    if detail:
        line += f" ({detail})"
    RESULTS[number] = line
    print(line)
    return ok

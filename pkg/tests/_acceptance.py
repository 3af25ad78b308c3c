"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

RESULTS: list[str] = []


def report(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok

"""Collects one line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number: int, title: str, passed: bool, detail: str, seconds: float) -> str:
    line = f"criterion {number:>2d} {'PASS' if passed else 'FAIL'}  {title}: {detail} [{seconds:.1f} s]"
    RESULTS[number] = line
    print(line)
    return line


def lines() -> list:
    return [RESULTS[k] for k in sorted(RESULTS)]

"""Collects one verdict line per acceptance criterion for the session summary."""

LINES: list[str] = []


def record(number: int, title: str, passed: bool, detail: str = "") -> str:
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
    if detail:
        line += f"  [{detail}]"
    LINES.append(line)
    print(line, flush=True)
    return line

from collections import defaultdict

import pytest

_VERDICTS = defaultdict(list)  # criterion -> [(part, ok, detail)]


@pytest.fixture
def verdict():
    """Record an acceptance verdict: ``verdict(criterion, ok, detail, part="")``."""

    def record(criterion, ok, detail, part=""):
        _VERDICTS[int(criterion)].append((part, bool(ok), detail))
        label = f"criterion {criterion}{f'({part})' if part else ''}"
        print(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for crit in sorted(_VERDICTS):
        parts = _VERDICTS[crit]
        ok = all(p[1] for p in parts)
        if len(parts) == 1 and not parts[0][0]:
            detail = parts[0][2]
        else:
            detail = "; ".join(f"({p}) {'pass' if o else 'FAIL'}: {d}" for p, o, d in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")

import contextlib
import time

ACCEPTANCE = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record the outcome of one acceptance criterion; failures propagate to pytest."""
    start = time.perf_counter()
    notes = []
    try:
        yield notes
    except BaseException as exc:
        first = str(exc).splitlines()[0] if str(exc) else ""
        _merge(number, title, False, f"{type(exc).__name__}: {first}", time.perf_counter() - start)
        raise
    _merge(number, title, True, "; ".join(notes), time.perf_counter() - start)


def _merge(number, title, ok, detail, elapsed):
    # parametrized criteria report once; any failing case marks the criterion failed
    if number in ACCEPTANCE:
        _, ok0, detail0, elapsed0 = ACCEPTANCE[number]
        ok, detail, elapsed = ok0 and ok, f"{detail0} | {detail}", elapsed0 + elapsed
    ACCEPTANCE[number] = (title, ok, detail, elapsed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail, elapsed = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title} ({elapsed:.2f} s) {detail}")

import pytest


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line (bypassing capture) and return the boolean."""

    def record(num, title, ok, detail, seconds=None):
        t = "" if seconds is None else f" [{seconds:.1f}s]"
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {num:>2}: {title} -- {detail}{t}")
        return ok

    return record

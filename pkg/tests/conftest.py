import torch
from hypothesis import settings

settings.register_profile("rgi", deadline=None, max_examples=50)
settings.load_profile("rgi")

torch.set_num_threads(1)

# Filled by tests/test_acceptance.py; echoed in the terminal summary so the
# per-criterion lines show up even when output capture is on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

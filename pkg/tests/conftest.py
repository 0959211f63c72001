"""Shared test fixtures."""

import pytest


@pytest.fixture
def announce(request):
    """Write a line through pytest's terminal reporter, visible without -s."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _line(text: str) -> None:
        if reporter is not None:
            reporter.write_line(text)
        else:  # pragma: no cover
            print(text)

    return _line

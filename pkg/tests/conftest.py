import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pseudolabel.domain import Post  # noqa: E402
from pseudolabel.gateway import DecodingConfig, LLMClient  # noqa: E402
from pseudolabel.mockserver import MockLLMServer  # noqa: E402


@pytest.fixture
def mock_llm():
    """Start a mock server for a script; yields a factory returning (server, client, config)."""
    started = []

    def start(script, retries=3):
        server = MockLLMServer(script).start()
        client = LLMClient(retries=retries, backoff=0.0, timeout=10.0, api_key_env=None)
        started.append((server, client))
        return server, client, DecodingConfig(model_name="mock", endpoint_url=server.url)

    yield start
    for server, client in started:
        client.close()
        server.stop()


def make_post(i, text=None, label=None):
    return Post(f"p{i:03d}", text or f"post number {i} POSTID-{i:03d} end", label)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])

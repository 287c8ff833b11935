import pytest


@pytest.fixture(scope="session")
def corpus_cache():
    """Shared cache so acceptance criteria reuse the expensive runs."""
    return {}

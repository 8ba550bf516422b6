from __future__ import annotations

import pytest

from corpusgen import build_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """3 firms x 8 quarters: enough for extraction and scoring tests."""

    return build_corpus(
        tmp_path_factory.mktemp("small_corpus"), n_firms=3, n_quarters=8, seed=7
    )


@pytest.fixture(scope="session")
def full_corpus(tmp_path_factory):
    """8 firms x 16 quarters: enough history for the full backtest."""

    return build_corpus(
        tmp_path_factory.mktemp("full_corpus"), n_firms=8, n_quarters=16, seed=11
    )

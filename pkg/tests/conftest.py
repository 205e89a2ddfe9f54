import os

import pytest


@pytest.fixture(autouse=True)
def _isolate_output_env(monkeypatch):
    # keep experiment output routing independent of the invoking shell
    monkeypatch.delenv("GOSSIPEST_OUT", raising=False)

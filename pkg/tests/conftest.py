import os

import pytest


@pytest.fixture(scope="session", autouse=True)
def kernel_cache(tmp_path_factory):
    """Share one kernel cache across the whole test session so repeated
    solves at the same (name, lambda, L, n) hit the CSV cache."""
    cache = tmp_path_factory.mktemp("kernel_cache")
    old = os.environ.get("KDVF_CACHE_DIR")
    os.environ["KDVF_CACHE_DIR"] = str(cache)
    yield cache
    if old is None:
        os.environ.pop("KDVF_CACHE_DIR", None)
    else:
        os.environ["KDVF_CACHE_DIR"] = old

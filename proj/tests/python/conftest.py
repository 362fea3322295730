import os
import pathlib
import shutil

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]
DATA = pathlib.Path(os.environ.get("CSLBOUND_DATA_DIR", ROOT / "data"))


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("CSLBOUND_CLI") or shutil.which("cslbound")
    if not path:
        candidate = ROOT / "build" / "cslbound"
        path = str(candidate) if candidate.exists() else None
    if not path:
        pytest.skip("cslbound executable not found")
    return path


@pytest.fixture(scope="session")
def geometry_dir():
    return DATA / "geometry"

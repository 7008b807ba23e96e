import json
from pathlib import Path

import pytest

from randround.model import parse_hierarchy

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def age_schema():
    return parse_hierarchy((DATA_DIR / "age_schema.json").read_text())


@pytest.fixture(scope="session")
def celtic_schema():
    return parse_hierarchy((DATA_DIR / "celtic_schema.json").read_text())


def load_schema_doc(name: str) -> dict:
    return json.loads((DATA_DIR / name).read_text())

import pytest

from quakesim.fixtures import make_desk_fixture
from quakesim.service.config import assemble_inputs, load_config


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("desk_fixture")
    make_desk_fixture(outdir)
    return outdir


@pytest.fixture(scope="session")
def run_config(fixture_dir):
    return load_config(fixture_dir / "config.json")


@pytest.fixture(scope="session")
def run_inputs(run_config):
    return assemble_inputs(run_config)

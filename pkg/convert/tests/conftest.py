import pytest

from dtconvert import build_checkpoint


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory):
    """One tiny seeded checkpoint shared by the whole session."""
    directory = tmp_path_factory.mktemp("ckpt")
    build_checkpoint(str(directory), seed=0)
    return str(directory)

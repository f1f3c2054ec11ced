import numpy as np
import pytest

from bioptx.anatomy import AnatomySpec, generate_synthetic


@pytest.fixture(scope="session")
def case04():
    """Standard test case: 0.4cc spherical lesion near the gland center."""
    spec = AnatomySpec(lesion_volume_cc=0.4, lesion_center_mm=(5.0, 25.0, 45.0))
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def case02():
    spec = AnatomySpec(lesion_volume_cc=0.2, lesion_center_mm=(-4.0, 27.0, 43.0))
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def whole_gland_case():
    """Degenerate case: the lesion is the entire gland."""
    spec = AnatomySpec(lesion_semiaxes_mm=(25.0, 20.0, 22.5),
                       lesion_center_mm=(0.0, 25.0, 45.0))
    return generate_synthetic(spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

import sys

import numpy as np
import scipy


def test_python_version():
    major, minor = sys.version_info[:2]
    assert (major, minor) >= (3, 10), "Python >=3.10 required"


def test_float64_defaults():
    assert np.finfo(float).eps < 1e-15, "double precision required"
    assert int(scipy.__version__.split(".")[0]) >= 1, f"unexpected scipy {scipy.__version__}"

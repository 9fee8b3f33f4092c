import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anosovcheck.chamber import FaceType
from anosovcheck.cli import bundled_config_path, run_config
from anosovcheck.subgroup import FreeGroupPresentation, symmetric_square


SL2_G = np.array([[4.0, 0.0], [0.0, 0.25]])
_R = np.array([[np.cos(np.pi / 4), -np.sin(np.pi / 4)],
               [np.sin(np.pi / 4), np.cos(np.pi / 4)]])
SL2_H = _R @ SL2_G @ _R.T


@pytest.fixture()
def rng(request):
    # stable per-test stream, independent of execution order
    import zlib

    seed = zlib.crc32(request.node.nodeid.encode())
    return np.random.default_rng(seed)


@pytest.fixture(scope="session")
def sl2_pres():
    return FreeGroupPresentation((SL2_G, SL2_H))


@pytest.fixture(scope="session")
def sl3_pres():
    return FreeGroupPresentation((symmetric_square(SL2_G), symmetric_square(SL2_H)))


@pytest.fixture(scope="session")
def sanov_pres():
    return FreeGroupPresentation((np.array([[1.0, 2.0], [0.0, 1.0]]),
                                  np.array([[1.0, 0.0], [2.0, 1.0]])))


@pytest.fixture(scope="session")
def face2():
    return FaceType.make(2, [1])


@pytest.fixture(scope="session")
def face3():
    return FaceType.full(3)


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """One CLI run per bundled config, shared by all downstream tests."""
    out = {}
    for name in ("sl2-schottky", "sl3-symsq-schottky", "sanov-unipotent"):
        tmp = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        code = run_config(bundled_config_path(name), out_dir=str(tmp))
        elapsed = time.perf_counter() - t0
        reports = {}
        for rp in tmp.glob("*.json"):
            reports[rp.stem] = json.loads(rp.read_text())
        out[name] = {"exit": code, "reports": reports, "elapsed": elapsed,
                     "dir": tmp}
    return out

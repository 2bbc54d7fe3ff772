import hashlib
import os
import pickle
from pathlib import Path

import pytest

import quadcrawl

DESK_TRAJECTORIES = 200
DESK_POINTS = 100
DESK_SEED = 0

_verdicts = {}


def record_verdict(criterion: int, passed: bool, detail: str) -> None:
    _verdicts[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_verdicts):
        passed, detail = _verdicts[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")


def _source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(quadcrawl.__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def desk_run(request):
    """The desk-scale generation run (dataset, summary, per-start reports).

    Generating it takes tens of minutes on one core, so the result is kept in
    the pytest cache, keyed by the package source. ``pytest --cache-clear``
    forces a fresh run.
    """
    from quadcrawl.datagen import generate_dataset
    from quadcrawl.scenario import paper_scenario

    sc = paper_scenario()
    cache_dir = Path(request.config.cache.mkdir("quadcrawl-desk"))
    blob = cache_dir / f"{_source_digest()}-{sc.digest()}.pkl"
    if blob.is_file():
        return pickle.loads(blob.read_bytes())
    ds, summary, reports = generate_dataset(
        sc.world,
        sc.goal,
        sc.distribution,
        DESK_TRAJECTORIES,
        DESK_POINTS,
        seed=DESK_SEED,
        parallelism=os.cpu_count() or 1,
        scenario_hash=sc.digest(),
        return_reports=True,
    )
    blob.write_bytes(pickle.dumps((ds, summary, reports)))
    return ds, summary, reports

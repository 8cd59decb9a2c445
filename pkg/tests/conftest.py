import json

import pytest

from aismaca.data_io import emit_fasta, write_dataset
from aismaca.protein_pipeline import EncodingConfig
from aismaca.synthetic import planted_class_records, planted_family


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Small on-disk inputs for every CLI command."""
    root = tmp_path_factory.mktemp("ws")
    family = planted_family(8, 60, EncodingConfig(), 7)
    db, targets = family[:6], family[6:]
    paths = {
        "db": write_dataset(root / "db", db, name="db"),
        "classes": write_dataset(root / "cls", planted_class_records(4, 30, 1), name="cls"),
        "targets": root / "targets.fasta",
        "truth": root / "truth.ss",
        "evolve": root / "evolve.json",
        "encoding": root / "encoding.json",
    }
    paths["targets"].write_text(emit_fasta((t.id, t.sequence) for t in targets))
    paths["truth"].write_text(emit_fasta((t.id, t.structure) for t in targets))
    paths["evolve"].write_text(json.dumps({"pop_size": 16, "n_select": 4, "max_generations": 40, "plateau_window": 15}))
    paths["encoding"].write_text(json.dumps({"filter_length": 7, "ridge": 1e-6}))
    return paths


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    results = item.config._criteria
    # a failure in any phase fails the criterion; only the call phase can pass it
    if rep.failed or rep.skipped:
        results[number] = ("FAIL", title, detail or rep.when)
    elif rep.when == "call" and number not in results:
        results[number] = ("PASS", title, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config._criteria
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, detail = results[number]
        line = f"{status} criterion {number:2d}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))

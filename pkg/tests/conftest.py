import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _synth import model_vowel  # noqa: E402
from vocalfold.signal import write_wav  # noqa: E402
from vocalfold.vfmodel import ModelParams  # noqa: E402


@pytest.fixture
def vowel_wav(tmp_path):
    path = tmp_path / "vowel.wav"
    write_wav(path, model_vowel(seconds=1.0, tilt=0.7), 8000)
    return path


@pytest.fixture
def small_manifest(tmp_path):
    """Two short labelled clips, one per speaker."""
    rows = ["path,speaker_id,label,vowel"]
    for i, (params, label) in enumerate([(ModelParams(), "negative"), (ModelParams(0.3, 0.25, 0.2), "positive")]):
        p = tmp_path / f"spk{i}.wav"
        write_wav(p, model_vowel(params, seconds=0.15, seed=i, tilt=0.7), 8000)
        rows.append(f"{p.name},spk{i},{label},a")
    m = tmp_path / "manifest.csv"
    m.write_text("\n".join(rows) + "\n")
    return m


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)

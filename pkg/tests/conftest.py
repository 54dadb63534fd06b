from pathlib import Path

import numpy as np
import pytest

from hetero_esn.features import AudioSignal, FrameSpec, frame_count
from hetero_esn.io import write_labels, write_wav

TOY_RATE = 16000
TOY_TONES = (300.0, 1200.0, 3500.0)


def make_toy_corpus(root: Path, n_speakers: int = 6, per_speaker: int = 2, seconds: float = 0.6,
                    seed: int = 0, splits=None) -> Path:
    """Tone-per-class WAV corpus with frame labels and a manifest; returns the manifest path."""
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    spec = FrameSpec()
    flen, hop = spec.frame_length(TOY_RATE), spec.hop_length(TOY_RATE)
    n = int(seconds * TOY_RATE)
    T = frame_count(n, flen, hop)
    lines = []
    for s in range(n_speakers):
        split = None if splits is None else splits[s]
        for k in range(per_speaker):
            uid = f"spk{s}_u{k}"
            seg_len = n // 3
            classes = rng.permutation(3)
            t = np.arange(n) / TOY_RATE
            x = np.zeros(n)
            for j, c in enumerate(classes):
                sl = slice(j * seg_len, n if j == 2 else (j + 1) * seg_len)
                x[sl] = 0.3 * np.sin(2 * np.pi * TOY_TONES[c] * t[sl])
            x += 0.01 * rng.standard_normal(n)
            centers = np.arange(T) * hop + flen // 2
            labels = classes[np.minimum(centers // seg_len, 2)]
            write_wav(root / f"{uid}.wav", AudioSignal(x, TOY_RATE))
            write_labels(root / f"{uid}.lab", labels)
            fields = [uid, f"{uid}.wav", f"{uid}.lab", f"spk{s}"]
            if split:
                fields.append(split)
            lines.append("\t".join(fields))
    path = root / "manifest.tsv"
    path.write_text("".join(line + "\n" for line in lines))
    return path


@pytest.fixture
def toy_manifest(tmp_path):
    return make_toy_corpus(tmp_path / "corpus", splits=["train"] * 4 + ["val", "test"])


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

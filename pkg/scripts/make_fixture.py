"""Generate the bundled demo audio (a short synthetic melody, 16-bit mono WAV).

    python3 scripts/make_fixture.py [configs/fixtures/melody.wav]
"""
import sys
from pathlib import Path

import numpy as np

from cavitrans.modulation import AudioSignal, save_wav

SAMPLE_RATE = 16000
# (MIDI note, beats); 0 is a rest
TUNE = [(60, 1), (62, 1), (64, 1), (65, 1), (67, 2), (67, 2),
        (69, 1), (69, 1), (69, 1), (69, 1), (67, 2), (0, 1), (72, 1)]
BEAT = 0.12


def melody() -> np.ndarray:
    out = []
    for note, beats in TUNE:
        n = int(round(beats * BEAT * SAMPLE_RATE))
        t = np.arange(n) / SAMPLE_RATE
        if note == 0:
            out.append(np.zeros(n))
            continue
        f = 440.0 * 2 ** ((note - 69) / 12)
        tone = np.sin(2 * np.pi * f * t) + 0.3 * np.sin(4 * np.pi * f * t) + 0.1 * np.sin(6 * np.pi * f * t)
        env = np.minimum(1.0, t / 0.01) * np.exp(-t / (0.6 * beats * BEAT))
        out.append(tone * env)
    x = np.concatenate(out)
    return 0.8 * x / np.max(np.abs(x))


def main(path="configs/fixtures/melody.wav"):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    save_wav(AudioSignal(melody(), SAMPLE_RATE), path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main(*sys.argv[1:])

import numpy as np
import pytest

from clearspeech.audio import Waveform


def make_tone(freq_hz, seconds=1.0, rate=8000, amplitude=0.5, phase=0.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return Waveform(amplitude * np.sin(2 * np.pi * freq_hz * t + phase), rate)


@pytest.fixture
def tone():
    return make_tone

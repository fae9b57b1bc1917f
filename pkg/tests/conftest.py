import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))
torch.set_num_threads(1)


@pytest.fixture
def tiny_raw():
    from podsum.corpus import RawEpisode

    return [
        RawEpisode("e1", "s1", "Hello there. We talk about cats today! Cats are great.",
                   "Cats and more cats today. https://x.io/1 @cathost"),
        RawEpisode("e2", "s1", "Dogs bark. Dogs run fast? Yes they do.", "All about dogs and how they run"),
        RawEpisode("e3", "s2", "Short one.", "tiny @x"),
    ]


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])

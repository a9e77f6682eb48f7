"""Shared builders for the test suite."""

import numpy as np
import pytest

from acqinv.phantom import PATCH_SIZE, PatchSet

VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the run, capture or not."""
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def make_patchset(tissues, scanner="A", subject=0, level=None, noise=0.0, seed=0):
    """Constant-intensity patches, one per entry of ``tissues``.

    Pixel level defaults to tissue/4 so distinct tissues are linearly
    separable; ``noise`` adds seeded Gaussian jitter on top.
    """
    tissues = np.asarray(tissues, dtype=np.uint8)
    n = tissues.shape[0]
    if level is None:
        base = tissues.astype(np.float64) / 4.0
    else:
        base = np.full(n, float(level))
    pixels = np.repeat(base[:, None, None], PATCH_SIZE, axis=1)
    pixels = np.repeat(pixels, PATCH_SIZE, axis=2)
    if noise:
        rng = np.random.default_rng(seed)
        pixels = np.clip(pixels + rng.normal(0.0, noise, pixels.shape), 0.0, 1.0)
    return PatchSet(
        pixels=pixels,
        tissues=tissues,
        scanner_ids=np.full(n, scanner, dtype="U1"),
        subject_ids=np.full(n, subject, dtype=np.int32),
        centers=np.zeros((n, 2), dtype=np.int32),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def synthetic_portrait(rng, h, w):
    """Smooth colored background, soft-edged elliptical 'portrait' and its matte."""
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = rng.uniform(0.1, 0.9, size=3)
    tilt = rng.uniform(-0.4, 0.4, size=(2, 3))
    bg = base + yy[..., None] * tilt[0] + xx[..., None] * tilt[1]
    bg += 0.03 * rng.standard_normal((h, w, 3))
    fg = rng.uniform(0.2, 0.95, size=3) + 0.05 * rng.standard_normal((h, w, 3))

    cy, cx = rng.uniform(0.45, 0.6) * h, rng.uniform(0.4, 0.6) * w
    ry, rx = rng.uniform(0.25, 0.4) * h, rng.uniform(0.2, 0.3) * w
    r = np.sqrt(((np.arange(h)[:, None] - cy) / ry) ** 2 + ((np.arange(w)[None, :] - cx) / rx) ** 2)
    soft = rng.uniform(0.05, 0.2)
    alpha = np.clip((1.0 + soft - r) / (2 * soft), 0.0, 1.0)
    img = alpha[..., None] * fg + (1 - alpha[..., None]) * bg
    return np.clip(img, 0, 1), alpha


def make_corpus(root, n, seed=0, shape=(90, 72), orphans=False):
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "alphas").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        img, alpha = synthetic_portrait(rng, *shape)
        Image.fromarray(np.round(img * 255).astype(np.uint8)).save(root / "images" / f"p{i:03d}.png")
        Image.fromarray(np.round(alpha * 255).astype(np.uint8)).save(root / "alphas" / f"p{i:03d}.png")
    if orphans:
        Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(root / "images" / "lonely.png")
        Image.fromarray(np.zeros((8, 8), np.uint8)).save(root / "alphas" / "stray.png")
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_corpus(tmp_path):
    return make_corpus(tmp_path / "corpus", 6, seed=3)


def pytest_terminal_summary(terminalreporter):
    outcome = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if rep.failed or outcome.get(name) == "FAIL":
                outcome[name] = "FAIL"
            elif rep.when == "call":
                outcome[name] = "PASS"
    if not outcome:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(outcome, key=lambda n: int(n.split("_")[2])):
        num, *words = name[len("test_criterion_"):].split("_")
        terminalreporter.write_line(f"[{outcome[name]}] criterion {num}: {' '.join(words)}")

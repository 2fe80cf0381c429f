"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/python
then run:
    python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import holoscat

ROOT = Path(__file__).resolve().parent.parent


def detectors():
    return [(-5.0 + 0.1 * j, 5.0) for j in range(101)]


def test_forward_matches_mie():
    det = detectors()
    model = holoscat.ForwardModel(12.56, 15.12, det, nodes=64)
    bem = model.field([holoscat.Component.circle((0.0, 0.0), 0.2)])
    mie = holoscat.mie_field(0.2, (0.0, 0.0), 12.56, 15.12, det)
    num = sum(abs(a - b) ** 2 for a, b in zip(bem, mie))
    den = sum(abs(b) ** 2 for b in mie)
    assert math.sqrt(num / den) < 1e-8


def test_intensity_prediction():
    det = detectors()[:5]
    comp = holoscat.Component((0.1, 0.0), [0.2, 0.0, 0.02], [0.0, 0.01])
    field = holoscat.ForwardModel(12.56, 15.12, det).field([comp])
    inten = holoscat.ForwardModel(12.56, 15.12, det, operator="intensity").predict([comp])
    for u, d in zip(field, inten):
        assert abs(abs(u) ** 2 - d.real) < 1e-12


def test_component_stats():
    stats = holoscat.Component.circle((0.3, -0.1), 0.2).stats()
    assert abs(stats["area"] - math.pi * 0.04) < 1e-6
    assert abs(stats["center_of_mass"][0] - 0.3) < 1e-9
    assert not holoscat.Component((0.0, 0.0), [0.1, 0.2], [0.0]).is_admissible()


def test_noise_and_diagnostics():
    values = [complex(1.0, 0.0)] * 1000
    noisy, sigma = holoscat.add_noise(values, 0.05, seed=3)
    assert abs(sigma - 0.05) < 1e-15
    assert noisy == holoscat.add_noise(values, 0.05, seed=3)[0]
    log_mean, rel = holoscat.log_evidence([0.0, 0.0, 0.0])
    assert abs(log_mean) < 1e-15 and rel == 0.0
    chains = [[[float(i % 7)] for i in range(50)] for _ in range(4)]
    assert abs(holoscat.gelman_rubin(chains)[0] - 1.0) < 0.05


def test_pipeline_round_trip():
    cfg = holoscat.Config.load(str(ROOT / "configs" / "circle.toml"))
    text = cfg.to_toml()
    assert holoscat.Config.from_toml(text).hash() == cfg.hash()
    with tempfile.TemporaryDirectory() as out:
        assert cfg.run(out=out, stages=["generate", "prior", "map"])
        names = {p.name for p in Path(out).iterdir()}
        assert {"manifest.toml", "map.toml", "data_invert.csv"} <= names
    try:
        holoscat.Config.from_toml("[scene]\nkappa_e = 1.0\nbogus = 2\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown keys must be rejected")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name}: ok")

"""Smoke test for the `ees` extension module.

    pip install maturin
    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math
import os
import tempfile

import ees


def main():
    assert ees.prediction_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert abs(ees.prediction_error([1.0, 0.0], [0.0, 1.0]) - 1.0) < 1e-12
    assert abs(ees.prediction_error([1.0, 0.0], [-1.0, 0.0]) - 2.0) < 1e-12
    n = ees.normalize_frame([3.0, 4.0])
    assert abs(math.hypot(*n) - 1.0) < 1e-12

    rows = [[1.0, 0.0]] * 5 + [[0.0, 1.0]] * 5
    engine = ees.Engine(2)
    closed = [seg for row in rows for seg in engine.ingest(row)]
    tail = engine.flush()
    level1 = [(s["start_frame"], s["end_frame"]) for s in closed + tail if s["level"] == 1]
    assert level1 == [(0, 4), (5, 9)], level1
    assert all(s["provisional"] for s in tail)
    assert engine.clock == 10

    h = ees.segment(rows, threshold=[0.4, 0.4, 0.4])
    assert h.counts()[0] == 2
    events = h.consolidate()
    assert events and all(len(e[k]) == 2 for e in events for k in ("abstract", "coarse", "fine"))

    frames, truth = ees.generate(16, [(20, 0, 0.05, 0.0), (20, 1, 0.05, 0.0), (20, 0, 0.05, 0.0)], seed=7)
    assert len(frames) == 60 and truth == [20, 40]
    h = ees.segment(frames)
    predicted = [s["start_frame"] for s in h.segments(1)][1:]
    _, _, f1 = ees.boundary_f1(predicted, truth, tolerance=1)
    assert f1 == 1.0, (predicted, truth)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.embs")
        ees.write_stream(path, frames, fps=(30, 1))
        dim, back = ees.read_stream(path)
        assert dim == 16 and back == frames

    try:
        ees.Engine(2, threshold=3.0)
    except ValueError:
        pass
    else:
        raise AssertionError("threshold 3.0 accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()

import math
import random

from epimem import idf
from epimem.ltm import FilterPolicy, filter_snapshots


def stream(n, hz, value_fn):
    spacing = int(1_000_000 / hz)
    return [(i * spacing, value_fn(i)) for i in range(n)]


def test_20hz_stream_downsampled_to_5hz():
    snapshots = stream(80, 20, lambda i: idf.Map({"v": idf.Float64(i)}))
    kept = filter_snapshots(snapshots, FilterPolicy(max_hz=5))
    # every 4th snapshot survives
    assert [ts for ts, _ in kept] == [ts for ts, _ in snapshots][::4]
    assert len(kept) / len(snapshots) == 0.25


def test_constant_stream_with_epsilon_keeps_only_first():
    snapshots = stream(50, 100, lambda i: idf.Map({"v": idf.Float64(3.0)}))
    kept = filter_snapshots(snapshots, FilterPolicy(similarity_epsilon=0.5))
    assert len(kept) == 1
    assert kept[0] == snapshots[0]


def test_identity_policy_keeps_everything():
    rng = random.Random(5)
    snapshots = stream(40, 30, lambda i: idf.Map({"v": idf.Float64(rng.random())}))
    kept = filter_snapshots(snapshots, FilterPolicy())
    assert kept == snapshots


def test_layout_mismatch_satisfies_similarity_but_not_rate():
    # alternate between two layouts at a rate above max_hz
    def value(i):
        if i % 2 == 0:
            return idf.Map({"v": idf.Float64(1.0)})
        return idf.Map({"v": idf.Float64(1.0), "w": idf.Float64(1.0)})

    snapshots = stream(40, 20, value)
    # without a rate clause every snapshot passes: consecutive layouts mismatch
    unlimited = filter_snapshots(snapshots, FilterPolicy(similarity_epsilon=100.0))
    assert unlimited == snapshots
    # with 5 Hz the rate clause still applies; after the 200 ms floor the next
    # mismatching layout appears one 50 ms step later, i.e. every 5th snapshot
    kept = filter_snapshots(snapshots, FilterPolicy(max_hz=5, similarity_epsilon=100.0))
    assert [ts for ts, _ in kept] == [ts for ts, _ in snapshots][::5]


def test_rate_bound_over_sliding_windows():
    rng = random.Random(99)
    ts = 0
    snapshots = []
    for i in range(300):
        ts += rng.randint(5_000, 120_000)
        snapshots.append((ts, idf.Map({"v": idf.Float64(rng.random() * 10)})))
    max_hz = 8.0
    kept = [t for t, _ in filter_snapshots(snapshots, FilterPolicy(max_hz=max_hz))]
    window = 2_000_000 / max_hz * 2  # any window longer than 2/max_hz
    for start in range(0, snapshots[-1][0], 50_000):
        inside = [t for t in kept if start <= t < start + window]
        assert len(inside) <= math.ceil(window / 1_000_000 * max_hz) + 1


def test_epsilon_and_rate_combined():
    # slow drift below epsilon is suppressed even at an admissible rate
    snapshots = stream(30, 1, lambda i: idf.Map({"v": idf.Float64(i * 0.001)}))
    kept = filter_snapshots(snapshots, FilterPolicy(max_hz=10, similarity_epsilon=0.01))
    assert len(kept) < len(snapshots)
    values = [v.entries["v"].value for _, v in kept]
    for a, b in zip(values, values[1:]):
        assert abs(b - a) >= 0.01 - 1e-12

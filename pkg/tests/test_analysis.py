import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrae.analysis.entropy import (
    FeatureRecord, block_average, entropy_change, entropy_csv, entropy_profile, feature_records,
    histogram_entropy, proxy_entropy_change, proxy_profile,
)
from vrae.analysis.pareto import (
    ParetoPoint, dominates, pareto_csv, pareto_front, points_from_reports, reference_reports,
)
from vrae.analysis.plots import entropy_svg, pareto_svg
from vrae.model import VraeConfig, build_network

from oracles import brute_force_front, hand_binned_entropy


# -- entropy --------------------------------------------------------------------


def test_constant_tensor_has_zero_entropy():
    assert histogram_entropy(np.full(100, 3.0)) == 0.0


def test_uniform_fill_is_ln_256():
    values = np.repeat(np.arange(256) + 0.5, 4)
    assert abs(histogram_entropy(values) - math.log(256)) <= 1e-9


def test_matches_hand_binning():
    rng = np.random.default_rng(0)
    for shape in [(1000,), (2, 8, 5, 5), (7, 3)]:
        v = rng.standard_normal(shape)
        assert abs(histogram_entropy(v) - hand_binned_entropy(v)) <= 1e-12


def test_entropy_bounds_and_affine_invariance():
    v = np.random.default_rng(1).random(5000)
    h = histogram_entropy(v)
    assert 0 <= h <= math.log(256)
    assert histogram_entropy(3.5 * v - 2.0) == pytest.approx(h, abs=1e-12)


def test_empty_tensor_rejected():
    with pytest.raises(ValueError):
        histogram_entropy(np.array([]))


def test_entropy_change_examples():
    assert entropy_change([5.0, 3.0, 2.5]) == [-2.0, -0.5]
    assert entropy_change([1.7, 1.7]) == [0.0]
    with pytest.raises(ValueError):
        entropy_change([1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 6, allow_nan=False), min_size=2, max_size=20))
def test_entropy_change_telescopes(h):
    assert sum(entropy_change(h)) == pytest.approx(h[-1] - h[0], abs=1e-9)


def test_proxy_hand_values():
    assert proxy_entropy_change(9, 7, 3, 3, 1.0) == 0.0
    assert proxy_entropy_change(4, 4, 3, 3, math.e) == pytest.approx(4.0, abs=1e-12)
    assert abs(proxy_entropy_change(6, 5, 3, 2, 0.5) - (-11.0904)) <= 1e-4
    assert proxy_entropy_change(6, 5, 3, 2, -0.5) == proxy_entropy_change(6, 5, 3, 2, 0.5)


def test_proxy_undefined_and_invalid():
    assert proxy_entropy_change(4, 4, 3, 3, 0.0) is None
    assert proxy_entropy_change(4, 4, 3, 3, 1e-13) is None
    with pytest.raises(ValueError):
        proxy_entropy_change(2, 4, 3, 3, 0.5)


def test_block_average_examples():
    assert block_average([[-1.5]]).avg_delta_h == [-1.5]
    assert block_average([[-2.0, -4.0]]).avg_delta_h == [-3.0]
    assert block_average([[None, -2.0, -4.0], [1.0]], "m").avg_delta_h == [-3.0, 1.0]
    with pytest.raises(ValueError):
        block_average([[1.0], []])
    with pytest.raises(ValueError):
        block_average([[None]])


def test_block_average_matches_regroup_oracle():
    rng = np.random.default_rng(2)
    sizes = [1, 9, 12, 18]
    flat = list(rng.standard_normal(sum(sizes)))
    labels = [k for k, n in enumerate(sizes) for _ in range(n)]
    groups, start = [], 0
    for n in sizes:
        groups.append(flat[start:start + n])
        start += n
    got = block_average(groups).avg_delta_h
    for k in range(len(sizes)):
        members = [v for v, lab in zip(flat, labels) if lab == k]
        assert got[k] == pytest.approx(sum(members) / len(members), abs=1e-12)
    shuffled = [list(rng.permutation(g)) for g in groups]
    np.testing.assert_allclose(block_average(shuffled).avg_delta_h, got, atol=1e-12)


def test_feature_records_follow_block_structure():
    cfg = VraeConfig.reduced(3, size=32, blocks=(3, 4, 6, 3))
    net = build_network(cfg, seed=0)
    x = np.random.default_rng(3).random((2, 3, 32, 32), dtype=np.float32)
    blocks = feature_records(net, x)
    # stem: input + one conv unit; bottleneck stages: input + three units per block
    assert [len(b) for b in blocks] == [2, 1 + 3 * 3, 1 + 3 * 4]
    assert blocks[0][0].dims == (3, 32, 32)
    assert all(isinstance(r, FeatureRecord) and 0 <= r.entropy <= math.log(256) for b in blocks for r in b)
    layers = [r.layer for b in blocks for r in b]
    assert layers == list(range(len(layers)))
    prof = entropy_profile(net, x)
    assert prof.model == "VRAE3" and len(prof.avg_delta_h) == 3


def test_proxy_profile_groups_main_convs():
    net = build_network(VraeConfig.reduced(3, size=32), seed=1)
    prof = proxy_profile(net)
    assert len(prof.avg_delta_h) == 3
    c11 = float(net.conv_layers()[0][0].weight[0, 0, 0, 0])
    # stem conv alone: 7x7 kernel over the raw input
    assert prof.avg_delta_h[0] == pytest.approx((32 - 7 + 1) ** 2 * math.log(abs(c11)), rel=1e-6)


def test_entropy_csv_format():
    text = entropy_csv([block_average([[-1.0], [-2.0, -3.0]], "AE3")])
    assert text == "model,block,avg_delta_h\nAE3,1,-1.0000000000\nAE3,2,-2.5000000000\n"


# -- pareto ---------------------------------------------------------------------


def pts(*coords, maximize=True):
    return [ParetoPoint(f"m{i}", q, f, maximize=maximize) for i, (q, f) in enumerate(coords)]


def test_single_and_dominated_pair():
    (p,) = pts((1.0, 1.0))
    assert pareto_front([p]) == [p]
    a, b = pts((2.0, 2.0), (1.0, 1.0))
    assert dominates(a, b) and not dominates(b, a)
    assert pareto_front([b, a]) == [a]


def test_duplicates_all_retained():
    a, b, c = pts((1.0, 5.0), (1.0, 5.0), (0.5, 1.0))
    assert [p.model for p in pareto_front([a, b, c])] == ["m0", "m1"]


def test_nmse_is_minimized():
    a, b = pts((0.1, 10.0), (0.2, 10.0), maximize=False)
    assert pareto_front([a, b]) == [a]


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        ParetoPoint("x", float("nan"), 1.0)


def test_front_sorted_by_fps_descending():
    front = pareto_front(pts((1, 9), (3, 1), (2, 5), (0, 2)))
    assert [p.fps for p in front] == [9, 5, 1]


@pytest.mark.parametrize("quality", ["psnr", "ssim", "nmse"])
def test_reference_front(quality):
    points = points_from_reports(reference_reports(), quality)
    assert len(points) == 10
    front = pareto_front(points)
    names = sorted(p.model for p in front)
    assert names == sorted(brute_force_front(points))
    if quality == "psnr":
        assert names == ["AE2", "VRAE2", "VRAE3"]
        coords = {p.model: (p.quality, p.fps) for p in front}
        assert coords["AE2"] == (27.787, 411) and coords["VRAE2"] == (30.319, 399)
        assert coords["VRAE3"] == (31.052, 194)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 20)), min_size=1, max_size=40),
       st.booleans())
def test_front_properties_against_brute_force(coords, maximize):
    points = [ParetoPoint(f"m{i}", float(q), float(f), maximize=maximize) for i, (q, f) in enumerate(coords)]
    front = pareto_front(points)
    assert sorted(p.model for p in front) == sorted(brute_force_front(points))
    assert not any(dominates(a, b) for a in front for b in front)
    rest = [p for p in points if p not in front]
    assert all(any(dominates(f, p) for f in front) for p in rest)


def test_pareto_csv_marks_front():
    points = points_from_reports(reference_reports(), "psnr")
    lines = pareto_csv(points, "psnr").splitlines()
    assert lines[0] == "model,quality_metric,quality,fps,params,on_front"
    on = [ln.split(",")[0] for ln in lines[1:] if ln.endswith(",true")]
    assert sorted(on) == ["AE2", "VRAE2", "VRAE3"]


# -- plots ----------------------------------------------------------------------


def test_svgs_are_deterministic_without_timestamp():
    profs = [block_average([[-6.0], [-2.0]], "AE3"), block_average([[-1.5], [-2.5]], "VRAE3")]
    a, b = entropy_svg(profs, timestamp=False), entropy_svg(profs, timestamp=False)
    assert a == b and a.lstrip().startswith(("<?xml", "<svg"))
    points = points_from_reports(reference_reports(), "psnr")
    assert pareto_svg(points, "psnr", timestamp=False) == pareto_svg(points, "psnr", timestamp=False)
    assert "generated" in pareto_svg(points, "psnr", timestamp=True)

import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nerfstream.eval import (
    CSV_COLUMNS,
    PSNR_INF,
    RDCurve,
    RDPoint,
    build_curve,
    compare_curves,
    export_csv,
    export_plot,
    import_csv,
    mean_psnr,
    psnr,
    rate_bpp,
    spearman,
)
from nerfstream.pipeline import StrategyResult


def curve(tag, rates, psnrs, anchor=40.0):
    return RDCurve(tag, [RDPoint(r, p, i, tag, int(r * 1000)) for i, (r, p) in enumerate(zip(rates, psnrs))], anchor)


def result(tag, qp, bits, psnrs, n=2, size=4):
    imgs = [np.zeros((size, size, 3))] * n
    return StrategyResult(tag, qp, bits, imgs, list(psnrs))


# --- rate ---------------------------------------------------------------------


def test_rate_examples():
    assert rate_bpp(128_640_000, 250, 960, 536) == 1.0
    assert rate_bpp(0, 10, 8, 8) == 0.0
    assert rate_bpp(1_000_000, 300, 960, 536) == pytest.approx(0.0064780, abs=5e-8)


@given(st.integers(0, 10**12), st.integers(1, 1000), st.integers(1, 4000), st.integers(1, 4000))
def test_rate_is_linear_in_bits(b, n, w, h):
    assert rate_bpp(2 * b, n, w, h) == pytest.approx(2 * rate_bpp(b, n, w, h), rel=1e-15)


def test_rate_rejects_empty():
    with pytest.raises(ValueError):
        rate_bpp(10, 0, 8, 8)


# --- PSNR ---------------------------------------------------------------------


def test_psnr_examples(rng):
    img = rng.random((8, 8, 3)) * 0.5
    assert psnr(img, img) == PSNR_INF
    shifted = np.round(img * 255) / 255 + 16 / 255
    assert psnr(shifted, img) == pytest.approx(10 * math.log10(65025 / 256), abs=1e-9)
    assert psnr(shifted, img) == pytest.approx(24.05, abs=0.005)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


@given(st.integers(0, 2**31))
def test_psnr_symmetric(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((6, 6, 3)), r.random((6, 6, 3))
    assert psnr(a, b) == psnr(b, a)


def test_psnr_falls_with_noise_amplitude(rng):
    ref = rng.random((32, 32, 3)) * 0.6 + 0.2
    u = rng.uniform(-1, 1, ref.shape)
    scores = [psnr(ref + a * u, ref) for a in (2 / 255, 4 / 255, 8 / 255, 16 / 255, 32 / 255)]
    assert all(b < a for a, b in zip(scores, scores[1:]))


def test_mean_psnr_skips_infinite():
    assert mean_psnr([30.0, PSNR_INF, 32.0]) == 31.0
    assert mean_psnr([PSNR_INF]) == PSNR_INF


# --- curves ---------------------------------------------------------------------


def test_build_curve_sorts_and_attaches_anchor():
    rs = [result("p", qp, bits, [30 + qp / 10, 31 + qp / 10]) for qp, bits in [(3, 400), (1, 1200), (2, 800), (0, 1600)]]
    anchor = result("anchor", None, 10**6, [35.0, 35.0])
    c = build_curve(rs, anchor)
    assert len(c.points) == 4
    assert list(c.rates) == sorted(c.rates)
    assert c.anchor_psnr == 35.0
    assert c.points[0].rate == rate_bpp(400, 2, 4, 4)
    assert c.points[0].psnr == pytest.approx(30.8)


def test_build_curve_duplicate_rates_keep_best(caplog):
    rs = [result("p", 1, 500, [30.0]), result("p", 2, 500, [31.0]), result("p", 3, 100, [20.0])]
    c = build_curve(rs)
    assert [p.qp for p in c.points] == [3, 2]
    assert "duplicate rate" in caplog.text


def test_build_curve_needs_two_points_of_one_strategy():
    with pytest.raises(ValueError):
        build_curve([result("p", 1, 500, [30.0])])
    with pytest.raises(ValueError):
        build_curve([result("p", 1, 500, [30.0]), result("q", 2, 400, [30.0])])


def test_curve_rates_must_ascend():
    with pytest.raises(ValueError):
        curve("x", [0.2, 0.1], [30, 31])


def test_compare_with_itself_and_shifted():
    a = curve("a", [0.1, 0.2, 0.4, 0.8], [28.0, 31.0, 33.5, 35.0])
    assert compare_curves(a, a).gap_db == pytest.approx(0.0, abs=1e-12)
    b = curve("b", a.rates, a.psnrs + 1.0)
    r = compare_curves(b, a)
    assert r.gap_db == pytest.approx(1.0, abs=1e-6)
    assert r.a_dominates and not r.b_dominates


@given(
    st.lists(st.floats(20, 45), min_size=4, max_size=4),
    st.lists(st.floats(20, 45), min_size=4, max_size=4),
    st.floats(0.5, 2.0),
)
def test_compare_is_antisymmetric(pa, pb, scale):
    a = curve("a", [0.1, 0.2, 0.4, 0.8], pa)
    b = curve("b", [0.15 * scale, 0.3 * scale, 0.5 * scale, 0.9 * scale], pb)
    ab, ba = compare_curves(a, b), compare_curves(b, a)
    assert ab.comparable == ba.comparable
    if ab.comparable:
        assert ab.gap_db == pytest.approx(-ba.gap_db, abs=1e-9)


def test_disjoint_curves_are_incomparable():
    a = curve("a", [0.1, 0.2], [30, 31])
    b = curve("b", [0.5, 0.9], [32, 33])
    assert compare_curves(a, b).status == "incomparable"


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [40, 30, 20, 10]) == pytest.approx(-1.0)


# --- export ----------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    curves = [
        curve("param_based", [0.123456789, 0.2, 0.4], [28.000000001, 31.5, 33.25], 36.1),
        curve("pixel_based/inter", [0.3, 0.35], [29.0, 30.0], 36.1),
    ]
    path = export_csv(curves, tmp_path / "rd.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) - 1 == sum(len(c.points) for c in curves)
    assert import_csv(path) == curves


def test_plot_is_valid_svg(tmp_path):
    curves = [curve("a", [0.1, 0.2, 0.4], [28.0, 31.0, 33.0], 35.0), curve("b", [0.15, 0.3], [27.0, 32.0], 35.0)]
    path = export_plot(curves, tmp_path / "rd.svg", title="toy")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")

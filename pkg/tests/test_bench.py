import numpy as np
import pytest

from tsquery import taskspec
from tsquery.bench import (
    BadParameters,
    FlatBackground,
    InsufficientData,
    OutOfBounds,
    Primitive,
    PrimitiveKind,
    calibrate_gain,
    generate_suite,
    inject,
    instantiate_template,
    load_suite,
    qa_check,
    remeasure_snr,
    render_primitive,
    sample_background,
    solve_bruteforce,
    write_suite,
)
from tsquery.metrics import score_answer_value
from tsquery.model import SeriesSlice


def _slice(values, channel="c", step=900):
    ts = 1577836800 + step * np.arange(len(values))
    return SeriesSlice(channel, ts, np.asarray(values, dtype=float))


# ---------------------------------------------------------------------------
# primitives


def test_spike_peak_at_center():
    p = Primitive(PrimitiveKind.SPIKE, {"amplitude": 3.0, "center": 40, "lam": 0.01})
    vals = render_primitive(p, 100)
    assert vals[40] == pytest.approx(3.0)
    assert np.argmax(vals) == 40


def test_box_saturates():
    p = Primitive(PrimitiveKind.BOX, {"start": 20, "end": 80, "steepness": 10.0})
    vals = render_primitive(p, 100)
    assert vals[50] == pytest.approx(1.0, abs=1e-4)
    assert vals[5] == pytest.approx(0.0, abs=1e-4)


def test_wave_periodicity():
    p = Primitive(PrimitiveKind.WAVE, {"components": [(1.0, 30.0, 0.0)]})
    vals = render_primitive(p, 90)
    assert np.allclose(vals[:60], vals[30:], atol=1e-9)


def test_primitive_validation():
    with pytest.raises(BadParameters):
        Primitive(PrimitiveKind.BOX, {"start": 80, "end": 20, "steepness": 1.0})
    with pytest.raises(BadParameters):
        Primitive(PrimitiveKind.WAVE, {"components": []})
    with pytest.raises(BadParameters):
        Primitive(PrimitiveKind.SPIKE, {"lam": -1.0})


# ---------------------------------------------------------------------------
# background + gain + injection


def test_sample_background_prefers_flat(store):
    rng = np.random.default_rng(0)
    flat = rng.normal(0, 0.1, 500)
    wild = rng.normal(0, 5.0, 500)
    store.write_points("c", 900 * np.arange(1000), np.concatenate([wild, flat]))
    sl = sample_background(store, "c", 200, stationarity_scan=40,
                           rng=np.random.default_rng(1))
    assert int(sl.timestamps[0]) // 900 >= 450  # chosen inside the flat half
    with pytest.raises(InsufficientData):
        sample_background(store, "c", 5000)


def test_sample_background_deterministic(store):
    store.write_points("c", 900 * np.arange(800),
                       np.random.default_rng(2).normal(0, 1, 800))
    a = sample_background(store, "c", 100, rng=np.random.default_rng(9))
    b = sample_background(store, "c", 100, rng=np.random.default_rng(9))
    assert int(a.timestamps[0]) == int(b.timestamps[0])


def test_calibrate_gain_closed_form():
    bg = _slice(np.array([2.0, -2.0] * 50))  # std = 2
    pattern = np.array([0.5, 1.0, 0.5])
    alpha = calibrate_gain(bg, pattern, target_snr=1.5)
    assert alpha == pytest.approx(1.5 * 2.0 / 1.0)
    # definition round-trip: measured SNR equals the target
    measured = alpha * np.abs(pattern).max() / bg.values.std()
    assert measured == pytest.approx(1.5)
    with pytest.raises(FlatBackground):
        calibrate_gain(_slice(np.ones(100)), pattern, 1.0)


def test_inject_identity_and_commutativity():
    rng = np.random.default_rng(3)
    bg = _slice(rng.normal(0, 1, 300))
    pattern = taskspec.gaussian_shape(41, 20, 6)
    out, window = inject(bg, pattern, 0.0, 100)
    assert np.array_equal(out.values, bg.values)

    p2 = taskspec.box_shape(30, 5, 25, 2.0)
    a1, _ = inject(bg, pattern, 2.0, 40)
    a2, _ = inject(a1, p2, 3.0, 200)
    b1, _ = inject(bg, p2, 3.0, 200)
    b2, _ = inject(b1, pattern, 2.0, 40)
    assert np.allclose(a2.values, b2.values)


def test_inject_support_window():
    rng = np.random.default_rng(4)
    bg = _slice(rng.normal(0, 1, 300))
    pattern = taskspec.gaussian_shape(61, 30, 8)
    _, window = inject(bg, pattern, 2.0, 100)
    lo, hi = taskspec.support_bounds(pattern)
    assert window.start == int(bg.timestamps[100 + lo])
    assert window.end == int(bg.timestamps[100 + hi]) + 900
    with pytest.raises(OutOfBounds):
        inject(bg, pattern, 1.0, 290)


# ---------------------------------------------------------------------------
# instances


@pytest.mark.parametrize("family", taskspec.FAMILIES)
def test_instance_wellformed(store, family):
    inst = instantiate_template(family, 1234, store, inst_id=f"t_{family}",
                                channel=f"bench_t_{family}")
    assert inst.task_type == family
    assert inst.level == taskspec.LEVEL_FOR_FAMILY[family]
    assert inst.ground_truth.kind is inst.answer_kind
    assert taskspec.parse_question(inst.question) is not None
    if inst.level >= 2:
        assert inst.snr is not None and inst.snr > 1.0
        snr = remeasure_snr(inst, store)
        assert snr is not None and snr > 1.0
    # context covers every injected window
    if inst.injected and "windows" in inst.injected:
        from tsquery.model import TimeWindow

        for w in inst.injected["windows"]:
            tw = TimeWindow.from_json(w)
            assert inst.context_window.start <= tw.start
            assert tw.end <= inst.context_window.end


def test_qa_rejects_low_snr(store):
    inst = instantiate_template("SI", 99, store, inst_id="qa_si", channel="bench_qa_si")
    # fake a weak injection claim by scaling the stored data back down
    inst.injected["alpha"] = inst.injected["alpha"] * 0.01
    status, reason = qa_check(inst, store)
    assert status == "REJECT" and reason == "low_snr"


def test_qa_rejects_planted_decoy(store):
    inst = instantiate_template("SI", 7, store, inst_id="qa_decoy", channel="bench_qa_decoy")
    # plant an identical second copy of the pattern elsewhere in the context
    sl = store.fetch_all("bench_qa_decoy")
    template = taskspec.si_template(inst.injected["pattern"], inst.injected["width_hours"])
    vals = sl.values.copy()
    at = inst.injected["at"]
    decoy_at = at + 2 * taskspec.POINTS_PER_DAY
    if decoy_at + template.size > vals.size:
        decoy_at = at - 2 * taskspec.POINTS_PER_DAY
    vals[decoy_at:decoy_at + template.size] += inst.injected["alpha"] * template
    store.write_points("bench_qa_decoy", sl.timestamps, vals)
    status, reason = qa_check(inst, store)
    assert status == "REJECT" and reason == "ambiguous"


def test_suite_generation_and_io(store, tmp_path):
    counts = {"AR": 2, "SI": 2, "PD": 1, "CsA": 1}
    instances = generate_suite(store, profile="DEFAULT", counts=counts, seed=11)
    assert len(instances) == 6
    by_family = {}
    for inst in instances:
        by_family[inst.task_type] = by_family.get(inst.task_type, 0) + 1
    assert by_family == counts
    # solvable by construction
    for inst in instances:
        pred = solve_bruteforce(inst, store)
        assert score_answer_value(pred, inst.ground_truth) >= 0.95

    path = tmp_path / "suite.jsonl"
    write_suite(path, instances, "DEFAULT", 11, counts)
    again, manifest = load_suite(path)
    assert manifest["seed"] == 11 and manifest["total"] == 6
    assert [i.to_json() for i in again] == [i.to_json() for i in instances]


def test_suite_determinism(store, tmp_path):
    counts = {"AR": 1, "SM": 1}
    a = generate_suite(store, counts=counts, seed=3)
    b = generate_suite(store, counts=counts, seed=3)
    assert [i.to_json() for i in a] == [i.to_json() for i in b]


def test_lite_profile_contexts(store):
    instances = generate_suite(store, profile="LITE",
                               counts={"SI": 1, "CT": 1, "CsA": 1}, seed=21)
    for inst in instances:
        points = inst.context_window.duration_seconds // taskspec.BENCH_INTERVAL_SECONDS
        assert points == taskspec.LITE_CONTEXT_POINTS
    assert {i.task_type for i in instances} == set(taskspec.LITE_FAMILIES)


def test_lite_rejects_other_families(store):
    with pytest.raises(BadParameters):
        generate_suite(store, profile="LITE", counts={"AR": 1}, seed=0)

import io

import numpy as np
import pytest

from foldkit.integrate import Trajectory
from foldkit.mmo import (SWEEP_HEADER, AnalysisConfig, AttractorKind, MmoSignature, Peak,
                         SimConfig, classify_attractor, decay_ratio, extract_peaks, signature,
                         signature_from_tokens, sweep_c1, write_sweep_csv)
from foldkit.system import Params

from conftest import REGIMES


def traj_of(t, x1, x2=None):
    x2 = np.zeros_like(t) if x2 is None else x2
    states = np.column_stack([x1, x2, np.zeros_like(t), np.zeros_like(t)])
    return Trajectory(np.asarray(t), states)


def peaks_of(proms):
    return [Peak(float(i), 0.0, p) for i, p in enumerate(proms)]


# -- extract_peaks ----------------------------------------------------------------------
def test_constant_has_no_peaks():
    t = np.linspace(0, 10, 1001)
    assert extract_peaks(traj_of(t, np.full_like(t, 0.3)), transient_fraction=0.0) == []


def test_sine_peaks():
    t = np.arange(0, 20 + 1e-9, 0.01)
    pk = extract_peaks(traj_of(t, np.sin(t)), transient_fraction=0.0)
    assert len(pk) == 3
    for k, p in enumerate(pk):
        assert p.t == pytest.approx(np.pi / 2 + 2 * np.pi * k, abs=0.01)
        assert p.value == pytest.approx(1.0, abs=1e-4)


def test_sine_with_jitter():
    rng = np.random.default_rng(1)
    t = np.arange(0, 20 + 1e-9, 0.01)
    x = np.sin(t) + 1e-6 * rng.standard_normal(t.size)
    pk = extract_peaks(traj_of(t, x), transient_fraction=0.0, noise_floor=1e-4)
    assert len(pk) == 3
    assert [round(p.t, 1) for p in pk] == [round(np.pi / 2 + 2 * np.pi * k, 1) for k in range(3)]


def test_transient_discarded():
    t = np.arange(0, 20 + 1e-9, 0.01)
    pk = extract_peaks(traj_of(t, np.sin(t)), transient_fraction=0.5)
    assert [round(p.t, 1) for p in pk] == [round(np.pi / 2 + 2 * np.pi * 2, 1)]


def test_peak_cut_by_window_end_keeps_full_prominence():
    # large spike whose descent is cut off by the end of the record
    t = np.linspace(0, 3, 3001)
    x = np.where(t < 1, -2.0, np.where(t < 2.9, -2 + 4 * (t - 1) / 1.9, 2 - 10 * (t - 2.9)))
    pk = extract_peaks(traj_of(t, x), transient_fraction=0.0)
    assert len(pk) == 1
    assert pk[0].prominence == pytest.approx(4.0 - 1.0 + 1.0, abs=0.01)  # drop to -2 on the left


def test_bad_transient_fraction():
    t = np.linspace(0, 1, 10)
    with pytest.raises(ValueError):
        extract_peaks(traj_of(t, t), transient_fraction=1.0)


# -- signature -------------------------------------------------------------------------
def test_signature_all_large():
    assert signature(peaks_of([2.0, 3.0, 2.5])).blocks == ((3, 0),)


def test_signature_pattern():
    sig = signature(peaks_of([3, 0.1, 0.1, 3, 0.1, 0.1]))
    assert sig.blocks == ((1, 2), (1, 2))
    assert str(sig) == "1^2 1^2"


def test_signature_ignores_subthreshold_ripple():
    assert signature(peaks_of([3, 0.001, 0.1, 3])).blocks == ((1, 1), (1, 0))


def test_signature_leading_small():
    assert signature(peaks_of([0.1, 0.1, 3, 0.2])).blocks == ((0, 2), (1, 1))


def test_signature_thresholds_validated():
    with pytest.raises(ValueError):
        signature([], large=0.01, small=0.1)


@pytest.mark.parametrize("tokens", ["", "L", "s", "LLss", "ssLsLLs", "LsLsLs", "sssLLL"])
def test_signature_canonical_and_idempotent(tokens):
    sig = signature_from_tokens(tokens)
    assert sig.tokens() == tokens
    assert signature_from_tokens(sig.tokens()) == sig
    for (_, s1), (L2, _) in zip(sig.blocks, sig.blocks[1:]):
        assert s1 >= 1 and L2 >= 1  # nothing mergeable


# -- classification on synthetic data -----------------------------------------------------
def test_classify_flat_is_equilibrium():
    t = np.linspace(0, 100, 10001)
    c = classify_attractor(traj_of(t, -1 + 1e-6 * np.sin(t)))
    assert c.kind is AttractorKind.EQUILIBRIUM


def test_classify_decaying_small_oscillation_is_equilibrium():
    t = np.linspace(0, 500, 50001)
    c = classify_attractor(traj_of(t, -1 + 0.01 * np.exp(-0.01 * t) * np.sin(t)))
    assert c.kind is AttractorKind.EQUILIBRIUM and c.decay < 0.5


def test_classify_sustained_small_oscillation():
    t = np.linspace(0, 500, 50001)
    c = classify_attractor(traj_of(t, -1 + 0.2 * np.sin(t)))
    assert c.kind is AttractorKind.SMALL_CYCLE and c.signature.large == 0


def test_classify_relaxation_and_mmo():
    t = np.linspace(0, 500, 50001)
    relax = classify_attractor(traj_of(t, 2 * np.sin(t)))
    assert relax.kind is AttractorKind.RELAXATION
    mixed = 2 * np.sin(t) * (np.sin(t / 4) > 0.7) + 0.1 * np.sin(t)
    assert classify_attractor(traj_of(t, mixed)).kind is AttractorKind.MMO


def test_classify_drift_without_peaks_unclassified():
    t = np.linspace(0, 10, 1001)
    assert classify_attractor(traj_of(t, t)).kind is AttractorKind.UNCLASSIFIED


def test_analysis_config_validation():
    with pytest.raises(ValueError):
        AnalysisConfig(large_threshold=0.01, small_threshold=0.1)
    with pytest.raises(ValueError):
        AnalysisConfig(eq_tol=0.0)


def test_decay_ratio():
    assert np.isnan(decay_ratio(peaks_of([1.0])))
    assert decay_ratio(peaks_of([4, 4, 1, 1])) == pytest.approx(0.25)


# -- regimes ----------------------------------------------------------------------------
def test_regime_classes(regime_runs):
    kinds = {k: classify_attractor(tr).kind for k, tr in regime_runs.items()}
    assert kinds == {"equilibrium": AttractorKind.EQUILIBRIUM,
                     "small_cycle": AttractorKind.SMALL_CYCLE,
                     "mmo": AttractorKind.MMO}


def test_mmo_signature_blocks(regime_runs):
    sig = classify_attractor(regime_runs["mmo"]).signature
    assert sig.large >= 1 and sig.small >= 1
    assert all(L >= 1 and s >= 1 for L, s in sig.blocks)
    assert sig.blocks[0] == (1, 6)


def test_small_cycle_has_no_large_events(regime_runs):
    sig = classify_attractor(regime_runs["small_cycle"]).signature
    assert sig.large == 0 and sig.small > 0


def test_equilibrium_run_amplitude_decays(regime_runs):
    c = classify_attractor(regime_runs["equilibrium"])
    assert c.signature.large == 0
    assert c.decay < 0.5


def test_classification_invariant_under_decimation(regime_runs):
    for tr in regime_runs.values():
        assert classify_attractor(tr).kind is classify_attractor(tr.decimate(2)).kind


def test_relaxation_amplitude_matches_cubic_geometry(regime_runs):
    tail = regime_runs["mmo"].states[25_000:, 0]
    assert -2.2 < tail.min() < -1.8 and 1.8 < tail.max() < 2.2


# -- sweeps --------------------------------------------------------------------------------------
def test_singleton_sweep_matches_classification(regime_runs):
    (row,) = sweep_c1([REGIMES["mmo"]])
    c = classify_attractor(regime_runs["mmo"])
    assert row.kind == c.kind.value and row.signature == str(c.signature)
    assert np.array_equal(row.final_state, regime_runs["mmo"].final_state)


def test_three_point_sweep_parallel_order():
    rows = sweep_c1([-0.988295, -0.99, -0.9883], jobs=2)
    assert [r.c1 for r in rows] == [-0.988295, -0.99, -0.9883]
    assert [r.kind for r in rows] == ["MMO", "Equilibrium", "SmallCycle"]


def test_sweep_records_blowup_and_continues():
    sim = SimConfig(Params(epsilon=1e-4), t_end=1.0, dt=0.01, initial_state=(3.0, 0, 0, 0))
    rows = sweep_c1([-0.99, -0.98], sim)
    assert all(r.error.startswith("blow-up") and r.kind == "Unclassified" for r in rows)


def test_sweep_rejects_empty():
    with pytest.raises(ValueError):
        sweep_c1([])


def test_fine_sweep_regime_order():
    rows = sweep_c1(np.linspace(-0.99, -0.988, 21))
    order = ["Equilibrium", "SmallCycle", "MMO", "Relaxation"]
    ranks = [order.index(r.kind) for r in rows]
    assert ranks == sorted(ranks)
    assert ranks[0] == 0 and 1 in ranks and 2 in ranks
    transitions = sum(a != b for a, b in zip(ranks, ranks[1:]))
    assert transitions <= 3


def test_sweep_csv():
    rows = sweep_c1([-0.99], SimConfig(t_end=10.0))
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    head, line = buf.getvalue().splitlines()
    assert head == ",".join(SWEEP_HEADER)
    assert line.startswith("-0.99,")
    assert len(line.split(",")) == 7

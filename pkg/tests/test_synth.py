import numpy as np
import pytest

from repforge.dataio import load_corpus
from repforge.synth import CorpusSpec, SynthSpec, generate_corpus, generate_set, read_truth, write_corpus


def test_eight_reps_truth_shape():
    raw, truth = generate_set(SynthSpec(n_reps=8))
    assert truth.midpoints.size == 8 and truth.boundaries.size == 9
    assert truth.boundaries[-1] == raw.imu_t.size - 1
    assert len(raw.rpe_annotations) == 8


def test_slowdown_arithmetic():
    raw, truth = generate_set(SynthSpec(n_reps=2, rpe=(2, 9), slowdown_s_per_rpe=0.3))
    diff = truth.eccentric_s[1] - truth.eccentric_s[0]
    assert diff == pytest.approx(2.1, abs=1 / truth.fs)


def test_phase_lengths_are_index_arithmetic():
    _, truth = generate_set(SynthSpec(n_reps=6, seed=2, duration_jitter=0.05))
    assert np.array_equal(truth.midpoints - truth.boundaries[:-1], truth.concentric_samples)
    spans = np.diff(truth.boundaries)
    assert np.array_equal(spans, truth.concentric_samples + truth.eccentric_samples + truth.break_samples)


def test_envelope_monotone_in_rpe():
    sched = (1, 3, 4, 6, 8, 10)
    raw, truth = generate_set(SynthSpec(n_reps=6, rpe=sched, seed=9))
    te = raw.emg_t
    means = []
    for i in range(6):
        s = truth.boundaries[i] / truth.fs
        e = (truth.midpoints[i] + truth.eccentric_samples[i]) / truth.fs
        means.append(truth.emg_envelope[(te >= s) & (te <= e)].mean())
    assert np.all(np.diff(means) > 0)


def test_bitwise_reproducible():
    a = generate_corpus(3, seed=11)
    b = generate_corpus(3, seed=11)
    for (ra, _), (rb, _) in zip(a, b):
        assert np.array_equal(ra.emg, rb.emg) and np.array_equal(ra.accel, rb.accel)
    c = generate_corpus(3, seed=12)
    assert not np.array_equal(a[0][0].accel, c[0][0].accel)


def test_corpus_scale():
    corpus = generate_corpus(69, seed=0)
    total = sum(len(raw.rpe_annotations) for raw, _ in corpus)
    assert 850 <= total <= 1150
    assert len({str(raw.set_id) for raw, _ in corpus}) == 69


def test_zero_variance_distribution():
    d = CorpusSpec(reps_sd=0.0, tempo_sd=0.0, duration_jitter=0.0, start_rpe_sd=0.0, rpe_climb_sd=0.0,
                   weights_kg=(10,), noise_levels_g=(0.0,), base=SynthSpec(break_mean_s=0.0, break_s_per_rpe=0.0))
    corpus = generate_corpus(3, d, seed=1)
    lens = {raw.imu_t.size for raw, _ in corpus}
    assert len(lens) == 1
    for _, t in corpus[1:]:
        assert np.array_equal(t.boundaries, corpus[0][1].boundaries)
        assert np.array_equal(t.midpoints, corpus[0][1].midpoints)
    assert not np.array_equal(corpus[0][0].emg, corpus[1][0].emg)  # seed-derived noise only


def test_write_and_reload(tmp_path):
    corpus = generate_corpus(3, seed=4)
    write_corpus(corpus, tmp_path)
    loaded = load_corpus(tmp_path)
    assert sorted(str(r.set_id) for r in loaded) == sorted(str(r.set_id) for r, _ in corpus)
    truth = read_truth(tmp_path / "truth.csv")
    raw, t = corpus[0]
    assert np.array_equal(truth[str(raw.set_id)][1], t.midpoints)


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(n_reps=0)
    with pytest.raises(ValueError):
        SynthSpec(n_reps=2, rpe=(3,))
    with pytest.raises(ValueError):
        SynthSpec(n_reps=1, rpe=(11,))

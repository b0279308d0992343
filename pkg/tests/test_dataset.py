import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from springverb import (
    AudioClip, DatasetException, DatasetManifest, SamplePair, batch_segments, build_manifest,
    load_pairs, prefetch, write_wav,
)
from springverb.dataset import _split_counts, default_segment_len, segment_plan


def pair(length, split="train", cond=(0.0, 0.0), rate=16000, value=None):
    samples = np.full(length, value, np.float32) if value is not None \
        else np.arange(length, dtype=np.float32) / length
    return SamplePair(AudioClip(samples, rate), AudioClip(-samples, rate), cond, split)


def test_split_sizes(make_corpus):
    root = make_corpus(count=10, seconds=0.05)
    manifest = build_manifest(root / "dry", root / "wet", seed=3)
    assert manifest.split_sizes() == {"train": 6, "val": 2, "test": 2}
    assert manifest.sample_rate == 16000
    assert _split_counts(624) == {"train": 374, "val": 124, "test": 126}


@given(st.integers(0, 5000))
def test_split_counts_cover_the_corpus(n):
    counts = _split_counts(n)
    assert sum(counts.values()) == n
    assert counts["train"] == int(np.floor(0.6 * n))
    assert counts["test"] >= counts["val"]


def test_manifest_is_deterministic(make_corpus, tmp_path):
    root = make_corpus(count=7, seconds=0.05)
    first = build_manifest(root / "dry", root / "wet", seed=11)
    assert first == build_manifest(root / "dry", root / "wet", seed=11)
    first.save(tmp_path / "m.json")
    expected = json.dumps(first.to_dict(), indent=2, sort_keys=True) + "\n"
    assert (tmp_path / "m.json").read_text() == expected
    assert DatasetManifest.load(tmp_path / "m.json") == first


def test_orphans_are_listed(make_corpus):
    root = make_corpus(count=3, seconds=0.05)
    (root / "wet" / "note001.wav").unlink()
    with pytest.raises(DatasetException, match="note001"):
        build_manifest(root / "dry", root / "wet", seed=0)


def test_mixed_rates_are_rejected(make_corpus):
    root = make_corpus(count=2, seconds=0.05)
    write_wav(AudioClip(np.zeros(100), 48000), root / "dry" / "odd.wav")
    write_wav(AudioClip(np.zeros(100), 48000), root / "wet" / "odd.wav")
    with pytest.raises(DatasetException, match="Mixed sample rates"):
        build_manifest(root / "dry", root / "wet", seed=0)


def test_cond_source(make_corpus, tmp_path):
    root = make_corpus(count=2, seconds=0.05)
    source = tmp_path / "cond.json"
    source.write_text(json.dumps({"note000": [0.25, 1.0], "note001": [0.5, 0.0]}))
    manifest = build_manifest(root / "dry", root / "wet", seed=0, cond_source=source)
    assert sorted(e.cond for e in manifest.entries) == [(0.25, 1.0), (0.5, 0.0)]


def test_cond_source_errors(make_corpus, tmp_path):
    root = make_corpus(count=2, seconds=0.05)
    with pytest.raises(DatasetException, match="Cannot read conditioning source"):
        build_manifest(root / "dry", root / "wet", seed=0, cond_source=tmp_path / "missing.json")
    listed = tmp_path / "list.json"
    listed.write_text("[0.5, 0.5]")
    with pytest.raises(DatasetException, match="expected an object"):
        build_manifest(root / "dry", root / "wet", seed=0, cond_source=listed)


def test_manifest_validation():
    data = {"sample_rate": 16000, "seed": 0, "entries": [
        {"dry": "a.wav", "wet": "b.wav", "cond": [0, 0], "split": "train"},
        {"dry": "a.wav", "wet": "c.wav", "cond": [0, 0], "split": "test"},
    ]}
    with pytest.raises(DatasetException, match="appears in splits"):
        DatasetManifest.from_dict(data)
    with pytest.raises(DatasetException, match="Malformed"):
        DatasetManifest.from_dict({"entries": []})


def test_pairs_are_tail_padded(caplog):
    short = SamplePair(AudioClip(np.ones(10), 16000), AudioClip(np.ones(14), 16000), (), "train")
    assert len(short.dry) == len(short.wet) == 14
    assert short.dry.numpy()[10:].tolist() == [0.0] * 4
    assert "zero-padded 4 samples" in caplog.text


def test_load_pairs(make_corpus):
    root = make_corpus(count=5, seconds=0.05)
    manifest = build_manifest(root / "dry", root / "wet", seed=0)
    pairs = load_pairs(manifest, "train")
    assert len(pairs) == 3
    assert all(len(p) == 800 and p.sample_rate == 16000 for p in pairs)


def test_segment_arithmetic():
    assert default_segment_len(16000) == 32000
    assert default_segment_len(48000) == 120000
    assert segment_plan([32000], 32000) == [(0, 0)]
    assert segment_plan([240000], 120000) == [(0, 0), (0, 120000)]


def test_batches_cover_every_clip():
    pairs = [pair(100, value=float(i)) for i in range(6)]
    batches = list(batch_segments(pairs, "train", 100, 4, seed=0))
    assert [b.dry.shape[0] for b in batches] == [4, 2]
    assert batches[0].dry.shape == (4, 1, 100)
    assert batches[0].cond.shape == (4, 2)
    seen = sorted(float(v) for b in batches for v in b.dry.numpy()[:, 0, 0])
    assert seen == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]


def test_ragged_tail_is_zero_padded():
    batches = list(batch_segments([pair(250)], "train", 100, 8, seed=0, shuffle=False))
    dry = batches[0].dry.numpy()[:, 0, :]
    assert dry.shape == (3, 100)
    assert np.all(dry[2, 50:] == 0) and dry[2, 49] != 0


def test_shuffle_depends_on_seed_and_epoch():
    pairs = [pair(100, value=float(i)) for i in range(20)]

    def order(seed, epoch):
        return [b.dry.numpy()[:, 0, 0].tolist() for b in batch_segments(pairs, "train", 100, 20,
                                                                          seed, epoch)]

    assert order(1, 0) == order(1, 0)
    assert order(1, 0) != order(1, 1)


def test_batch_errors():
    with pytest.raises(DatasetException, match="empty"):
        list(batch_segments([pair(100)], "val", 50, 2, seed=0))
    with pytest.raises(DatasetException, match="exceeds the shortest"):
        list(batch_segments([pair(100)], "train", 200, 2, seed=0))


def test_prefetch_keeps_order_and_reraises():
    assert list(prefetch(iter(range(50)), depth=3)) == list(range(50))

    def broken():
        yield 1
        raise DatasetException("boom")

    stream = prefetch(broken())
    assert next(stream) == 1
    with pytest.raises(DatasetException, match="boom"):
        next(stream)

"""Feature store wire formats: tensors, manifests, vocabularies."""

import numpy as np
import pytest

from phonevc.store import (
    CorpusManifest,
    ManifestEntry,
    StoreError,
    Vocabulary,
    parse_manifest,
    read_tensor,
    write_manifest,
    write_tensor,
)


class TestTensorFormat:
    @pytest.mark.parametrize(
        "array",
        [
            np.arange(12, dtype=np.int64).reshape(3, 4),
            np.random.default_rng(0).standard_normal((2, 5)).astype(np.float32),
            np.random.default_rng(1).standard_normal(7),
            np.array([3.5], dtype=np.float64),
        ],
    )
    def test_round_trip(self, tmp_path, array):
        path = tmp_path / "t.bin"
        write_tensor(path, array)
        loaded = read_tensor(path)
        assert loaded.dtype == array.dtype
        np.testing.assert_array_equal(loaded, array)

    def test_memory_mapped_read(self, tmp_path):
        array = np.random.default_rng(2).standard_normal((4, 6)).astype(np.float32)
        path = tmp_path / "t.bin"
        write_tensor(path, array)
        mapped = read_tensor(path, mmap=True)
        np.testing.assert_array_equal(np.asarray(mapped), array)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "not_a_tensor.bin"
        path.write_bytes(b"hello world")
        with pytest.raises(StoreError):
            read_tensor(path)

    def test_truncated_payload_detected(self, tmp_path):
        array = np.arange(20, dtype=np.int64)
        path = tmp_path / "t.bin"
        write_tensor(path, array)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(StoreError, match="payload"):
            read_tensor(path)


class TestManifest:
    def test_parse_with_and_without_transcript(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("u1|/a/u1.wav|spkA|ni hao\nu2|/a/u2.wav|spkB\n", encoding="utf-8")
        manifest = parse_manifest(path)
        assert manifest.entries[0].transcript == "ni hao"
        assert manifest.entries[1].transcript is None
        assert manifest.speakers == ["spkA", "spkB"]

    def test_duplicate_ids_rejected(self):
        entries = [ManifestEntry("u", "a.wav", "s"), ManifestEntry("u", "b.wav", "s")]
        with pytest.raises(StoreError, match="duplicate"):
            CorpusManifest(entries)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("only_two|fields\n", encoding="utf-8")
        with pytest.raises(StoreError):
            parse_manifest(path)

    def test_write_read_round_trip(self, tmp_path):
        manifest = CorpusManifest(
            [ManifestEntry("u1", "a.wav", "s1", "hello"), ManifestEntry("u2", "b.wav", "s2")]
        )
        path = tmp_path / "m.txt"
        write_manifest(manifest, path)
        loaded = parse_manifest(path)
        assert [e.utterance_id for e in loaded.entries] == ["u1", "u2"]
        assert loaded.entries[0].transcript == "hello"


class TestVocabulary:
    def test_build_reserves_unknown_slot(self):
        vocab = Vocabulary.build({"b", "a"})
        assert vocab.tokens[0] == "<unk>"
        assert vocab.encode(["a", "zzz", "b"]).tolist() == [1, 0, 2]

    def test_save_load_round_trip(self, tmp_path):
        vocab = Vocabulary.build({"x", "y"})
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "<unk>\t0"
        loaded = Vocabulary.load(path)
        assert loaded.tokens == vocab.tokens

    def test_build_is_order_independent(self):
        assert Vocabulary.build({"b", "a", "c"}).tokens == Vocabulary.build({"c", "a", "b"}).tokens


class TestFeatureStoreRoundTrip:
    def test_store_round_trip(self, micro_store):
        store, _ = micro_store
        ids = store.utterance_ids()
        assert len(ids) == 6
        feats = store.read(ids[0])
        again = store.read(ids[0])
        np.testing.assert_array_equal(feats.contentvec, again.contentvec)
        assert feats.utterance_id == ids[0]
        assert feats.n_frames == feats.mel_spec.shape[1] == feats.linear_spec.shape[1]
        assert store.speaker_of(ids[0]) in ("spk0", "spk1")

    def test_meta_and_vocabs(self, micro_store):
        store, _ = micro_store
        meta = store.load_meta()
        assert meta["provider"] == "stub"
        assert meta["ssl_dim"] == 24
        vocabs = store.load_vocabs()
        assert "sil" in vocabs.phonemes.index
        assert len(vocabs.speakers) == 3  # two speakers plus the unknown slot

    def test_unknown_utterance(self, micro_store):
        store, _ = micro_store
        with pytest.raises(StoreError):
            store.read("nope")

import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from genoseq.tokenizers import (
    BpeTokenizer,
    CLS_ID,
    EmptyCorpusError,
    KTooLargeError,
    KmerTokenizer,
    MIN_PAIR_COUNT,
    PAD_ID,
    SEP_ID,
    SequenceTooShortError,
    TokenizerError,
    UNK_ID,
    UNK_TOKEN,
    Vocabulary,
    VocabularyInvariantError,
    VocabularyParseError,
    bpe_encode,
    bpe_train,
    encode_batch,
    encode_ids,
    kmer_tokenize,
    kmer_vocabulary,
    load_vocabulary,
    save_vocabulary,
    tokenizer_from_descriptor,
)

dna = st.text(alphabet="ACGT", min_size=1, max_size=120)


def naive_bpe_train(corpus, num_merges):
    """Recount-everything-each-iteration reference trainer."""
    seqs = [[UNK_TOKEN if c == "N" else c for c in s] for s in corpus]
    merges = []
    for _ in range(num_merges):
        counts = Counter()
        for s in seqs:
            for pair in zip(s, s[1:]):
                if UNK_TOKEN not in pair:
                    counts[pair] += 1
        eligible = {p: c for p, c in counts.items() if c >= MIN_PAIR_COUNT}
        if not eligible:
            break
        best = min(eligible.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        left, right = best
        for i, s in enumerate(seqs):
            out, j = [], 0
            while j < len(s):
                if s[j] == left and j + 1 < len(s) and s[j + 1] == right:
                    out.append(left + right)
                    j += 2
                else:
                    out.append(s[j])
                    j += 1
            seqs[i] = out
    return merges, seqs


def random_corpus(rng, max_seqs=40, max_len=40, with_n=False):
    alphabet = list("ACGTN" if with_n else "ACGT")
    n = int(rng.integers(1, max_seqs + 1))
    return [
        "".join(rng.choice(alphabet, size=int(rng.integers(1, max_len + 1))))
        for _ in range(n)
    ]


class TestKmer:
    def test_paper_worked_example(self):
        assert kmer_tokenize("ATGCGTACG", 3) == ["ATG", "TGC", "GCG", "CGT", "GTA", "TAC", "ACG"]

    def test_k1_is_per_base(self):
        assert kmer_tokenize("ACGT", 1) == ["A", "C", "G", "T"]

    def test_k_equals_length(self):
        assert kmer_tokenize("ACGT", 4) == ["ACGT"]

    def test_window_with_n_becomes_unk(self):
        assert kmer_tokenize("ANG", 2) == [UNK_TOKEN, UNK_TOKEN]
        assert kmer_tokenize("AANGG", 2) == ["AA", UNK_TOKEN, UNK_TOKEN, "GG"]

    def test_too_short_rejected(self):
        with pytest.raises(SequenceTooShortError):
            kmer_tokenize("AC", 3)

    @given(dna, st.integers(1, 8))
    def test_count_law_and_reconstruction(self, seq, k):
        if k > len(seq):
            return
        tokens = kmer_tokenize(seq, k)
        assert len(tokens) == len(seq) - k + 1
        if all(t != UNK_TOKEN for t in tokens):
            rebuilt = "".join(t[0] for t in tokens[:-1]) + tokens[-1]
            assert rebuilt == seq
            for a, b in zip(tokens, tokens[1:]):
                assert a[1:] == b[:-1]

    @pytest.mark.parametrize("k,size", [(1, 4), (3, 64), (4, 256), (6, 4096)])
    def test_vocabulary_sizes(self, k, size):
        vocab = kmer_vocabulary(k)
        assert len(vocab) == size + 4

    def test_vocabulary_lexicographic(self):
        vocab = kmer_vocabulary(2)
        content = vocab.tokens[4:]
        assert content[0] == "AA" and content[-1] == "TT"
        assert list(content) == sorted(content)

    def test_k_limits(self):
        with pytest.raises(KTooLargeError):
            kmer_vocabulary(9)
        with pytest.raises(TokenizerError):
            kmer_vocabulary(0)


class TestBpeTrain:
    def test_single_pair_corpus(self):
        vocab = bpe_train(["AAAA"], 1)
        assert vocab.merges == (("A", "A"),)
        assert "AA" in vocab.tokens

    def test_count_beats_lexicographic(self):
        # (A,T) occurs 5 times, (T,A) only 3
        vocab = bpe_train(["ATATAT", "ATAT"], 1)
        assert vocab.merges == (("A", "T"),)

    def test_early_stop_below_min_count(self):
        vocab = bpe_train(["ACGT"], 3)
        assert vocab.merges == ()
        assert len(vocab) == 8  # specials + bases

    def test_lexicographic_tie_break(self):
        # every pair occurs exactly twice; (A,C) is the smallest
        vocab = bpe_train(["ACGT", "ACGT"], 1)
        assert vocab.merges == (("A", "C"),)

    def test_vocab_size_counts_merges(self):
        corpus = ["ACGTACGTACGT", "GGGTTTACGAAC"]
        vocab = bpe_train(corpus, 4)
        distinct = {l + r for l, r in vocab.merges}
        assert len(vocab) == 8 + len(distinct)

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpusError):
            bpe_train([], 3)

    def test_matches_naive_oracle(self, rng):
        for trial in range(60):
            corpus = random_corpus(rng, with_n=trial % 4 == 0)
            merges = int(rng.integers(0, 16))
            fast = bpe_train(corpus, merges)
            oracle_merges, oracle_seqs = naive_bpe_train(corpus, merges)
            assert list(fast.merges) == oracle_merges
            for seq, segmented in zip(corpus, oracle_seqs):
                assert bpe_encode(seq, fast) == segmented

    def test_determinism(self, rng):
        corpus = random_corpus(rng)
        a = bpe_train(corpus, 10)
        b = bpe_train(corpus, 10)
        assert a.tokens == b.tokens and a.merges == b.merges


class TestBpeEncode:
    def test_single_merge(self):
        vocab = bpe_train(["ATATATAT"], 1)
        assert vocab.merges == (("A", "T"),)
        assert bpe_encode("ATAT", vocab) == ["AT", "AT"]

    def test_single_base(self):
        vocab = bpe_train(["ATAT"], 1)
        assert bpe_encode("G", vocab) == ["G"]

    def test_left_to_right_non_overlapping(self):
        vocab = bpe_train(["AAAA"], 1)
        assert bpe_encode("AAA", vocab) == ["AA", "A"]

    def test_unk_is_a_merge_boundary(self):
        vocab = bpe_train(["ATATATAT"], 1)
        assert bpe_encode("ATNAT", vocab) == ["AT", UNK_TOKEN, "AT"]
        assert bpe_encode("ANT", vocab) == ["A", UNK_TOKEN, "T"]

    def test_requires_merges(self):
        with pytest.raises(TokenizerError):
            bpe_encode("ACGT", kmer_vocabulary(3))

    @given(st.lists(dna, min_size=1, max_size=12), st.integers(0, 12), dna)
    def test_partition_property(self, corpus, merges, seq):
        vocab = bpe_train(corpus, merges)
        tokens = bpe_encode(seq, vocab)
        assert sum(1 if t == UNK_TOKEN else len(t) for t in tokens) == len(seq)
        assert "".join(t for t in tokens if t != UNK_TOKEN) == seq

    def test_monotonic_compression(self, rng):
        corpus = random_corpus(rng, max_seqs=30, max_len=60)
        full = bpe_train(corpus, 20)
        previous = None
        for m in range(len(full.merges) + 1):
            partial = Vocabulary(
                tokens=full.tokens[:8] + tuple(sorted({l + r for l, r in full.merges[:m]} - set("ACGT"))),
                merges=full.merges[:m],
            )
            mean_tokens = np.mean([len(bpe_encode(s, partial)) for s in corpus])
            if previous is not None:
                assert mean_tokens <= previous + 1e-12
            previous = mean_tokens


class TestEncodeIds:
    def test_padding_case(self):
        vocab = kmer_vocabulary(3)
        out = encode_ids(["ATG"], vocab, max_len=8)
        assert out.ids[0] == CLS_ID and out.ids[2] == SEP_ID
        assert list(out.ids[3:]) == [PAD_ID] * 5
        assert out.length == 3

    def test_truncation_preserves_frame(self):
        vocab = kmer_vocabulary(1)
        out = encode_ids(["A"] * 65, vocab, max_len=16)
        assert len(out.ids) == 16
        assert out.ids[0] == CLS_ID and out.ids[15] == SEP_ID
        assert out.length == 16

    def test_unknown_maps_to_unk(self):
        vocab = kmer_vocabulary(3)
        out = encode_ids(["XYZ"], vocab, max_len=6)
        assert out.ids[1] == UNK_ID

    def test_min_len_enforced(self):
        with pytest.raises(TokenizerError):
            encode_ids(["A"], kmer_vocabulary(1), max_len=2)

    def test_batch_shapes(self):
        vocab = kmer_vocabulary(1)
        ids, lengths = encode_batch([["A"], ["A", "C", "G"]], vocab, max_len=6)
        assert ids.shape == (2, 6)
        assert lengths.tolist() == [3, 5]
        assert (ids != PAD_ID).sum(axis=1).tolist() == [3, 5]


class TestVocabularyIO:
    def test_kmer_round_trip(self, tmp_path):
        vocab = kmer_vocabulary(2)
        path = tmp_path / "v.json"
        save_vocabulary(vocab, path)
        loaded = load_vocabulary(path)
        assert loaded.tokens == vocab.tokens
        assert loaded.merges is None
        assert "merges" not in json.loads(path.read_text())

    def test_bpe_round_trip(self, tmp_path):
        vocab = bpe_train(["ATATAT", "ATATGG", "GGGGAT"], 5)
        path = tmp_path / "v.json"
        save_vocabulary(vocab, path)
        loaded = load_vocabulary(path)
        assert loaded.tokens == vocab.tokens
        assert loaded.merges == vocab.merges

    def test_duplicate_tokens_rejected(self, tmp_path):
        path = tmp_path / "v.json"
        payload = {
            "version": 1,
            "specials": {"pad": 0, "unk": 1, "cls": 2, "sep": 3},
            "tokens": ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "A", "A"],
        }
        path.write_text(json.dumps(payload))
        with pytest.raises(VocabularyInvariantError):
            load_vocabulary(path)

    def test_merges_must_regenerate_tokens(self, tmp_path):
        path = tmp_path / "v.json"
        payload = {
            "version": 1,
            "specials": {"pad": 0, "unk": 1, "cls": 2, "sep": 3},
            "tokens": ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "A", "C", "G", "T", "GG"],
            "merges": [["A", "T"]],
        }
        path.write_text(json.dumps(payload))
        with pytest.raises(VocabularyInvariantError):
            load_vocabulary(path)

    def test_merge_with_unknown_constituent_rejected(self):
        with pytest.raises(VocabularyInvariantError):
            Vocabulary(
                tokens=("[PAD]", "[UNK]", "[CLS]", "[SEP]", "A", "C", "G", "T", "AAT"),
                merges=(("AA", "T"),),
            )

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text("{not json")
        with pytest.raises(VocabularyParseError):
            load_vocabulary(path)

    def test_missing_fields_rejected(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text(json.dumps({"version": 1}))
        with pytest.raises(VocabularyParseError):
            load_vocabulary(path)


class TestEstimators:
    def test_kmer_fit_transform(self):
        tok = KmerTokenizer(k=3)
        X = ["ACGTAC", "TTTTTT"]
        ids = tok.fit(X).transform(X)
        assert ids.shape == (2, 6)  # 4 tokens + CLS/SEP
        assert tok.vocab_size_ == 68
        assert (ids[:, 0] == CLS_ID).all()

    def test_bpe_fit_transform(self):
        tok = BpeTokenizer(num_merges=4)
        X = ["ATATATAT", "ATATGGGG"]
        ids = tok.fit(X).transform(X)
        assert ids.shape[0] == 2
        assert ids.max() < tok.vocab_size_

    def test_bpe_from_saved_vocabulary(self, tmp_path):
        vocab = bpe_train(["ATATATAT"], 2)
        path = tmp_path / "v.json"
        save_vocabulary(vocab, path)
        tok = BpeTokenizer(vocabulary=str(path)).fit(["ATAT"])
        assert tok.vocabulary_.merges == vocab.merges

    def test_sklearn_clone_and_params(self):
        tok = KmerTokenizer(k=4, max_len=10)
        assert clone(tok).get_params() == {"k": 4, "max_len": 10}
        tok2 = tok.set_params(k=2)
        assert tok2.k == 2

    def test_transform_requires_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            KmerTokenizer(k=2).transform(["ACGT"])

    def test_descriptor_parsing(self):
        assert isinstance(tokenizer_from_descriptor("1mer"), KmerTokenizer)
        assert tokenizer_from_descriptor("6mer").k == 6
        bpe = tokenizer_from_descriptor("bpe", bpe_merges=7)
        assert isinstance(bpe, BpeTokenizer) and bpe.num_merges == 7
        assert tokenizer_from_descriptor("bpe:some/path.json").vocabulary == "some/path.json"
        with pytest.raises(TokenizerError):
            tokenizer_from_descriptor("words")

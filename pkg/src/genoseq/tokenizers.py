"""DNA tokenization: fixed-length k-mers and learned BPE subwords.

Both tokenizers share one vocabulary format: the four special tokens occupy
ids 0-3 in the fixed order PAD, UNK, CLS, SEP, followed by the content
tokens. BPE vocabularies additionally carry their ordered merge list.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import validate_sequence

PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3

BASES = "ACGT"
MAX_K = 8

VOCAB_FORMAT_VERSION = 1

# Merges below this pair frequency are not worth a vocabulary slot.
MIN_PAIR_COUNT = 2


class TokenizerError(Exception):
    pass


class SequenceTooShortError(TokenizerError):
    pass


class KTooLargeError(TokenizerError):
    pass


class EmptyCorpusError(TokenizerError):
    pass


class VocabularyParseError(TokenizerError):
    pass


class VocabularyInvariantError(TokenizerError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token table with fixed specials and an optional merge list.

    ``tokens[i]`` has id ``i``. ``merges`` is present iff the vocabulary was
    learned by BPE; its order is the merge selection order and is semantic.
    """

    tokens: tuple[str, ...]
    merges: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self):
        if len(self.tokens) < 4 or tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise VocabularyInvariantError(
                f"first four tokens must be {SPECIAL_TOKENS}, got {self.tokens[:4]}"
            )
        if len(set(self.tokens)) != len(self.tokens):
            dupes = [t for t, c in Counter(self.tokens).items() if c > 1]
            raise VocabularyInvariantError(f"duplicate tokens: {dupes}")
        if self.merges is not None:
            self._check_merges()
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    def _check_merges(self):
        known = set(BASES)
        produced = set(BASES)
        for left, right in self.merges:
            if left not in known or right not in known:
                raise VocabularyInvariantError(
                    f"merge ({left!r}, {right!r}) uses a symbol that no earlier merge produces"
                )
            known.add(left + right)
            produced.add(left + right)
        content = set(self.tokens[4:])
        if content != produced:
            missing = sorted(produced - content)
            extra = sorted(content - produced)
            raise VocabularyInvariantError(
                f"merges do not regenerate the token set (missing {missing}, extra {extra})"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        """Token id, mapping anything unknown to UNK."""
        return self._ids.get(token, UNK_ID)

    def __contains__(self, token: str) -> bool:
        return token in self._ids


def kmer_tokenize(seq: str, k: int) -> list[str]:
    """Slide a length-``k`` window over ``seq`` with step 1.

    Produces ``len(seq) - k + 1`` tokens; any window containing ``N`` is
    replaced by the UNK token string.
    """
    if k < 1:
        raise TokenizerError(f"k must be >= 1, got {k}")
    if len(seq) < k:
        raise SequenceTooShortError(f"sequence length {len(seq)} is shorter than k={k}")
    out = []
    for i in range(len(seq) - k + 1):
        tok = seq[i : i + k]
        out.append(UNK_TOKEN if "N" in tok else tok)
    return out


def kmer_vocabulary(k: int) -> Vocabulary:
    """All 4^k DNA k-mers in lexicographic order, after the four specials."""
    if k < 1:
        raise TokenizerError(f"k must be >= 1, got {k}")
    if k > MAX_K:
        raise KTooLargeError(f"k={k} exceeds {MAX_K}; 4^k would be impractically large")
    kmers = ("".join(p) for p in product(BASES, repeat=k))
    return Vocabulary(tokens=SPECIAL_TOKENS + tuple(kmers))


def _base_symbols(seq: str) -> list[str]:
    # N becomes UNK at the base-symbol level and never participates in merges.
    return [UNK_TOKEN if c == "N" else c for c in seq]


def _pair_counts(symbols: list[str]) -> Counter:
    counts = Counter(zip(symbols, symbols[1:]))
    for pair in [p for p in counts if UNK_TOKEN in p]:
        del counts[pair]
    return counts


def _merge_symbols(symbols: list[str], left: str, right: str) -> tuple[list[str], int]:
    """Replace non-overlapping (left, right) occurrences left-to-right."""
    out: list[str] = []
    joined = left + right
    i, n, applied = 0, len(symbols), 0
    while i < n:
        if symbols[i] == left and i + 1 < n and symbols[i + 1] == right:
            out.append(joined)
            applied += 1
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out, applied


def bpe_train(corpus: Iterable[str], num_merges: int) -> Vocabulary:
    """Learn a BPE vocabulary by iterated most-frequent-adjacent-pair merges.

    Each iteration counts adjacent symbol pairs across the whole corpus and
    merges the argmax; ties break toward the lexicographically smallest
    (left, right) string pair. Stops early once no pair occurs at least
    ``MIN_PAIR_COUNT`` times. Merging is a left-to-right non-overlapping
    replacement, so e.g. ``AAA`` under an (A, A) merge becomes ``[AA, A]``.

    Pair counting and replacement are maintained incrementally, but the
    resulting merge sequence is identical to recounting the entire corpus at
    every iteration.
    """
    seqs = [_base_symbols(validate_sequence(s)) for s in corpus]
    if not seqs:
        raise EmptyCorpusError("BPE training corpus is empty")
    if num_merges < 0:
        raise TokenizerError(f"num_merges must be >= 0, got {num_merges}")

    counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = {}
    for idx, symbols in enumerate(seqs):
        local = _pair_counts(symbols)
        counts.update(local)
        for pair in local:
            where.setdefault(pair, set()).add(idx)

    merges: list[tuple[str, str]] = []
    tokens: list[str] = list(SPECIAL_TOKENS) + list(BASES)
    seen = set(tokens)
    for _ in range(num_merges):
        best_key = None
        for pair, count in counts.items():
            if count < MIN_PAIR_COUNT:
                continue
            key = (-count, pair)
            if best_key is None or key < best_key:
                best_key = key
        if best_key is None:
            break
        left, right = best_key[1]
        merges.append((left, right))
        joined = left + right
        if joined not in seen:
            seen.add(joined)
            tokens.append(joined)
        for idx in sorted(where.get((left, right), ())):
            old = _pair_counts(seqs[idx])
            seqs[idx], _ = _merge_symbols(seqs[idx], left, right)
            new = _pair_counts(seqs[idx])
            for pair in old:
                delta = new.get(pair, 0) - old[pair]
                if delta:
                    counts[pair] += delta
                    if counts[pair] <= 0:
                        del counts[pair]
                if new.get(pair, 0) == 0:
                    bucket = where.get(pair)
                    if bucket:
                        bucket.discard(idx)
            for pair in new:
                if pair not in old:
                    counts[pair] += new[pair]
                    where.setdefault(pair, set()).add(idx)
    return Vocabulary(tokens=tuple(tokens), merges=tuple(merges))


def bpe_encode(seq: str, vocab: Vocabulary) -> list[str]:
    """Segment a sequence by replaying the learned merges in order.

    Starts from per-base symbols (``N`` mapped to UNK, which no merge can
    cross) and applies each merge as a left-to-right non-overlapping
    replacement, exactly mirroring the training-time procedure. The output
    token base lengths (UNK counting as one base) always sum to ``len(seq)``.
    """
    if vocab.merges is None:
        raise TokenizerError("vocabulary has no merge list; not a BPE vocabulary")
    if not seq:
        raise SequenceTooShortError("cannot encode an empty sequence")
    symbols = _base_symbols(seq)
    present = Counter(symbols)
    for left, right in vocab.merges:
        if present[left] <= 0 or present[right] <= 0:
            continue
        symbols, applied = _merge_symbols(symbols, left, right)
        if applied:
            present[left] -= applied
            present[right] -= applied
            present[left + right] += applied
    return symbols


@dataclass(frozen=True)
class TokenSequence:
    """Padded model input: ``ids[0]`` is CLS and ``ids[length-1]`` is SEP."""

    ids: np.ndarray
    length: int


def encode_ids(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> TokenSequence:
    """Map tokens to ids and frame them as ``[CLS] ... [SEP]`` padded to ``max_len``.

    Token lists longer than ``max_len - 2`` are truncated before the specials
    are added, so the CLS/SEP frame is always intact.
    """
    if max_len < 3:
        raise TokenizerError(f"max_len must be >= 3, got {max_len}")
    body = [vocab.id_of(t) for t in tokens[: max_len - 2]]
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[0] = CLS_ID
    ids[1 : 1 + len(body)] = body
    ids[1 + len(body)] = SEP_ID
    return TokenSequence(ids=ids, length=len(body) + 2)


def encode_batch(
    token_lists: Iterable[Sequence[str]], vocab: Vocabulary, max_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`encode_ids`: returns (ids matrix, lengths)."""
    rows = [encode_ids(toks, vocab, max_len) for toks in token_lists]
    if not rows:
        return np.zeros((0, max_len), dtype=np.int64), np.zeros(0, dtype=np.int64)
    ids = np.stack([r.ids for r in rows])
    lengths = np.array([r.length for r in rows], dtype=np.int64)
    return ids, lengths


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """Write a vocabulary as JSON; token and merge order are preserved exactly."""
    payload: dict = {
        "version": VOCAB_FORMAT_VERSION,
        "specials": {"pad": PAD_ID, "unk": UNK_ID, "cls": CLS_ID, "sep": SEP_ID},
        "tokens": list(vocab.tokens),
    }
    if vocab.merges is not None:
        payload["merges"] = [[left, right] for left, right in vocab.merges]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Load a vocabulary JSON file, re-validating every invariant."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as e:
        raise VocabularyParseError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(payload, dict):
        raise VocabularyParseError(f"{path}: expected a JSON object")
    for key in ("version", "specials", "tokens"):
        if key not in payload:
            raise VocabularyParseError(f"{path}: missing field {key!r}")
    if payload["version"] != VOCAB_FORMAT_VERSION:
        raise VocabularyParseError(f"{path}: unsupported version {payload['version']}")
    expected_specials = {"pad": PAD_ID, "unk": UNK_ID, "cls": CLS_ID, "sep": SEP_ID}
    if payload["specials"] != expected_specials:
        raise VocabularyParseError(f"{path}: specials must be {expected_specials}")
    tokens = payload["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise VocabularyParseError(f"{path}: tokens must be a list of strings")
    merges = None
    if "merges" in payload:
        raw = payload["merges"]
        ok = isinstance(raw, list) and all(
            isinstance(m, list) and len(m) == 2 and all(isinstance(s, str) for s in m)
            for m in raw
        )
        if not ok:
            raise VocabularyParseError(f"{path}: merges must be a list of 2-element string arrays")
        merges = tuple((m[0], m[1]) for m in raw)
    return Vocabulary(tokens=tuple(tokens), merges=merges)


class _TokenizerBase(BaseEstimator, TransformerMixin):
    """Shared transform plumbing: sequences in, padded id matrices out."""

    def _tokenize(self, seq: str) -> list[str]:
        raise NotImplementedError

    def _check_fitted(self):
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit first")

    def _resolve_max_len(self, X: Sequence[str]) -> int:
        if self.max_len is not None:
            return self.max_len
        longest = max((len(self._tokenize(s)) for s in X), default=1)
        return longest + 2

    def transform(self, X: Sequence[str]) -> np.ndarray:
        """Encode sequences into an ``(n, max_len_)`` int64 id matrix.

        Row layout is ``[CLS] tokens [SEP] [PAD]...``; valid lengths are
        recoverable as ``(ids != 0).sum(axis=1)`` since PAD is id 0.
        """
        self._check_fitted()
        ids, _ = encode_batch(
            (self._tokenize(s) for s in X), self.vocabulary_, self.max_len_
        )
        return ids

    @property
    def vocab_size_(self) -> int:
        self._check_fitted()
        return len(self.vocabulary_)


class KmerTokenizer(_TokenizerBase):
    """Sliding-window k-mer tokenizer with the full 4^k vocabulary.

    Parameters
    ----------
    k : window length, 1 to 8.
    max_len : padded output width; None derives it from the longest sequence
        seen at fit time.
    """

    def __init__(self, k: int = 6, max_len: int | None = None):
        self.k = k
        self.max_len = max_len

    def _tokenize(self, seq: str) -> list[str]:
        return kmer_tokenize(seq, self.k)

    def fit(self, X: Sequence[str], y=None):
        self.vocabulary_ = kmer_vocabulary(self.k)
        self.max_len_ = self._resolve_max_len(X)
        return self


class BpeTokenizer(_TokenizerBase):
    """BPE subword tokenizer; fit learns the merge list from the corpus.

    Parameters
    ----------
    num_merges : merge iterations to run when training. The 4,096-content-token
        default corresponds to 4 bases + 4,092 merges.
    max_len : padded output width; None derives it from the fitted corpus.
    vocabulary : an existing Vocabulary or a path to a vocabulary JSON file;
        when given, fit skips training and reuses it.
    """

    def __init__(
        self,
        num_merges: int = 4092,
        max_len: int | None = None,
        vocabulary: Vocabulary | str | Path | None = None,
    ):
        self.num_merges = num_merges
        self.max_len = max_len
        self.vocabulary = vocabulary

    def _tokenize(self, seq: str) -> list[str]:
        return bpe_encode(seq, self.vocabulary_)

    def fit(self, X: Sequence[str], y=None):
        if self.vocabulary is None:
            self.vocabulary_ = bpe_train(X, self.num_merges)
        elif isinstance(self.vocabulary, Vocabulary):
            self.vocabulary_ = self.vocabulary
        else:
            self.vocabulary_ = load_vocabulary(self.vocabulary)
        if self.vocabulary_.merges is None:
            raise TokenizerError("BpeTokenizer requires a vocabulary with merges")
        self.max_len_ = self._resolve_max_len(X)
        return self


def tokenizer_from_descriptor(
    descriptor: str,
    max_len: int | None = None,
    bpe_merges: int = 4092,
) -> KmerTokenizer | BpeTokenizer:
    """Build a tokenizer from a grid descriptor string.

    Accepted forms: ``<k>mer`` (e.g. ``1mer``, ``6mer``), ``bpe`` (train on
    the corpus given to fit), and ``bpe:<vocabfile>`` (reuse a saved
    vocabulary).
    """
    d = descriptor.strip().lower()
    if d.endswith("mer"):
        try:
            k = int(d[:-3])
        except ValueError:
            raise TokenizerError(f"bad tokenizer descriptor {descriptor!r}") from None
        return KmerTokenizer(k=k, max_len=max_len)
    if d == "bpe":
        return BpeTokenizer(num_merges=bpe_merges, max_len=max_len)
    if d.startswith("bpe:"):
        return BpeTokenizer(max_len=max_len, vocabulary=descriptor[4:])
    raise TokenizerError(f"bad tokenizer descriptor {descriptor!r}")

"""Tokenization schemes and the text/number boundary.

Raw question/answer strings become MixedSequences: a token-id stream, a
parallel float array, and a per-position Text/Number modality label.
Under the value-based schemes every numeric literal collapses to the
reserved ``<num>`` token carrying its value; under the text baselines
numerals flow through the word or BPE tokenizer like any other string.

The signed log transform slog(x) = sign(x) * ln(1 + |x|) compresses
magnitudes while staying odd, continuous and exactly invertible, which
a plain logarithm is not on data containing zero and negatives.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .datagen import Example

__all__ = [
    "PAD", "BOS", "EOS", "UNK", "NUM",
    "PAD_ID", "BOS_ID", "EOS_ID", "UNK_ID", "NUM_ID",
    "RESERVED_TOKENS",
    "Modality",
    "MixedSequence",
    "NumberScheme",
    "Vocab",
    "BpeMerges",
    "tokenize_words",
    "is_number_token",
    "extract_numbers",
    "render_template",
    "detokenize",
    "format_value",
    "slog",
    "sinv",
    "bpe_train",
    "bpe_encode",
    "bpe_decode",
    "build_vocab",
    "encode_example",
    "encode_text",
    "decode_tokens",
]

PAD, BOS, EOS, UNK, NUM = "<pad>", "<bos>", "<eos>", "<unk>", "<num>"
RESERVED_TOKENS = (PAD, BOS, EOS, UNK, NUM)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, NUM_ID = range(5)

_END_OF_WORD = "</w>"


class Modality(IntEnum):
    TEXT = 0
    NUMBER = 1


@dataclass
class MixedSequence:
    """Interleaved token/number stream; the universal data carrier.

    All three lists share one length. A position is Number exactly when
    its token is ``<num>``, and only Number positions carry a nonzero
    value. ``truncated`` is metadata set by generation when decoding hit
    the length cap.
    """

    token_ids: list[int]
    values: list[float]
    modality: list[Modality]
    truncated: bool = False

    def __post_init__(self):
        n = len(self.token_ids)
        if len(self.values) != n or len(self.modality) != n:
            raise ValueError(
                f"length mismatch: {n} tokens, {len(self.values)} values, {len(self.modality)} modality labels"
            )
        for i, (tok, val, mod) in enumerate(zip(self.token_ids, self.values, self.modality)):
            if (mod == Modality.NUMBER) != (tok == NUM_ID):
                raise ValueError(f"position {i}: modality {mod!r} inconsistent with token id {tok}")
            if mod == Modality.TEXT and val != 0.0:
                raise ValueError(f"position {i}: text position carries value {val}")

    def __len__(self) -> int:
        return len(self.token_ids)


# ---------------------------------------------------------------------------
# word/punctuation tokenizer and number extraction

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")
_SCAN_RE = re.compile(r"\d+(?:\.\d+)?|[A-Za-z]+|\S")
_NO_SPACE_BEFORE = {".", ",", "?", ")", "*"}
_NO_SPACE_AFTER = {"(", "*"}


def is_number_token(tok: str) -> bool:
    return bool(_NUMBER_RE.fullmatch(tok))


def tokenize_words(text: str) -> list[str]:
    """Whitespace/punctuation tokenization with numerals kept whole.

    A '-' glues onto the following digits only when they are adjacent in
    the source and the preceding token is not itself a number or ')';
    a spaced '-' is always the subtraction token. This reads
    "Calculate -971810940.335 + 612120." as one negative operand but
    "64*t - 383*t" as a subtraction.
    """
    raw = [(m.group(), m.start(), m.end()) for m in _SCAN_RE.finditer(text)]
    out: list[str] = []
    i = 0
    while i < len(raw):
        tok, start, end = raw[i]
        if tok == "-" and i + 1 < len(raw):
            nxt, nstart, _ = raw[i + 1]
            glued = nstart == end and nxt[0].isdigit()
            prev_operand = out and (is_number_token(out[-1]) or out[-1] == ")")
            if glued and not prev_operand:
                out.append("-" + nxt)
                i += 2
                continue
        out.append(tok)
        i += 1
    return out


def extract_numbers(text: str) -> tuple[list[str], list[float]]:
    """Replace every maximal numeric literal with ``<num>``.

    Returns the token template and the extracted values in reading
    order. Text with no numerals yields an empty value list.
    """
    template: list[str] = []
    values: list[float] = []
    for tok in tokenize_words(text):
        if is_number_token(tok):
            template.append(NUM)
            values.append(float(tok))
        else:
            template.append(tok)
    return template, values


def detokenize(tokens: Sequence[str]) -> str:
    """Join word/punct tokens back into a string.

    Inverse of tokenize_words on canonically formatted generator text:
    '*' binds tight, sentence punctuation attaches left, parens hug
    their content.
    """
    if not tokens:
        return ""
    s = tokens[0]
    prev = tokens[0]
    for tok in tokens[1:]:
        if tok in _NO_SPACE_BEFORE or prev in _NO_SPACE_AFTER:
            s += tok
        else:
            s += " " + tok
        prev = tok
    return s


def format_value(v: float) -> str:
    """Canonical number formatting: positional notation, '.' decimal
    point, no thousands separators, trailing zeros trimmed."""
    if not math.isfinite(v):
        raise ValueError(f"cannot format non-finite value {v!r}")
    return np.format_float_positional(v, unique=True, trim="-")


def render_template(template: Sequence[str], values: Sequence[float]) -> str:
    """Substitute formatted values back into an extract_numbers template."""
    values = list(values)
    out = []
    vi = 0
    for tok in template:
        if tok == NUM:
            out.append(format_value(values[vi]))
            vi += 1
        else:
            out.append(tok)
    if vi != len(values):
        raise ValueError(f"template has {vi} slots but {len(values)} values were given")
    return detokenize(out)


# ---------------------------------------------------------------------------
# signed log transform


def slog(x):
    """sign(x) * ln(1 + |x|); odd, strictly increasing, invertible."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("slog requires finite input")
    res = np.sign(arr) * np.log1p(np.abs(arr))
    return float(res) if np.isscalar(x) or arr.ndim == 0 else res


def sinv(y):
    """Exact inverse of slog: sign(y) * (exp(|y|) - 1)."""
    arr = np.asarray(y, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("sinv requires finite input")
    res = np.sign(arr) * np.expm1(np.abs(arr))
    return float(res) if np.isscalar(y) or arr.ndim == 0 else res


# ---------------------------------------------------------------------------
# number schemes


@dataclass(frozen=True)
class NumberScheme:
    """One encoding/decoding configuration plus its hyperparameters.

    The value-based schemes (xval, mmd, mmd-log, multi-mlp) replace
    numerals with ``<num>`` + value; the text baselines (bpe, word) push
    numerals through the ordinary tokenizer and never activate routing.
    """

    name: str
    bpe_merges: int = 512
    word_vocab_cap: int = 32768
    xval_scale: float = 1e4
    xval_clip: float = 5.0

    NAMES = ("bpe", "word", "xval", "mmd", "mmd-log", "multi-mlp")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ValueError(f"unknown scheme {self.name!r}; valid: {', '.join(self.NAMES)}")

    @classmethod
    def from_name(cls, name: str, **overrides) -> "NumberScheme":
        return cls(name=name, **overrides)

    @property
    def value_based(self) -> bool:
        return self.name in ("xval", "mmd", "mmd-log", "multi-mlp")

    @property
    def uses_slog(self) -> bool:
        return self.name == "mmd-log"

    @property
    def routing_default(self) -> bool:
        return self.value_based

    @property
    def num_head_depth_default(self) -> int:
        return {"mmd": 1, "mmd-log": 1, "multi-mlp": 3}.get(self.name, 2)

    def encode_value(self, v: float) -> float:
        """Map a raw number into the space the model sees."""
        if self.name == "mmd-log":
            return slog(v)
        if self.name == "xval":
            return float(np.clip(v / self.xval_scale, -self.xval_clip, self.xval_clip))
        return float(v)

    def decode_value(self, y: float) -> float:
        """Map a model-space prediction back to a raw number."""
        if self.name == "mmd-log":
            return sinv(y)
        if self.name == "xval":
            return float(y) * self.xval_scale
        return float(y)


# ---------------------------------------------------------------------------
# byte pair encoding (digit-isolated)


@dataclass
class BpeMerges:
    """Ordered merge list over the observed single-character alphabet."""

    merges: list[tuple[str, str]]
    alphabet: list[str]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for a, b in self.merges:
                f.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "BpeMerges":
        merges = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                a, b = line.split(" ")
                merges.append((a, b))
        alphabet = sorted({ch for pair in merges for sym in pair for ch in sym.replace(_END_OF_WORD, "")})
        return cls(merges=merges, alphabet=alphabet)


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (_END_OF_WORD,)


def _has_digit(sym: str) -> bool:
    return any(ch.isdigit() for ch in sym)


def bpe_train(corpus: Iterable[str], n_merges: int) -> BpeMerges:
    """Greedy most-frequent-pair merging over pretokenized words.

    Ties break on the lexicographically smallest pair so training is
    deterministic. Merges never touch a symbol containing a digit, which
    keeps numerals decomposed digit by digit.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("bpe_train: empty corpus")
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    word_freq: dict[tuple[str, ...], int] = {}
    alphabet: set[str] = set()
    for text in corpus:
        for word in tokenize_words(text):
            alphabet.update(word)
            key = _word_symbols(word)
            word_freq[key] = word_freq.get(key, 0) + 1

    words = list(word_freq.items())
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        counts: dict[tuple[str, str], int] = {}
        for syms, freq in words:
            for pair in zip(syms, syms[1:]):
                if _has_digit(pair[0]) or _has_digit(pair[1]):
                    continue
                counts[pair] = counts.get(pair, 0) + freq
        if not counts:
            break
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        words = [(_apply_merge(syms, best), freq) for syms, freq in words]
    return BpeMerges(merges=merges, alphabet=sorted(alphabet))


def _apply_merge(syms: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(syms):
        if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
            out.append(syms[i] + syms[i + 1])
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def bpe_encode(text: str, merges: BpeMerges) -> list[str]:
    """Encode text to BPE symbols, applying merges in training order."""
    rank = {pair: i for i, pair in enumerate(merges.merges)}
    out: list[str] = []
    for word in tokenize_words(text):
        syms = _word_symbols(word)
        while len(syms) > 1:
            pairs = set(zip(syms, syms[1:]))
            ranked = [(rank[p], p) for p in pairs if p in rank]
            if not ranked:
                break
            _, best = min(ranked)
            syms = _apply_merge(syms, best)
        out.extend(syms)
    return out


def bpe_decode(symbols: Sequence[str]) -> str:
    """Concatenate symbols back into words and detokenize."""
    words: list[str] = []
    cur = ""
    for sym in symbols:
        cur += sym
        if cur.endswith(_END_OF_WORD):
            words.append(cur[: -len(_END_OF_WORD)])
            cur = ""
    if cur:
        words.append(cur)
    return detokenize(words)


# ---------------------------------------------------------------------------
# vocabulary


@dataclass
class Vocab:
    """Token/id bijection with the fixed reserved prefix.

    ids 0..4 are always <pad>, <bos>, <eos>, <unk>, <num> in that order.
    For the bpe scheme the trained merges ride along.
    """

    id_to_token: list[str]
    token_to_id: dict[str, int]
    merges: Optional[BpeMerges] = None

    def __post_init__(self):
        if tuple(self.id_to_token[:5]) != RESERVED_TOKENS:
            raise ValueError("vocab must start with the reserved tokens in fixed order")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode_token(self, tok: str) -> int:
        return self.token_to_id.get(tok, UNK_ID)

    def decode_id(self, idx: int) -> str:
        return self.id_to_token[idx]

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], merges: Optional[BpeMerges] = None) -> "Vocab":
        id_to_token = list(RESERVED_TOKENS)
        seen = set(id_to_token)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                id_to_token.append(tok)
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        return cls(id_to_token=id_to_token, token_to_id=token_to_id, merges=merges)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.id_to_token:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path, merges: Optional[BpeMerges] = None) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            id_to_token = [line.rstrip("\n") for line in f]
        while id_to_token and id_to_token[-1] == "":
            id_to_token.pop()
        return cls(
            id_to_token=id_to_token,
            token_to_id={tok: i for i, tok in enumerate(id_to_token)},
            merges=merges,
        )


def _count(counter: dict[str, int], tokens: Iterable[str]) -> None:
    for tok in tokens:
        counter[tok] = counter.get(tok, 0) + 1


def build_vocab(examples: Sequence["Example"], scheme: NumberScheme) -> Vocab:
    """Build the scheme's vocabulary (and merges, for bpe) from a corpus.

    Frequency order with lexicographic tie-break keeps ids stable across
    runs. The word scheme caps at the most frequent ``word_vocab_cap``
    types; rarer strings (mostly unique numerals) fall to <unk>.
    """
    texts = [ex.question for ex in examples] + [ex.answer for ex in examples]
    counter: dict[str, int] = {}
    merges = None
    if scheme.name == "bpe":
        merges = bpe_train(texts, scheme.bpe_merges)
        for text in texts:
            _count(counter, bpe_encode(text, merges))
    elif scheme.name == "word":
        for text in texts:
            _count(counter, tokenize_words(text))
    else:
        for text in texts:
            template, _ = extract_numbers(text)
            _count(counter, t for t in template if t != NUM)
    ordered = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    if scheme.name == "word":
        ordered = ordered[: scheme.word_vocab_cap - len(RESERVED_TOKENS)]
    return Vocab.from_tokens((tok for tok, _ in ordered), merges=merges)


# ---------------------------------------------------------------------------
# example encoding


def encode_text(text: str, scheme: NumberScheme, vocab: Vocab) -> MixedSequence:
    """Encode one string to a <bos>...<eos> MixedSequence.

    Value-based schemes emit <num> positions carrying the scheme-encoded
    value (slog space for mmd-log, normalized/clipped for xval); text
    schemes emit Text positions only.
    """
    ids = [BOS_ID]
    values = [0.0]
    modality = [Modality.TEXT]
    if scheme.value_based:
        template, nums = extract_numbers(text)
        vi = 0
        for tok in template:
            if tok == NUM:
                ids.append(NUM_ID)
                values.append(scheme.encode_value(nums[vi]))
                modality.append(Modality.NUMBER)
                vi += 1
            else:
                ids.append(vocab.encode_token(tok))
                values.append(0.0)
                modality.append(Modality.TEXT)
    else:
        if scheme.name == "bpe":
            if vocab.merges is None:
                raise ValueError("bpe scheme requires a vocab with merges")
            tokens = bpe_encode(text, vocab.merges)
        else:
            tokens = tokenize_words(text)
        for tok in tokens:
            ids.append(vocab.encode_token(tok))
            values.append(0.0)
            modality.append(Modality.TEXT)
    ids.append(EOS_ID)
    values.append(0.0)
    modality.append(Modality.TEXT)
    return MixedSequence(token_ids=ids, values=values, modality=modality)


def encode_example(ex: "Example", scheme: NumberScheme, vocab: Vocab) -> tuple[MixedSequence, MixedSequence]:
    """Encode a question/answer pair to (src, tgt) MixedSequences."""
    return encode_text(ex.question, scheme, vocab), encode_text(ex.answer, scheme, vocab)


def decode_tokens(seq: MixedSequence, scheme: NumberScheme, vocab: Vocab) -> str:
    """Render a generated sequence back to text.

    Number positions print their (raw) value; bpe symbol streams are
    stitched back into words first. <bos>/<eos>/<pad> are dropped.
    """
    body_ids = []
    body_vals = []
    for tok, val, mod in zip(seq.token_ids, seq.values, seq.modality):
        if tok in (BOS_ID, EOS_ID, PAD_ID):
            continue
        body_ids.append(tok)
        body_vals.append((val, mod))
    if scheme.name == "bpe":
        return bpe_decode([vocab.decode_id(i) for i in body_ids])
    parts = []
    for tok_id, (val, mod) in zip(body_ids, body_vals):
        if mod == Modality.NUMBER:
            parts.append(format_value(val))
        else:
            parts.append(vocab.decode_id(tok_id))
    return detokenize(parts)

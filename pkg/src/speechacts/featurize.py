"""Turn text and context into feature vectors.

Each modeling example becomes a binary bag of words over a vocabulary fixed
on training data, plus three shallow context features:

* ``slen``: word count of the turn divided by the mean word count of the
  speaker's previous turns in the conversation (1.0 when there is no such
  history, the raw word count when that mean is 0),
* ``wc``: raw word count,
* ``ppau``: seconds since the immediately preceding turn of any speaker
  (0.0 for a conversation's first turn).

Shallow features are z-scored with training-set statistics before they meet
the classifier; word columns stay 0/1.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Conversation, ModelingExample

SAME_SPEAKER = "same"
ANY_SPEAKER = "any"
SLEN_SCOPES = (SAME_SPEAKER, ANY_SPEAKER)

SHALLOW_NAMES = ("slen_sf", "wc_sf", "ppau_sf")
N_SHALLOW = 3

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character.

    No stemming, no stop-word removal; duplicates keep their order.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Token -> dense column index map, in first-occurrence order."""

    tokens: dict[str, int]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    @property
    def token_list(self) -> list[str]:
        """Tokens in column order."""
        ordered = [""] * len(self.tokens)
        for tok, idx in self.tokens.items():
            ordered[idx] = tok
        return ordered

    @staticmethod
    def from_tokens(ordered: Sequence[str]) -> "Vocabulary":
        return Vocabulary({tok: i for i, tok in enumerate(ordered)})


def build_vocabulary(texts: Iterable[str]) -> Vocabulary:
    """One column per distinct token across the training texts.

    Must only ever see training-fold texts; test tokens never enlarge the
    vocabulary.
    """
    tokens: dict[str, int] = {}
    for text in texts:
        for tok in tokenize(text):
            if tok not in tokens:
                tokens[tok] = len(tokens)
    return Vocabulary(tokens)


@dataclass(frozen=True)
class ShallowFeatures:
    slen: float
    wc: int
    ppau: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.slen, float(self.wc), self.ppau)


def shallow_from_history(
    history: Sequence[tuple[str, float, int]],
    speaker: str,
    timestamp_s: float,
    wc: int,
    scope: str = SAME_SPEAKER,
) -> ShallowFeatures:
    """Compute slen/wc/ppau from the (speaker, timestamp_s, wc) prefix.

    Shared by batch featurization and the serve session path so both produce
    bit-identical values. Only turns strictly before the current one may be
    in ``history``.
    """
    if scope not in SLEN_SCOPES:
        raise ValueError(f"slen scope must be one of {SLEN_SCOPES}, got {scope!r}")
    ppau = timestamp_s - history[-1][1] if history else 0.0
    prior = [w for s, _, w in history if scope == ANY_SPEAKER or s == speaker]
    if not prior:
        slen = 1.0
    else:
        mean_wc = sum(prior) / len(prior)
        slen = wc / mean_wc if mean_wc > 0 else float(wc)
    return ShallowFeatures(slen=slen, wc=wc, ppau=ppau)


def shallow_features(
    conversation: Conversation, turn_index: int, scope: str = SAME_SPEAKER
) -> ShallowFeatures:
    """Shallow features for one turn, using only earlier turns as context."""
    if not 0 <= turn_index < len(conversation.turns):
        raise IndexError(f"turn_index {turn_index} out of range for {conversation.conversation_id}")
    history = [
        (t.speaker, t.timestamp_s, len(tokenize(t.text)))
        for t in conversation.turns[:turn_index]
    ]
    turn = conversation.turns[turn_index]
    return shallow_from_history(history, turn.speaker, turn.timestamp_s, len(tokenize(turn.text)), scope)


@dataclass(frozen=True)
class ScalingParams:
    """Training-set mean and population standard deviation per shallow feature."""

    means: tuple[float, float, float]
    stds: tuple[float, float, float]

    def scale(self, shallow: ShallowFeatures) -> tuple[float, float, float]:
        raw = shallow.as_tuple()
        return tuple(
            (v - m) / s if s > 0 else 0.0 for v, m, s in zip(raw, self.means, self.stds)
        )


def fit_scaling(features: Sequence[ShallowFeatures]) -> ScalingParams:
    """Mean and population std over training shallow features (never test ones)."""
    if not features:
        raise ValueError("cannot fit scaling on an empty training set")
    cols = list(zip(*(f.as_tuple() for f in features)))
    means = tuple(sum(c) / len(c) for c in cols)
    stds = tuple(
        math.sqrt(sum((v - m) ** 2 for v in c) / len(c)) for c, m in zip(cols, means)
    )
    return ScalingParams(means=means, stds=stds)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse word-presence indices plus raw and z-scored shallow features."""

    word_indicators: frozenset[int]
    shallow: ShallowFeatures
    shallow_scaled: tuple[float, float, float]

    def to_dense(self, vocab_size: int) -> np.ndarray:
        dense = np.zeros(vocab_size + N_SHALLOW, dtype=np.float64)
        for idx in self.word_indicators:
            dense[idx] = 1.0
        dense[vocab_size:] = self.shallow_scaled
        return dense


def vector_from_parts(
    tokens: Iterable[str],
    shallow: ShallowFeatures,
    vocabulary: Vocabulary,
    scaling: ScalingParams,
) -> FeatureVector:
    """Assemble a FeatureVector; tokens outside the vocabulary are ignored."""
    indicators = frozenset(
        vocabulary.tokens[tok] for tok in tokens if tok in vocabulary.tokens
    )
    return FeatureVector(indicators, shallow, scaling.scale(shallow))


def vectorize(
    conversation: Conversation,
    turn_index: int,
    vocabulary: Vocabulary,
    scaling: ScalingParams,
    scope: str = SAME_SPEAKER,
) -> FeatureVector:
    shallow = shallow_features(conversation, turn_index, scope)
    tokens = tokenize(conversation.turns[turn_index].text)
    return vector_from_parts(tokens, shallow, vocabulary, scaling)


def fit_features(
    examples: Sequence[ModelingExample], scope: str = SAME_SPEAKER
) -> tuple[Vocabulary, ScalingParams]:
    """Fit vocabulary and scaling on a training split only."""
    vocab = build_vocabulary(ex.turn.text for ex in examples)
    scaling = fit_scaling([shallow_features(ex.conversation, ex.turn_index, scope) for ex in examples])
    return vocab, scaling


def feature_matrix(
    examples: Sequence[ModelingExample],
    vocabulary: Vocabulary,
    scaling: ScalingParams,
    scope: str = SAME_SPEAKER,
) -> np.ndarray:
    """Dense design matrix: |vocabulary| word indicators then 3 scaled shallow."""
    width = len(vocabulary) + N_SHALLOW
    X = np.zeros((len(examples), width), dtype=np.float64)
    for row, ex in enumerate(examples):
        fv = vectorize(ex.conversation, ex.turn_index, vocabulary, scaling, scope)
        for idx in fv.word_indicators:
            X[row, idx] = 1.0
        X[row, len(vocabulary):] = fv.shallow_scaled
    return X


def feature_names(vocabulary: Vocabulary) -> list[str]:
    """Column names for the dense layout: vocabulary tokens then *_sf."""
    return vocabulary.token_list + list(SHALLOW_NAMES)

"""Count-based conditional trigram language model.

The trainable stand-in for a neural generator: fitting increments trigram
counts, sampling draws from Laplace-smoothed conditionals with temperature.
Word-level tokenization splits on whitespace and punctuation, with the
format literals (reward tokens, feedback markers, solution separator, end
token) kept atomic so each occupies a single context slot.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .fcft import RESERVED_TOKENS

BOS = "<|bos|>"  # context sentinel only, never in the vocabulary
END_TOKEN = "<|end|>"

_ATOMIC = RESERVED_TOKENS + (END_TOKEN,)
_TOKEN_RE = re.compile(
    "|".join(re.escape(tok) for tok in _ATOMIC) + r"|\w+|[^\w\s]"
)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Iterable[str]) -> str:
    """Render sampled tokens as text, dropping pure format tokens."""
    return " ".join(t for t in tokens if t not in _ATOMIC)


@dataclass
class TrigramState:
    """Mutable trigram counts with Laplace smoothing.

    The vocabulary holds every token observed in fitted data plus the end
    token; the BOS sentinel pads contexts but is never predicted. Smoothed
    conditionals therefore normalize over exactly ``len(vocabulary)`` events.
    """

    smoothing_alpha: float = 1.0
    counts: dict = field(default_factory=dict)
    vocabulary: set = field(default_factory=lambda: {END_TOKEN})

    def __post_init__(self):
        if self.smoothing_alpha <= 0:
            raise ValueError("smoothing_alpha must be > 0")
        self.vocabulary.add(END_TOKEN)

    # -- fitting -----------------------------------------------------------

    def fit(self, sequences: Iterable[str], epochs: int = 1) -> "TrigramState":
        """Add ``epochs`` x the trigram counts of each sequence; returns self."""
        if epochs < 1:
            raise ValueError("epochs must be >= 1")
        for sequence in sequences:
            tokens = tokenize(sequence)
            self.vocabulary.update(tokens)
            padded = [BOS, BOS, *tokens, END_TOKEN]
            for i in range(2, len(padded)):
                context = (padded[i - 2], padded[i - 1])
                bucket = self.counts.get(context)
                if bucket is None:
                    bucket = Counter()
                    self.counts[context] = bucket
                bucket[padded[i]] += epochs
        return self

    # -- probabilities -----------------------------------------------------

    def conditional(self, context: tuple) -> dict:
        """Smoothed next-token distribution for one context; sums to 1."""
        vocab = sorted(self.vocabulary)
        bucket = self.counts.get(tuple(context), {})
        total = sum(bucket.values()) + self.smoothing_alpha * len(vocab)
        return {
            token: (bucket.get(token, 0) + self.smoothing_alpha) / total
            for token in vocab
        }

    def probability(self, context: tuple, token: str) -> float:
        vocab_size = len(self.vocabulary)
        bucket = self.counts.get(tuple(context), {})
        total = sum(bucket.values()) + self.smoothing_alpha * vocab_size
        return (bucket.get(token, 0) + self.smoothing_alpha) / total

    def logprob(self, continuation: str, prefix: str = "") -> float:
        """Chain-rule log probability of a continuation given a prefix.

        Scores only the continuation's tokens (no end-of-sequence event), so
        it is additive over any split of the continuation. Empty continuation
        scores 0.0.
        """
        prefix_tokens = [BOS, BOS, *tokenize(prefix)]
        context = (prefix_tokens[-2], prefix_tokens[-1])
        total = 0.0
        for token in tokenize(continuation):
            total += float(np.log(self.probability(context, token)))
            context = (context[1], token)
        return total

    # -- sampling ----------------------------------------------------------

    def sample_tokens(
        self,
        prompt_tokens: list,
        max_new_tokens: int,
        temperature: float,
        rng: np.random.Generator,
    ) -> list[str]:
        """Draw one completion (list of tokens, end token excluded)."""
        vocab = sorted(self.vocabulary)
        padded = [BOS, BOS, *prompt_tokens]
        context = (padded[-2], padded[-1])
        out: list[str] = []
        alpha = self.smoothing_alpha
        for _ in range(max_new_tokens):
            bucket = self.counts.get(context, {})
            weights = np.array(
                [bucket.get(tok, 0) + alpha for tok in vocab], dtype=np.float64
            )
            if temperature <= 0.0:
                # Argmax; ties break toward the lexicographically smallest
                # token, which sorted order gives us for free.
                token = vocab[int(np.argmax(weights))]
            else:
                logits = np.log(weights / weights.sum()) / temperature
                logits -= logits.max()
                probs = np.exp(logits)
                probs /= probs.sum()
                token = vocab[int(rng.choice(len(vocab), p=probs))]
            if token == END_TOKEN:
                break
            out.append(token)
            context = (context[1], token)
        return out

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "smoothing_alpha": self.smoothing_alpha,
            "vocabulary": sorted(self.vocabulary),
            "counts": [
                [list(ctx), sorted(bucket.items())]
                for ctx, bucket in sorted(self.counts.items())
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrigramState":
        state = cls(smoothing_alpha=payload["smoothing_alpha"])
        state.vocabulary = set(payload["vocabulary"])
        state.vocabulary.add(END_TOKEN)
        state.counts = {
            tuple(ctx): Counter(dict(items)) for ctx, items in payload["counts"]
        }
        return state

    def checksum(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def trigram_fit(state: TrigramState, sequences, epochs: int = 3) -> TrigramState:
    """Module-level fit entry point (single-writer: mutates ``state``)."""
    return state.fit(sequences, epochs=epochs)


def trigram_logprob(state: TrigramState, continuation: str, prefix: str = "") -> float:
    return state.logprob(continuation, prefix=prefix)

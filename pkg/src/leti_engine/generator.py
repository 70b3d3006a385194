"""Sampling interface over pluggable generators.

Three kinds: ``remote`` posts to a generation endpoint, ``mock`` replays a
fixed table (tests and dry runs), ``trigram`` samples the trainable count
model. Conditioning means prepending the reward token to the prompt exactly
once; mock and trigram sampling is bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Optional

import httpx
import numpy as np

from .errors import GenerationTransportError, ValidationError
from .trigram import TrigramState, detokenize, tokenize

ENDPOINT_ENV_VAR = "LETI_GEN_ENDPOINT"


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative description of which generator to run and how."""

    kind: str  # "remote" | "mock" | "trigram"
    endpoint: Optional[str] = None
    table_id: Optional[str] = None
    state_id: Optional[str] = None
    default_temperature: float = 1.0
    max_new_tokens: int = 512
    smoothing_alpha: float = 1.0
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("remote", "mock", "trigram"):
            raise ValidationError(f"unknown generator kind {self.kind!r}")
        if self.default_temperature < 0:
            raise ValidationError("default_temperature must be >= 0")
        if self.max_new_tokens <= 0:
            raise ValidationError("max_new_tokens must be > 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "table_id": self.table_id,
            "state_id": self.state_id,
            "default_temperature": self.default_temperature,
            "max_new_tokens": self.max_new_tokens,
            "smoothing_alpha": self.smoothing_alpha,
            "stop": list(self.stop),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GeneratorSpec":
        return cls(
            kind=payload["kind"],
            endpoint=payload.get("endpoint"),
            table_id=payload.get("table_id"),
            state_id=payload.get("state_id"),
            default_temperature=payload.get("default_temperature", 1.0),
            max_new_tokens=payload.get("max_new_tokens", 512),
            smoothing_alpha=payload.get("smoothing_alpha", 1.0),
            stop=tuple(payload.get("stop", ())),
        )


class MockGenerator:
    """Replays canned completions per prompt, ignoring any condition."""

    kind = "mock"

    def __init__(self, table: dict, max_new_tokens: int = 512):
        self.table = dict(table)
        self.max_new_tokens = max_new_tokens

    def sample(self, prompt, n, temperature=None, condition=None, seed=0):
        if prompt not in self.table:
            raise ValidationError(f"mock generator has no entry for prompt {prompt!r}")
        canned = self.table[prompt]
        if not canned:
            raise ValidationError(f"mock table entry for {prompt!r} is empty")
        return [canned[i % len(canned)] for i in range(n)]


class TrigramGenerator:
    """Samples the count model; completions render without format tokens."""

    kind = "trigram"

    def __init__(self, state: TrigramState, max_new_tokens: int = 512):
        self.state = state
        self.max_new_tokens = max_new_tokens

    def sample(self, prompt, n, temperature=1.0, condition=None, seed=0):
        full_prompt = f"{condition}{prompt}" if condition else prompt
        prompt_tokens = tokenize(full_prompt)
        rng = np.random.default_rng(seed)
        completions = []
        for _ in range(n):
            tokens = self.state.sample_tokens(
                prompt_tokens, self.max_new_tokens, temperature, rng
            )
            completions.append(detokenize(tokens))
        return completions

    def fit(self, sequences, epochs: int = 3):
        self.state.fit(sequences, epochs=epochs)


class RemoteGenerator:
    """Thin JSON client for an external generation service.

    Protocol: POST {prompt, n, temperature, max_new_tokens, stop} and read
    back {"completions": [...]}. Transport failures retry with backoff and
    surface as :class:`GenerationTransportError` carrying the attempt count.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: Optional[str] = None,
        max_new_tokens: int = 512,
        stop: tuple[str, ...] = (),
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 0.5,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV_VAR)
        if not endpoint:
            raise ValidationError(
                "remote generator needs an endpoint (config or LETI_GEN_ENDPOINT)"
            )
        self.endpoint = endpoint
        self.max_new_tokens = max_new_tokens
        self.stop = list(stop)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._transport = transport

    def sample(self, prompt, n, temperature=1.0, condition=None, seed=0):
        payload = {
            "prompt": f"{condition}{prompt}" if condition else prompt,
            "n": n,
            "temperature": temperature,
            "max_new_tokens": self.max_new_tokens,
            "stop": self.stop,
        }
        last_error: Optional[Exception] = None
        last_status = None
        for attempt in range(1, self.retries + 1):
            try:
                with httpx.Client(
                    timeout=self.timeout, transport=self._transport
                ) as client:
                    response = client.post(self.endpoint, json=payload)
                if response.status_code >= 500:
                    last_status = response.status_code
                    raise httpx.HTTPStatusError(
                        f"server error {response.status_code}",
                        request=response.request,
                        response=response,
                    )
                response.raise_for_status()
                completions = response.json()["completions"]
                if len(completions) != n:
                    raise ValidationError(
                        f"endpoint returned {len(completions)} completions, expected {n}"
                    )
                return completions
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * attempt)
        raise GenerationTransportError(
            f"generation endpoint failed after {self.retries} attempts: {last_error}",
            attempts=self.retries,
            last_status=last_status,
        )


def build_generator(
    spec: GeneratorSpec,
    state: Optional[TrigramState] = None,
    table: Optional[dict] = None,
    transport: Optional[httpx.BaseTransport] = None,
):
    if spec.kind == "mock":
        if table is None and spec.table_id and os.path.exists(spec.table_id):
            import json

            with open(spec.table_id, encoding="utf-8") as handle:
                table = json.load(handle)
        if table is None:
            raise ValidationError("mock generator requires a completion table")
        return MockGenerator(table, max_new_tokens=spec.max_new_tokens)
    if spec.kind == "trigram":
        if state is None:
            state = TrigramState(smoothing_alpha=spec.smoothing_alpha)
        return TrigramGenerator(state, max_new_tokens=spec.max_new_tokens)
    return RemoteGenerator(
        endpoint=spec.endpoint,
        max_new_tokens=spec.max_new_tokens,
        stop=spec.stop,
        transport=transport,
    )


def sample(generator, prompt, n, temperature=None, condition=None, seed=0):
    """Draw exactly n completions from a generator.

    ``condition`` (a reward token) is prepended to the prompt exactly once by
    the generator itself.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if temperature is None:
        temperature = 1.0
    completions = generator.sample(
        prompt, n, temperature=temperature, condition=condition, seed=seed
    )
    if len(completions) != n:
        raise ValidationError(
            f"generator returned {len(completions)} completions, expected {n}"
        )
    return completions

"""Client for an external chat-completion style model endpoint.

Two capabilities are exposed: probing whether a model already knows a fact,
and polishing generated text.  Both degrade softly: a probe that cannot be
answered (transport failure, exhausted retries, unexpected reply) comes
back ``undecided``, and a failed polish returns the input text unchanged
with a warning, so pipelines never crash on a flaky endpoint.

In mock mode no network is touched.  Probe verdicts come from a supplied
lookup table keyed by the fact sentence (closed world: absent means
unknown) and polish is the identity, which makes every downstream stage
byte-for-byte deterministic.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import requests

from .errors import ClientError, UsageError

logger = logging.getLogger(__name__)

VERDICT_KNOWN = "known"
VERDICT_UNKNOWN = "unknown"
VERDICT_UNDECIDED = "undecided"

MODE_LIVE = "live"
MODE_MOCK = "mock"

PROBE_INSTRUCTION = (
    "You will be shown a single statement. Reply with exactly one word: "
    "YES if you know the statement to be true, NO otherwise."
)


@dataclass
class ClientConfig:
    mode: str = MODE_MOCK
    endpoint: str = ""
    model: str = ""
    token_env: str = "KGREASON_API_TOKEN"
    timeout: float = 30.0
    max_retries: int = 2
    retry_backoff: float = 0.5
    parallelism: int = 4
    debug: bool = False

    def __post_init__(self):
        if self.mode not in (MODE_LIVE, MODE_MOCK):
            raise UsageError(f"unknown client mode: {self.mode!r}")
        if self.mode == MODE_LIVE and not self.endpoint:
            raise UsageError("live mode requires an endpoint")


class ModelClient:
    """Probe and polish operations against a model endpoint or a mock table.

    ``transport`` may be injected for testing; it must behave like
    ``requests.post`` and return an object with ``status_code`` and
    ``json()``.  Probe results are memoized per client instance.
    """

    def __init__(
        self,
        config: Optional[ClientConfig] = None,
        probe_table: Optional[Mapping[str, str] | Iterable[str]] = None,
        transport: Optional[Callable] = None,
    ):
        self.config = config or ClientConfig()
        if probe_table is None:
            self._probe_table: dict[str, str] = {}
        elif isinstance(probe_table, Mapping):
            self._probe_table = dict(probe_table)
        else:
            self._probe_table = {s: VERDICT_KNOWN for s in probe_table}
        bad = set(self._probe_table.values()) - {
            VERDICT_KNOWN,
            VERDICT_UNKNOWN,
            VERDICT_UNDECIDED,
        }
        if bad:
            raise UsageError(f"invalid verdicts in probe table: {sorted(bad)}")
        self._transport = transport if transport is not None else requests.post
        self._cache: dict[str, str] = {}
        self._lock = threading.Lock()

    # ------------------------------------------------------------------

    def probe_fact(self, sentence: str) -> str:
        """Ternary knowledge probe for one rendered fact sentence."""
        if not sentence or not sentence.strip():
            raise UsageError("cannot probe an empty sentence")
        with self._lock:
            if sentence in self._cache:
                return self._cache[sentence]
        if self.config.mode == MODE_MOCK:
            verdict = self._probe_table.get(sentence, VERDICT_UNKNOWN)
        else:
            verdict = self._probe_live(sentence)
        with self._lock:
            self._cache[sentence] = verdict
        return verdict

    def probe_many(self, sentences: Iterable[str]) -> list[str]:
        """Probe several sentences, concurrently in live mode."""
        sentences = list(sentences)
        if self.config.mode == MODE_MOCK or self.config.parallelism <= 1:
            return [self.probe_fact(s) for s in sentences]
        with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
            return list(pool.map(self.probe_fact, sentences))

    def polish(self, instruction: str, text: str) -> str:
        """Rewrite ``text`` per ``instruction``; identity on mock or failure."""
        if not text or not text.strip():
            raise UsageError("cannot polish empty text")
        if self.config.mode == MODE_MOCK:
            return text
        reply = self._complete(f"{instruction}\n\n{text}")
        if reply is None or not reply.strip():
            logger.warning("polish failed, returning text unchanged")
            return text
        return reply

    # ------------------------------------------------------------------

    def _probe_live(self, sentence: str) -> str:
        reply = self._complete(f"{PROBE_INSTRUCTION}\n\n{sentence}")
        if reply is None:
            return VERDICT_UNDECIDED
        word = reply.strip().split()[0].upper() if reply.strip() else ""
        if word.startswith("YES"):
            return VERDICT_KNOWN
        if word.startswith("NO"):
            return VERDICT_UNKNOWN
        return VERDICT_UNDECIDED

    def _complete(self, prompt: str) -> Optional[str]:
        """One chat completion, with bounded retries.  None on failure."""
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            try:
                response = self._transport(
                    self.config.endpoint,
                    headers=headers,
                    data=json.dumps(payload),
                    timeout=self.config.timeout,
                )
                if response.status_code != 200:
                    raise ClientError(f"endpoint returned {response.status_code}")
                body = response.json()
                content = body["choices"][0]["message"]["content"]
                if self.config.debug:
                    logger.debug("model reply: %r", content)
                return str(content)
            except Exception as exc:  # noqa: BLE001 - any failure is retryable
                logger.warning(
                    "model call failed (attempt %d/%d): %s", attempt + 1, attempts, exc
                )
                if attempt + 1 < attempts and self.config.retry_backoff > 0:
                    time.sleep(self.config.retry_backoff * (2**attempt))
        return None


def mock_client(probe_table: Optional[Mapping[str, str] | Iterable[str]] = None) -> ModelClient:
    """Convenience constructor for the deterministic offline client."""
    return ModelClient(ClientConfig(mode=MODE_MOCK), probe_table=probe_table)

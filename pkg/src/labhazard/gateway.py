"""Uniform model access: endpoint config, retrying gateway, mock and HTTP backends.

The mock backend makes the whole pipeline runnable and testable offline: for
a fixed (endpoint, prompt, images, seed) it returns byte-identical responses
across processes, and it can be scripted per test (fixed answers, fixture
playback, or injected transient failures).
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
import re
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

logger = logging.getLogger(__name__)


class EndpointRole(enum.Enum):
    GT_EXTRACTOR = "gt_extractor"
    SG_GENERATOR = "sg_generator"
    IMAGE_GENERATOR = "image_generator"
    JUDGE = "judge"
    DETECTOR = "detector"


# Roles whose requests may carry input images.
VISION_ROLES = frozenset({EndpointRole.JUDGE, EndpointRole.DETECTOR})


class IllegalRequestError(ValueError):
    """Request shape is not legal for the endpoint role."""


class TransientProviderError(RuntimeError):
    """Retryable transport-level failure (timeouts, rate limits, 5xx)."""


class ProviderRefusalError(RuntimeError):
    """Non-retryable provider refusal; preserved verbatim in provenance."""


@dataclass(frozen=True)
class ModelEndpoint:
    role: EndpointRole
    provider_id: str
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 2048
    seed: int | None = None

    def snapshot(self) -> dict:
        return {
            "role": self.role.value,
            "provider_id": self.provider_id,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ModelRequest:
    endpoint: ModelEndpoint
    prompt: str
    images: tuple[str, ...] = ()
    request_id: str = ""


@dataclass(frozen=True)
class ModelResponse:
    request_id: str
    text: str | None = None
    image: bytes | None = None
    latency: float = 0.0
    attempt_count: int = 1
    terminal_error: str | None = None

    def __post_init__(self):
        payloads = sum(x is not None for x in (self.text, self.image))
        if (payloads == 0) == (self.terminal_error is None):
            raise ValueError("exactly one of payload / terminal_error must be present")

    @property
    def ok(self) -> bool:
        return self.terminal_error is None


class Backend(Protocol):
    def complete(self, request: ModelRequest, image_bytes: tuple[bytes, ...]) -> str | bytes: ...


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))


def make_placeholder_png(label: str) -> bytes:
    """Tiny deterministic PNG whose pixel color and tEXt chunk encode the label."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    ihdr = _png_chunk(b"IHDR", struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0))
    pixel = zlib.compress(b"\x00" + digest[:3], 9)
    idat = _png_chunk(b"IDAT", pixel)
    text = _png_chunk(b"tEXt", b"Label\x00" + label.encode("ascii", "replace"))
    iend = _png_chunk(b"IEND", b"")
    return b"\x89PNG\r\n\x1a\n" + ihdr + text + idat + iend


_OBJECT_BANK = (
    "fume hood",
    "reagent bottle",
    "beaker",
    "centrifuge",
    "bunsen burner",
    "safety goggles",
    "acid cabinet",
    "cryogenic dewar",
    "waste bin",
    "lab bench",
    "nitrile gloves",
    "pipette rack",
)

_STATE_BANK = (
    "open",
    "closed",
    "in use",
    "tilted",
    "sealed",
    "unattended",
    "stored upright",
    "partially filled",
)

_HAZARD_BANK = (
    "N/A",
    "flammable",
    "corrosive",
    "spill risk",
    "breakable",
    "contamination risk",
)

_PREDICATE_BANK = ("near", "placed_on", "stored_in", "connected_to", "exposed_to")

_HAZARD_NAME_BANK = (
    "chemical spill",
    "torn gloves",
    "missing personal protective equipment",
    "open flame near solvents",
    "damaged equipment",
)

_SG_GUIDED_MARKER = "STAGE 1: SCENE GRAPH GENERATION"
_THA_MARKER = '"verified_hazards"'
_JSON_ARRAY_LINE = re.compile(r"^\[.*\]$", re.MULTILINE)


class MockBackend:
    """Deterministic offline backend.

    Responses are a pure function of (role, model id, prompt, image refs,
    seed). A ``script`` callable can override any request (return None to
    fall through to the default behavior); ``transient_failures`` maps
    request ids to the number of retryable failures to inject first.
    """

    def __init__(
        self,
        seed: int = 0,
        script: Callable[[ModelRequest], str | bytes | None] | None = None,
        transient_failures: Mapping[str, int] | None = None,
        aligned_rate: float = 0.7,
        hazard_rate: float = 0.45,
    ):
        self.seed = seed
        self.script = script
        self.aligned_rate = aligned_rate
        self.hazard_rate = hazard_rate
        self._failures_left = dict(transient_failures or {})
        self._lock = threading.Lock()

    def complete(self, request: ModelRequest, image_bytes: tuple[bytes, ...]) -> str | bytes:
        with self._lock:
            left = self._failures_left.get(request.request_id, 0)
            if left > 0:
                self._failures_left[request.request_id] = left - 1
                raise TransientProviderError(
                    f"injected transient failure for {request.request_id}"
                )
        if self.script is not None:
            scripted = self.script(request)
            if scripted is not None:
                return scripted
        return self._default_response(request)

    def _rng(self, request: ModelRequest) -> random.Random:
        material = "|".join(
            (
                request.endpoint.role.value,
                request.endpoint.model_id,
                str(self.seed),
                request.prompt,
                ",".join(request.images),
            )
        )
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _default_response(self, request: ModelRequest) -> str | bytes:
        role = request.endpoint.role
        rng = self._rng(request)
        if role is EndpointRole.IMAGE_GENERATOR:
            marker = f"{request.request_id}|{rng.getrandbits(48):012x}"
            return make_placeholder_png(marker)
        if role is EndpointRole.JUDGE:
            if rng.random() < self.aligned_rate:
                return "ALIGNED"
            return "NOT_ALIGNED: the rendered scene does not match the graph."
        if role is EndpointRole.SG_GENERATOR:
            graph = self._random_graph(rng)
            return (
                "Here is the scene graph:\n```json\n"
                + json.dumps(graph, indent=2)
                + "\n```"
            )
        if role is EndpointRole.GT_EXTRACTOR:
            return json.dumps(self._random_assessment(rng), indent=2)
        if role is EndpointRole.DETECTOR:
            if _THA_MARKER in request.prompt:
                return json.dumps({"verified_hazards": self._verified_subset(request, rng)})
            if _SG_GUIDED_MARKER in request.prompt:
                return json.dumps(
                    {
                        "scene_graph": self._random_graph(rng),
                        "hazard_assessment": self._random_assessment(rng),
                    },
                    indent=2,
                )
            return json.dumps(self._random_assessment(rng), indent=2)
        raise IllegalRequestError(f"mock backend has no behavior for role {role}")

    def _random_graph(self, rng: random.Random) -> dict:
        names = rng.sample(_OBJECT_BANK, rng.randint(3, 5))
        nodes = [
            {
                "object_name": name,
                "attributes": {
                    "State": rng.choice(_STATE_BANK),
                    "Hazard": rng.choice(_HAZARD_BANK),
                },
            }
            for name in names
        ]
        relationships = [
            {
                "subject": names[i],
                "predicate": rng.choice(_PREDICATE_BANK),
                "object": names[i + 1],
            }
            for i in range(len(names) - 1)
        ]
        return {"nodes": nodes, "relationships": relationships}

    def _random_assessment(self, rng: random.Random) -> dict:
        if rng.random() < self.hazard_rate:
            hazards = rng.sample(_HAZARD_NAME_BANK, rng.randint(1, 2))
            return {
                "classification": "hazardous",
                "hazards_count": len(hazards),
                "existing_hazards": hazards,
            }
        return {"classification": "non-hazardous", "hazards_count": 0, "existing_hazards": []}

    def _verified_subset(self, request: ModelRequest, rng: random.Random) -> list[str]:
        match = _JSON_ARRAY_LINE.search(request.prompt)
        taxonomy: list[str] = []
        if match:
            try:
                decoded = json.loads(match.group(0))
                taxonomy = [h for h in decoded if isinstance(h, str)]
            except json.JSONDecodeError:
                taxonomy = []
        return [h for h in taxonomy if rng.random() < 0.25]


class HttpBackend:
    """Minimal JSON-over-HTTP chat backend (OpenAI-style completion shape).

    The API key comes only from the environment variable named after the
    provider id; request logging redacts it.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        session=None,
    ):
        import requests

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, request: ModelRequest, image_bytes: tuple[bytes, ...]) -> str | bytes:
        import base64

        import requests

        content: list[dict] = [{"type": "text", "text": request.prompt}]
        for data in image_bytes:
            encoded = base64.b64encode(data).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}}
            )
        body = {
            "model": request.endpoint.model_id,
            "temperature": request.endpoint.temperature,
            "max_tokens": request.endpoint.max_output_tokens,
            "messages": [{"role": "user", "content": content}],
        }
        if request.endpoint.seed is not None:
            body["seed"] = request.endpoint.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        logger.debug(
            "POST %s/chat/completions request_id=%s headers=%s",
            self.base_url,
            request.request_id,
            {k: ("<redacted>" if k == "Authorization" else v) for k, v in headers.items()},
        )
        try:
            response = self._session.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"HTTP {response.status_code}: {response.text[:200]}")
        if response.status_code >= 400:
            raise ProviderRefusalError(f"HTTP {response.status_code}: {response.text[:200]}")
        payload = response.json()
        if request.endpoint.role is EndpointRole.IMAGE_GENERATOR:
            import base64 as b64

            return b64.b64decode(payload["data"][0]["b64_json"])
        return payload["choices"][0]["message"]["content"]


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    multiplier: float = 2.0
    max_delay: float = 8.0

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * self.multiplier ** (attempt - 1), self.max_delay)


@dataclass
class GatewayBudgets:
    global_inflight: int = 8
    per_endpoint_inflight: int = 4


class ProviderGateway:
    """Thread-safe front door to all backends with retries and budgets."""

    def __init__(
        self,
        backends: Mapping[str, Backend],
        budgets: GatewayBudgets | None = None,
        retry: RetryPolicy | None = None,
        image_loader: Callable[[str], bytes] | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._backends = dict(backends)
        self.budgets = budgets or GatewayBudgets()
        self.retry = retry or RetryPolicy()
        self._image_loader = image_loader
        self._clock = clock
        self._sleep = sleep
        self._global_slots = threading.BoundedSemaphore(self.budgets.global_inflight)
        self._endpoint_slots: dict[str, threading.BoundedSemaphore] = {}
        self._slots_lock = threading.Lock()

    def _endpoint_semaphore(self, endpoint: ModelEndpoint) -> threading.BoundedSemaphore:
        key = f"{endpoint.provider_id}:{endpoint.model_id}:{endpoint.role.value}"
        with self._slots_lock:
            if key not in self._endpoint_slots:
                self._endpoint_slots[key] = threading.BoundedSemaphore(
                    self.budgets.per_endpoint_inflight
                )
            return self._endpoint_slots[key]

    def _validate(self, request: ModelRequest) -> None:
        if request.images and request.endpoint.role not in VISION_ROLES:
            raise IllegalRequestError(
                f"images are not legal for role {request.endpoint.role.value}"
            )
        if request.endpoint.provider_id not in self._backends:
            raise IllegalRequestError(
                f"no backend configured for provider {request.endpoint.provider_id!r}"
            )

    def complete(self, request: ModelRequest) -> ModelResponse:
        """Run one request with bounded concurrency and at-most-N attempts."""
        self._validate(request)
        backend = self._backends[request.endpoint.provider_id]
        if request.images and self._image_loader is None:
            raise IllegalRequestError("gateway has no image loader configured")
        image_bytes = tuple(self._image_loader(ref) for ref in request.images)
        started = self._clock()
        attempts = 0
        with self._global_slots, self._endpoint_semaphore(request.endpoint):
            while True:
                attempts += 1
                try:
                    payload = backend.complete(request, image_bytes)
                except TransientProviderError as exc:
                    logger.warning("attempt %d failed for %s: %s", attempts, request.request_id, exc)
                    if attempts >= self.retry.max_attempts:
                        return ModelResponse(
                            request_id=request.request_id,
                            latency=self._clock() - started,
                            attempt_count=attempts,
                            terminal_error=f"transient failure after {attempts} attempts: {exc}",
                        )
                    self._sleep(self.retry.delay(attempts))
                    continue
                except ProviderRefusalError as exc:
                    return ModelResponse(
                        request_id=request.request_id,
                        latency=self._clock() - started,
                        attempt_count=attempts,
                        terminal_error=f"provider refusal: {exc}",
                    )
                latency = self._clock() - started
                if isinstance(payload, bytes):
                    return ModelResponse(
                        request_id=request.request_id,
                        image=payload,
                        latency=latency,
                        attempt_count=attempts,
                    )
                return ModelResponse(
                    request_id=request.request_id,
                    text=payload,
                    latency=latency,
                    attempt_count=attempts,
                )

    def generate_image(self, request: ModelRequest) -> ModelResponse:
        """Image-producing variant of complete; the payload is PNG bytes."""
        if request.endpoint.role is not EndpointRole.IMAGE_GENERATOR:
            raise IllegalRequestError("generate_image requires an image_generator endpoint")
        return self.complete(request)


def endpoint_from_config(role: str, entry: Mapping) -> ModelEndpoint:
    return ModelEndpoint(
        role=EndpointRole(role),
        provider_id=entry["provider_id"],
        model_id=entry["model_id"],
        temperature=float(entry.get("temperature", 0.0)),
        max_output_tokens=int(entry.get("max_output_tokens", 2048)),
        seed=entry.get("seed"),
    )


def backends_from_config(config: Mapping, seed: int | None = None) -> dict[str, Backend]:
    """Instantiate one backend per provider id referenced by the endpoint map.

    Provider id ``mock`` gets the deterministic offline backend; anything
    else gets an HTTP backend whose key is read from ``<PROVIDER_ID>_API_KEY``.
    """
    import os

    backends: dict[str, Backend] = {}
    for entry in config.get("endpoints", {}).values():
        provider_id = entry["provider_id"]
        if provider_id in backends:
            continue
        if provider_id == "mock":
            mock_seed = seed if seed is not None else int(config.get("seed", 0))
            backends[provider_id] = MockBackend(seed=mock_seed)
        else:
            providers = config.get("providers", {})
            base_url = providers.get(provider_id, {}).get("base_url")
            if not base_url:
                raise ValueError(f"provider {provider_id!r} needs a base_url in config")
            key_var = f"{provider_id.upper().replace('-', '_')}_API_KEY"
            backends[provider_id] = HttpBackend(base_url, api_key=os.environ.get(key_var))
    return backends

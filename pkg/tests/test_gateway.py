"""Gateway behavior: mock determinism, retries, budgets, legality, HTTP backend."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from labhazard.gateway import (
    EndpointRole,
    GatewayBudgets,
    HttpBackend,
    IllegalRequestError,
    MockBackend,
    ModelEndpoint,
    ModelRequest,
    ModelResponse,
    ProviderGateway,
    RetryPolicy,
    make_placeholder_png,
)


def _endpoint(role=EndpointRole.GT_EXTRACTOR, model_id="m1") -> ModelEndpoint:
    return ModelEndpoint(role=role, provider_id="mock", model_id=model_id)


def _gateway(backend, **kwargs) -> ProviderGateway:
    kwargs.setdefault("retry", RetryPolicy(max_attempts=3, base_delay=0.0))
    kwargs.setdefault("sleep", lambda _: None)
    kwargs.setdefault("clock", lambda: 0.0)
    return ProviderGateway({"mock": backend}, **kwargs)


def test_mock_is_deterministic_across_instances():
    request = ModelRequest(endpoint=_endpoint(), prompt="any prompt", request_id="r1")
    first = MockBackend(seed=7).complete(request, ())
    second = MockBackend(seed=7).complete(request, ())
    assert first == second
    image_request = ModelRequest(
        endpoint=_endpoint(EndpointRole.IMAGE_GENERATOR), prompt="p", request_id="img"
    )
    assert MockBackend(seed=7).complete(image_request, ()) == MockBackend(seed=7).complete(
        image_request, ()
    )


def test_mock_is_deterministic_across_processes():
    import subprocess
    import sys

    snippet = (
        "import hashlib;"
        "from labhazard.gateway import EndpointRole, MockBackend, ModelEndpoint, ModelRequest;"
        "e = ModelEndpoint(role=EndpointRole.SG_GENERATOR, provider_id='mock', model_id='m');"
        "r = ModelRequest(endpoint=e, prompt='cross-process probe', request_id='x');"
        "out = MockBackend(seed=7).complete(r, ());"
        "print(hashlib.sha256(out.encode()).hexdigest())"
    )
    runs = {
        subprocess.run(
            [sys.executable, "-c", snippet], capture_output=True, text=True, check=True
        ).stdout.strip()
        for _ in range(2)
    }
    assert len(runs) == 1


def test_mock_seed_changes_output():
    request = ModelRequest(endpoint=_endpoint(), prompt="seed sensitivity", request_id="r1")
    outputs = {MockBackend(seed=s).complete(request, ()) for s in range(6)}
    assert len(outputs) > 1


def test_fail_twice_then_succeed_counts_three_attempts():
    backend = MockBackend(seed=7, transient_failures={"r1": 2})
    gateway = _gateway(backend)
    response = gateway.complete(
        ModelRequest(endpoint=_endpoint(), prompt="p", request_id="r1")
    )
    assert response.ok and response.attempt_count == 3


def test_exhausted_retries_become_terminal_error():
    backend = MockBackend(seed=7, transient_failures={"r1": 99})
    gateway = _gateway(backend)
    response = gateway.complete(
        ModelRequest(endpoint=_endpoint(), prompt="p", request_id="r1")
    )
    assert not response.ok
    assert response.attempt_count == 3
    assert "transient" in response.terminal_error


def test_backoff_schedule_is_exponential_and_capped():
    delays = []
    backend = MockBackend(seed=7, transient_failures={"r1": 4})
    gateway = ProviderGateway(
        {"mock": backend},
        retry=RetryPolicy(max_attempts=5, base_delay=0.5, multiplier=2.0, max_delay=2.0),
        sleep=delays.append,
        clock=lambda: 0.0,
    )
    gateway.complete(ModelRequest(endpoint=_endpoint(), prompt="p", request_id="r1"))
    assert delays == [0.5, 1.0, 2.0, 2.0]


def test_images_to_text_only_role_is_a_precondition_error():
    gateway = _gateway(MockBackend(seed=7), image_loader=lambda ref: b"")
    with pytest.raises(IllegalRequestError):
        gateway.complete(
            ModelRequest(
                endpoint=_endpoint(EndpointRole.SG_GENERATOR),
                prompt="p",
                images=("images/x.png",),
                request_id="r1",
            )
        )


def test_response_invariant_exactly_one_payload_or_error():
    with pytest.raises(ValueError):
        ModelResponse(request_id="x", text="hi", terminal_error="boom")
    with pytest.raises(ValueError):
        ModelResponse(request_id="x")


def test_per_endpoint_budget_bounds_concurrency():
    active = 0
    peak = 0
    lock = threading.Lock()

    class SlowBackend:
        def complete(self, request, image_bytes):
            nonlocal active, peak
            with lock:
                active += 1
                peak = max(peak, active)
            time.sleep(0.02)
            with lock:
                active -= 1
            return "ok"

    gateway = ProviderGateway(
        {"mock": SlowBackend()},
        budgets=GatewayBudgets(global_inflight=8, per_endpoint_inflight=2),
        clock=lambda: 0.0,
        sleep=lambda _: None,
    )
    endpoint = _endpoint()
    threads = [
        threading.Thread(
            target=lambda i=i: gateway.complete(
                ModelRequest(endpoint=endpoint, prompt=f"p{i}", request_id=f"r{i}")
            )
        )
        for i in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak <= 2


def test_placeholder_png_shape_and_label():
    data = make_placeholder_png("scn-1/0|abc")
    assert data.startswith(b"\x89PNG\r\n\x1a\n")
    assert b"scn-1/0|abc" in data
    assert data == make_placeholder_png("scn-1/0|abc")
    assert data != make_placeholder_png("scn-1/1|abc")


def test_mock_judge_and_graph_outputs_parse():
    from labhazard.annotations import parse_hazard_assessment
    from labhazard.scene_graph import parse_scene_graph

    backend = MockBackend(seed=7)
    graph_text = backend.complete(
        ModelRequest(endpoint=_endpoint(EndpointRole.SG_GENERATOR), prompt="p", request_id="r"),
        (),
    )
    graph = parse_scene_graph(graph_text)
    assert graph.nodes and graph.relationships
    gt_text = backend.complete(
        ModelRequest(endpoint=_endpoint(EndpointRole.GT_EXTRACTOR), prompt="p", request_id="r"),
        (),
    )
    assert parse_hazard_assessment(gt_text).consistency_flag
    verdict = backend.complete(
        ModelRequest(endpoint=_endpoint(EndpointRole.JUDGE), prompt="p", request_id="r"), ()
    )
    assert "ALIGNED" in verdict


class _StubApiHandler(BaseHTTPRequestHandler):
    behaviors: list[int] = []  # status codes to serve, then 200s
    seen: list[dict] = []

    def log_message(self, fmt, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = json.loads(self.rfile.read(length))
        type(self).seen.append(
            {"body": body, "auth": self.headers.get("Authorization")}
        )
        status = type(self).behaviors.pop(0) if type(self).behaviors else 200
        if status != 200:
            self.send_response(status)
            self.end_headers()
            self.wfile.write(b"upstream unhappy")
            return
        payload = json.dumps(
            {"choices": [{"message": {"content": "stubbed completion"}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture()
def stub_api():
    handler = type("Handler", (_StubApiHandler,), {"behaviors": [], "seen": []})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", handler
    server.shutdown()


def test_http_backend_happy_path_and_retry(stub_api):
    base_url, handler = stub_api
    handler.behaviors.extend([500])  # first call fails, retry succeeds
    backend = HttpBackend(base_url, api_key="sk-test")
    gateway = ProviderGateway(
        {"api": backend},
        retry=RetryPolicy(max_attempts=3, base_delay=0.0),
        sleep=lambda _: None,
        clock=lambda: 0.0,
    )
    endpoint = ModelEndpoint(
        role=EndpointRole.GT_EXTRACTOR, provider_id="api", model_id="stub-model"
    )
    response = gateway.complete(
        ModelRequest(endpoint=endpoint, prompt="hello", request_id="r1")
    )
    assert response.ok and response.text == "stubbed completion"
    assert response.attempt_count == 2
    assert handler.seen[0]["auth"] == "Bearer sk-test"
    assert handler.seen[0]["body"]["model"] == "stub-model"
    assert handler.seen[0]["body"]["temperature"] == 0.0


def test_http_backend_refusal_is_terminal(stub_api):
    base_url, handler = stub_api
    handler.behaviors.extend([403])
    gateway = ProviderGateway(
        {"api": HttpBackend(base_url)},
        retry=RetryPolicy(max_attempts=3, base_delay=0.0),
        sleep=lambda _: None,
        clock=lambda: 0.0,
    )
    endpoint = ModelEndpoint(
        role=EndpointRole.GT_EXTRACTOR, provider_id="api", model_id="stub-model"
    )
    response = gateway.complete(
        ModelRequest(endpoint=endpoint, prompt="hello", request_id="r1")
    )
    assert not response.ok and response.attempt_count == 1
    assert "refusal" in response.terminal_error

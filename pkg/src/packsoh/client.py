"""HTTP client for the diagnostics service.

Without a server URL the client runs the ASGI app in-process (same wire
format, no socket), so the command-line tool works standalone; with a URL
it talks to a remote deployment over plain HTTP.
"""

from __future__ import annotations

import asyncio
import json

import httpx

from .errors import PackSohError


class ServiceError(PackSohError):
    """Non-2xx response from the service; carries the detail message."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(f"service returned {status_code}: {detail}")
        self.status_code = status_code
        self.detail = detail


class _InProcessTransport(httpx.BaseTransport):
    """Synchronous httpx transport that drives the ASGI app directly."""

    def __init__(self, app):
        self._app = app

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def roundtrip() -> httpx.Response:
            transport = httpx.ASGITransport(app=self._app)
            req = httpx.Request(request.method, request.url,
                                headers=request.headers, content=request.read())
            response = await transport.handle_async_request(req)
            content = await response.aread()
            await response.aclose()
            return httpx.Response(response.status_code, headers=response.headers,
                                  content=content)
        return asyncio.run(roundtrip())


class ServiceClient:
    """Thin wrapper around the service endpoints."""

    def __init__(self, server_url: str | None = None, timeout: float = 300.0):
        if server_url:
            self._client = httpx.Client(base_url=server_url, timeout=timeout)
        else:
            from .service import create_app
            self._client = httpx.Client(
                transport=_InProcessTransport(create_app()),
                base_url="http://packsoh.local", timeout=timeout,
            )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _unwrap(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except (ValueError, AttributeError):
                detail = response.text
            raise ServiceError(response.status_code, str(detail))
        return response.json()

    def health(self) -> dict:
        return self._unwrap(self._client.get("/health"))

    def vehicles(self) -> list[dict]:
        return self._unwrap(self._client.get("/vehicles"))

    def simulate(self, **request) -> dict:
        return self._unwrap(self._client.post("/simulate", json=request))

    def validate(self, trace: bytes, filename: str, options: dict) -> dict:
        return self._unwrap(self._client.post(
            "/validate",
            files={"trace": (filename, trace, "text/plain")},
            data={"options": json.dumps(options)},
        ))

    def measure(self, trace: bytes, filename: str, options: dict) -> dict:
        return self._unwrap(self._client.post(
            "/measure",
            files={"trace": (filename, trace, "text/plain")},
            data={"options": json.dumps(options)},
        ))

    def diagnose(self, aged: bytes, aged_name: str, reference: bytes,
                 reference_name: str, options: dict) -> dict:
        return self._unwrap(self._client.post(
            "/diagnose",
            files={"aged": (aged_name, aged, "text/plain"),
                   "reference": (reference_name, reference, "text/plain")},
            data={"options": json.dumps(options)},
        ))

    def fleet(self, traces: list[tuple[str, bytes]], options: dict) -> dict:
        files = [("traces", (name, payload, "text/plain")) for name, payload in traces]
        return self._unwrap(self._client.post(
            "/fleet", files=files, data={"options": json.dumps(options)},
        ))

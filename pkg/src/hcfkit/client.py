"""HTTP client for the pipeline service.

The CLI always talks to the service API: either a remote base URL or, by
default, the app mounted in-process through an ASGI transport, so both
paths exercise identical request/response models.
"""

from __future__ import annotations

import asyncio

import httpx


class ServiceError(Exception):
    def __init__(self, status_code: int, error: str, message: str):
        super().__init__(message)
        self.status_code = status_code
        self.error = error
        self.message = message


class _SyncASGITransport(httpx.BaseTransport):
    """Drive an ASGI app from a synchronous httpx.Client.

    httpx's ASGITransport is async-only; each request here runs through it
    on a private event loop and the body is materialized before returning.
    """

    def __init__(self, app):
        self._async = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def _run():
            response = await self._async.handle_async_request(request)
            body = await response.aread()
            await response.aclose()
            return response, body

        response, body = asyncio.run(_run())
        return httpx.Response(response.status_code, headers=response.headers,
                              content=body, request=request)


class HcfClient:
    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server.rstrip("/"), timeout=None)
        else:
            from .service import create_app
            self._client = httpx.Client(
                transport=_SyncASGITransport(create_app()),
                base_url="http://hcfkit.local", timeout=None)

    def close(self) -> None:
        self._client.close()

    def post(self, command: str, payload: dict) -> dict:
        resp = self._client.post(f"/v1/{command}", json=payload)
        if resp.status_code >= 400:
            detail = {}
            try:
                detail = resp.json().get("detail", {})
            except ValueError:
                pass
            if isinstance(detail, dict) and "message" in detail:
                raise ServiceError(resp.status_code,
                                   detail.get("error", "error"), detail["message"])
            raise ServiceError(resp.status_code, "http_error", resp.text[:500])
        return resp.json()

    def health(self) -> dict:
        resp = self._client.get("/v1/health")
        resp.raise_for_status()
        return resp.json()

"""Thin client for the run/compare service.

With a server URL it speaks HTTP via httpx; without one it invokes the
service handlers in-process through the same request/response models, so the
CLI works standalone while exercising exactly the service surface.
"""
from __future__ import annotations

import httpx
from fastapi import HTTPException


class ServiceError(RuntimeError):
    def __init__(self, status_code: int, detail: str):
        super().__init__(f"service returned {status_code}: {detail}")
        self.status_code = status_code
        self.detail = detail


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 600.0):
        self._client = (
            httpx.Client(base_url=base_url, timeout=timeout) if base_url else None
        )

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ServiceError(resp.status_code, str(detail))
        return resp.json()

    def health(self) -> dict:
        if self._client is None:
            from .service import health

            return health().model_dump(mode="json")
        resp = self._client.get("/health")
        resp.raise_for_status()
        return resp.json()

    def run(self, config: dict, overrides: dict[str, str] | None = None) -> dict:
        payload = {"config": config, "overrides": overrides or {}}
        if self._client is not None:
            return self._post("/runs", payload)
        from .service import RunRequest, submit_run

        try:
            return submit_run(RunRequest(**payload)).model_dump(mode="json")
        except HTTPException as exc:
            raise ServiceError(exc.status_code, str(exc.detail)) from None

    def compare(self, runs: list[dict], eps: float = 1e-3) -> dict:
        payload = {"runs": runs, "eps": eps}
        if self._client is not None:
            return self._post("/compare", payload)
        from .service import CompareRequest, submit_compare

        try:
            return submit_compare(CompareRequest(**payload)).model_dump(mode="json")
        except HTTPException as exc:
            raise ServiceError(exc.status_code, str(exc.detail)) from None

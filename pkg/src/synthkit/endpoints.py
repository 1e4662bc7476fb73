"""Shared HTTP plumbing for the completion and embedding endpoints.

Every POST is retried with exponential backoff. Connection-level failures
and persistent rate limiting raise; other HTTP failures raise
EndpointRequestError so callers can decide between aborting and degrading.
"""

from __future__ import annotations

import os
import time

import httpx

from .errors import EndpointRequestError, EndpointUnreachableError, RateLimitedError

API_KEY_ENV = "SYNTHKIT_API_KEY"

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_TIMEOUT = 60.0

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


def auth_headers(api_key: str | None = None) -> dict[str, str]:
    key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
    return {"Authorization": f"Bearer {key}"} if key else {}


def post_json_with_retries(
    client: httpx.Client,
    url: str,
    payload: dict,
    *,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    backoff_base: float = DEFAULT_BACKOFF_BASE,
    api_key: str | None = None,
) -> dict:
    """POST JSON and return the decoded JSON response body."""
    headers = auth_headers(api_key)
    last_status: int | None = None
    last_error: Exception | None = None
    for attempt in range(max_attempts):
        if attempt:
            time.sleep(backoff_base * 2 ** (attempt - 1))
        try:
            response = client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            last_error, last_status = exc, None
            continue
        last_status = response.status_code
        if response.status_code in _RETRYABLE_STATUS:
            continue
        if response.status_code >= 400:
            raise EndpointRequestError(f"{url} returned HTTP {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise EndpointRequestError(f"{url} returned non-JSON body: {exc}") from exc

    if last_status == 429:
        raise RateLimitedError(f"{url} kept rate-limiting after {max_attempts} attempts")
    if last_status is not None:
        raise EndpointRequestError(
            f"{url} failed with HTTP {last_status} after {max_attempts} attempts"
        )
    raise EndpointUnreachableError(
        f"could not reach {url} after {max_attempts} attempts: {last_error}"
    )

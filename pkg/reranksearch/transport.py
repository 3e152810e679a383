"""
HTTP transport shared by the remote embedding and chat-completion clients.

Requests are JSON POSTs with Bearer authentication. Rate limiting (HTTP 429)
and transport failures are retried with exponential backoff; at most
`MAX_IN_FLIGHT` requests run at once per transport.
"""
import logging
import threading

import requests
from tenacity import (
    Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential)

from reranksearch.errors import (
    AuthFailed, BadResponse, RateLimited, TransportError)

logger = logging.getLogger(__name__)

MAX_IN_FLIGHT = 4
RETRY_ATTEMPTS = 3


class RemoteTransport:
    """
    JSON-over-HTTP client for an OpenAI-compatible endpoint.

    Args:
        base_url (str): Endpoint root, e.g. "https://api.openai.com".
        api_key (str): Bearer token.
        timeout (float): Per-request timeout in seconds.
        attempts (int): Total attempts for retryable failures.
        wait: tenacity wait strategy between attempts.
        session (requests.Session): Optional session to reuse.

    Attributes:
        retry_count (int): Number of retries performed so far.
    """

    def __init__(self, base_url, api_key, timeout, attempts=RETRY_ATTEMPTS,
                 wait=None, session=None, max_in_flight=MAX_IN_FLIGHT):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retry_count = 0
        self._session = session or requests.Session()
        self._session.headers.update({
            "Authorization": f"Bearer {api_key}",
            "Content-Type": "application/json",
        })
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._retrying = Retrying(
            retry=retry_if_exception_type((RateLimited, TransportError)),
            stop=stop_after_attempt(attempts),
            wait=wait if wait is not None else wait_exponential(
                multiplier=0.5, min=0.5, max=8),
            before_sleep=self._on_retry,
            reraise=True,
        )

    def post_json(self, path, body):
        """
        POSTs `body` as JSON to `base_url + path` and returns the decoded reply.

        Raises:
            AuthFailed: HTTP 401 or 403.
            RateLimited: HTTP 429 on every attempt.
            TransportError: Network failure, timeout or HTTP 5xx on every attempt.
            BadResponse: Other HTTP errors or a body that is not JSON.
        """
        return self._retrying.copy()(self._post_once, path, body)

    def _on_retry(self, retry_state):
        with self._lock:
            self.retry_count += 1
        logger.warning("Retrying %s (attempt %d): %s", self.base_url,
                       retry_state.attempt_number,
                       retry_state.outcome.exception())

    def _post_once(self, path, body):
        url = f"{self.base_url}{path}"
        with self._semaphore:
            try:
                response = self._session.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as e:
                raise TransportError(f"POST {url} failed: {e}") from e

        status = response.status_code
        logger.debug("POST %s -> %d", url, status)
        if status in (401, 403):
            raise AuthFailed(f"POST {url} rejected credentials (HTTP {status})")
        if status == 429:
            raise RateLimited(f"POST {url} rate limited (HTTP 429)")
        if status >= 500:
            raise TransportError(f"POST {url} failed with HTTP {status}")
        if status >= 400:
            raise BadResponse(f"POST {url} failed with HTTP {status}: "
                              f"{response.text[:200]}")
        try:
            return response.json()
        except ValueError as e:
            raise BadResponse(f"POST {url} returned a non-JSON body") from e

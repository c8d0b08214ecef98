"""
Chat webhook notifier for classify / verify run summaries.
Reads the webhook URL from .env via COTANGENT_LAB_WEBHOOK_URL.
"""
import logging
from typing import Dict, Optional, Tuple

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from config import WEBHOOK_URL

logger = logging.getLogger(__name__)


def _build_retry_session(
    total_retries: int = 3,
    backoff_factor: float = 0.5,
    status_forcelist: Tuple[int, ...] = (429, 500, 502, 503, 504),
) -> requests.Session:
    session = requests.Session()
    retry = Retry(
        total=total_retries,
        connect=total_retries,
        read=total_retries,
        status=total_retries,
        backoff_factor=backoff_factor,
        status_forcelist=status_forcelist,
        allowed_methods=frozenset(["POST"]),
        raise_on_status=False,
        respect_retry_after_header=True,
    )
    adapter = HTTPAdapter(max_retries=retry)
    session.mount("https://", adapter)
    session.mount("http://", adapter)
    return session


def send_chat_message(text: str, webhook_url: Optional[str] = None, timeout: int = 30) -> None:
    """
    Send a plain text message to the chat webhook.
    """
    url = webhook_url or WEBHOOK_URL
    if not url:
        raise ValueError("COTANGENT_LAB_WEBHOOK_URL is not set")

    session = _build_retry_session()
    response = session.post(url, json={"text": text}, headers={"Content-Type": "application/json"},
                            timeout=timeout)
    response.raise_for_status()
    logger.info("Chat message sent (status: %s)", response.status_code)


def notify(text: str, webhook_url: Optional[str] = None) -> bool:
    """Best-effort send; failures are logged and reported as False."""
    try:
        send_chat_message(text, webhook_url)
        return True
    except (ValueError, requests.exceptions.RequestException) as e:
        logger.warning(f"Notification failed: {e}")
        return False


def format_run_summary(
    command: str,
    scenario: str,
    passed: bool,
    item: Optional[str] = None,
    residuals: Optional[Dict[str, float]] = None,
    report_path: Optional[str] = None,
    error_message: Optional[str] = None,
) -> str:
    """
    Build a short summary message for a classify or verify run.
    """
    lines = [
        f"cotangent-lab {command}",
        f"Scenario: {scenario}",
    ]
    if item:
        lines.append(f"Item: {item}")
    lines.append(f"Result: {'PASS' if passed else 'FAIL'}")
    for name, value in sorted((residuals or {}).items()):
        lines.append(f"{name}: {value:.3e}")
    if report_path:
        lines.append(f"Report: {report_path}")
    if error_message:
        lines.append(f"Error: {error_message}")
    return "\n".join(lines)

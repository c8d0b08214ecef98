"""
Configuration parsing, the ordered batch map and chat notifications.
"""
import pytest
import requests

import chat_notifier
from batch_processor import process_items
from config import ConfigError, _float_env, _int_env


def test_int_env(monkeypatch):
    monkeypatch.setenv("COTANGENT_LAB_TEST_INT", "12")
    assert _int_env("COTANGENT_LAB_TEST_INT", 1, minimum=0) == 12
    monkeypatch.setenv("COTANGENT_LAB_TEST_INT", " ")
    assert _int_env("COTANGENT_LAB_TEST_INT", 5, minimum=0) == 5
    monkeypatch.setenv("COTANGENT_LAB_TEST_INT", "many")
    with pytest.raises(ConfigError, match="integer"):
        _int_env("COTANGENT_LAB_TEST_INT", 1, minimum=0)
    monkeypatch.setenv("COTANGENT_LAB_TEST_INT", "-2")
    with pytest.raises(ConfigError, match=">= 0"):
        _int_env("COTANGENT_LAB_TEST_INT", 1, minimum=0)


def test_float_env(monkeypatch):
    monkeypatch.delenv("COTANGENT_LAB_TEST_FLOAT", raising=False)
    assert _float_env("COTANGENT_LAB_TEST_FLOAT", 1e-9) == 1e-9
    monkeypatch.setenv("COTANGENT_LAB_TEST_FLOAT", "1e-6")
    assert _float_env("COTANGENT_LAB_TEST_FLOAT", 1e-9) == 1e-6
    for raw in ("0", "-1e-3", "tiny"):
        monkeypatch.setenv("COTANGENT_LAB_TEST_FLOAT", raw)
        with pytest.raises(ConfigError):
            _float_env("COTANGENT_LAB_TEST_FLOAT", 1e-9)


@pytest.mark.parametrize("workers", [1, 4])
def test_process_items_keeps_input_order(workers):
    def work(x):
        if x == 3:
            raise ArithmeticError("three")
        return x * x

    records = process_items(work, list(range(8)), label="n", workers=workers)
    assert [r["index"] for r in records] == list(range(8))
    assert [r.get("result") for r in records] == [0, 1, 4, None, 16, 25, 36, 49]
    assert records[3]["status"] == "error"
    assert records[3]["error"] == "three"
    assert records[3]["error_type"] == "ArithmeticError"


@pytest.mark.parametrize("workers", [1, 4])
def test_process_items_propagates_unrecoverable_errors(workers):
    def work(x):
        if x == 2:
            raise KeyError(x)
        return x

    with pytest.raises(KeyError):
        process_items(work, list(range(5)), workers=workers, recoverable=(ArithmeticError,))


def test_process_items_empty():
    assert process_items(lambda x: x, []) == []


class _FakeResponse:
    def __init__(self, status_code):
        self.status_code = status_code

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.exceptions.HTTPError(f"{self.status_code} error")


class _FakeSession:
    def __init__(self, status_code=200):
        self.status_code = status_code
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append((url, json, timeout))
        return _FakeResponse(self.status_code)


def test_send_chat_message_posts_text(monkeypatch):
    session = _FakeSession()
    monkeypatch.setattr(chat_notifier, "_build_retry_session", lambda: session)
    chat_notifier.send_chat_message("hello", webhook_url="https://chat.example.com/hook")
    assert session.posts == [("https://chat.example.com/hook", {"text": "hello"}, 30)]


def test_send_chat_message_needs_a_url(monkeypatch):
    monkeypatch.setattr(chat_notifier, "WEBHOOK_URL", None)
    with pytest.raises(ValueError):
        chat_notifier.send_chat_message("hello")


def test_notify_reports_failures_as_false(monkeypatch):
    monkeypatch.setattr(chat_notifier, "WEBHOOK_URL", "https://chat.example.com/hook")
    monkeypatch.setattr(chat_notifier, "_build_retry_session", lambda: _FakeSession(503))
    assert chat_notifier.notify("hello") is False
    monkeypatch.setattr(chat_notifier, "_build_retry_session", lambda: _FakeSession(200))
    assert chat_notifier.notify("hello") is True
    monkeypatch.setattr(chat_notifier, "WEBHOOK_URL", None)
    assert chat_notifier.notify("hello") is False


def test_retry_session_mounts_both_schemes():
    session = chat_notifier._build_retry_session(total_retries=2)
    adapter = session.get_adapter("https://chat.example.com")
    assert adapter.max_retries.total == 2
    assert 503 in adapter.max_retries.status_forcelist


def test_run_summary():
    text = chat_notifier.format_run_summary(
        "verify", "linear_so3", False, item="3",
        residuals={"sup_defect": 2.5e-7}, report_path="reports/so3.json", error_message="boom",
    )
    assert text.splitlines() == [
        "cotangent-lab verify",
        "Scenario: linear_so3",
        "Item: 3",
        "Result: FAIL",
        "sup_defect: 2.500e-07",
        "Report: reports/so3.json",
        "Error: boom",
    ]

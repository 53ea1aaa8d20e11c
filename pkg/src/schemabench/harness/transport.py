"""Agent transports: the request every agent sees, and the remote HTTP client."""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from typing import Protocol

AGENT_URL_ENV = "TOOLHARNESS_AGENT_URL"


class AgentTimeout(Exception):
    pass


class TransportError(Exception):
    pass


@dataclass(frozen=True)
class AgentRequest:
    """Everything an agent may see at one step. Never ground truth or oracle."""

    run_id: str
    step: int
    budget: int
    condition: str
    system_prompt: str
    toolset_text: str
    task_statement: str
    history: tuple[dict, ...]  # {"role": "agent" | "environment", "text": ...}

    def to_json(self) -> dict:
        d = asdict(self)
        d["history"] = [dict(h) for h in self.history]
        return d


class AgentTransport(Protocol):
    kind: str

    def respond(self, request: AgentRequest) -> str: ...


class RemoteTransport:
    """POSTs the request JSON; the response body is the raw agent text."""

    kind = "remote"

    def __init__(self, url: str, timeout_s: float = 60.0):
        self.url = url
        self.timeout_s = timeout_s

    def respond(self, request: AgentRequest) -> str:
        body = json.dumps(request.to_json()).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.read().decode("utf-8", errors="replace")
        except TimeoutError:
            raise AgentTimeout(self.url) from None
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise AgentTimeout(self.url) from None
            raise TransportError(str(exc.reason)) from None
        except OSError as exc:
            raise TransportError(str(exc)) from None


def call_with_timeout(transport: AgentTransport, request: AgentRequest, timeout_ms: int) -> str:
    """Run one agent turn; raise :class:`AgentTimeout` past ``timeout_ms``.

    The turn runs on a daemon thread so a hung agent cannot block the matrix.
    """
    box: dict = {}

    def target() -> None:
        try:
            box["text"] = transport.respond(request)
        except BaseException as exc:  # re-raised on the caller's thread
            box["error"] = exc

    worker = threading.Thread(target=target, daemon=True)
    worker.start()
    worker.join(timeout_ms / 1000)
    if worker.is_alive():
        raise AgentTimeout(request.run_id)
    if "error" in box:
        err = box["error"]
        if isinstance(err, (AgentTimeout, TransportError)):
            raise err
        raise TransportError(f"{type(err).__name__}: {err}")
    text = box["text"]
    if not isinstance(text, str):
        raise TransportError("agent returned non-text output")
    return text

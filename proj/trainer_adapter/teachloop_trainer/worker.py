"""Memorizing student behind the NDJSON train/evaluate protocol.

Requests and replies are single JSON objects:

    {"op": "train", "checkpoint": null | id, "datums": [{"instruction", "response", ...}], ...}
        -> {"ok": true, "checkpoint": id}
    {"op": "evaluate", "checkpoint": null | id, "items": [{"item_id", "instruction", ...}]}
        -> {"ok": true, "predictions": [{"item_id", "predicted_answer"}]}
    {"op": "shutdown"} -> {"ok": true}

Failures reply {"ok": false, "error": code, "message": text} and the worker
keeps serving.
"""

import json
import os
import tempfile
from http.server import BaseHTTPRequestHandler, HTTPServer
from typing import Dict, Optional


def _fail(code: str, message: str) -> dict:
    return {"ok": False, "error": code, "message": message}


class MemorizingWorker:
    """Stores instruction -> response pairs; unseen instructions get ""."""

    def __init__(self, state_dir: Optional[str] = None):
        self.state_dir = state_dir or tempfile.mkdtemp(prefix="teachloop-trainer-")
        os.makedirs(self.state_dir, exist_ok=True)
        self.stopped = False
        self._next_id = len(os.listdir(self.state_dir))

    def _path(self, checkpoint_id: str) -> str:
        return os.path.join(self.state_dir, checkpoint_id + ".json")

    def _load(self, checkpoint) -> Optional[Dict[str, str]]:
        if checkpoint is None:
            return {}
        if not isinstance(checkpoint, str) or "/" in checkpoint or not os.path.exists(self._path(checkpoint)):
            return None
        with open(self._path(checkpoint), encoding="utf-8") as f:
            return json.load(f)

    def _save(self, memory: Dict[str, str]) -> str:
        self._next_id += 1
        checkpoint_id = "ckpt-%d" % self._next_id
        tmp = self._path(checkpoint_id) + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(memory, f, sort_keys=True)
        os.replace(tmp, self._path(checkpoint_id))
        return checkpoint_id

    def handle(self, line: str) -> dict:
        try:
            request = json.loads(line)
        except ValueError as e:
            return _fail("bad-request", "invalid JSON: %s" % e)
        if not isinstance(request, dict) or not isinstance(request.get("op"), str):
            return _fail("bad-request", "missing op")
        op = request["op"]
        if op == "shutdown":
            self.stopped = True
            return {"ok": True}
        if op == "train":
            return self._train(request)
        if op == "evaluate":
            return self._evaluate(request)
        return _fail("bad-request", "unknown op '%s'" % op)

    def _train(self, request: dict) -> dict:
        datums = request.get("datums")
        if "checkpoint" not in request or not isinstance(datums, list):
            return _fail("bad-request", "train needs checkpoint and datums")
        memory = self._load(request["checkpoint"])
        if memory is None:
            return _fail("unknown-checkpoint", "no such checkpoint")
        memory = dict(memory)
        for datum in datums:
            if not isinstance(datum, dict) or not isinstance(datum.get("instruction"), str) \
                    or not isinstance(datum.get("response"), str):
                return _fail("bad-request", "datums need instruction and response strings")
            memory[datum["instruction"]] = datum["response"]
        return {"ok": True, "checkpoint": self._save(memory)}

    def _evaluate(self, request: dict) -> dict:
        items = request.get("items")
        if not isinstance(items, list):
            return _fail("bad-request", "evaluate needs items")
        memory = self._load(request.get("checkpoint"))
        if memory is None:
            return _fail("unknown-checkpoint", "no such checkpoint")
        predictions = []
        for item in items:
            if not isinstance(item, dict) or "item_id" not in item:
                return _fail("bad-request", "items need item_id")
            answer = memory.get(item.get("instruction", ""), "")
            predictions.append({"item_id": item["item_id"], "predicted_answer": answer})
        return {"ok": True, "predictions": predictions}


def serve_stdio(worker: MemorizingWorker, stdin, stdout) -> None:
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(worker.handle(line)) + "\n")
        stdout.flush()
        if worker.stopped:
            break


def serve_http(worker: MemorizingWorker, port: int, host: str = "127.0.0.1") -> None:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8", errors="replace")
            reply = json.dumps(worker.handle(body)).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(reply)))
            self.end_headers()
            self.wfile.write(reply)

        def log_message(self, *args):
            pass

    server = HTTPServer((host, port), Handler)
    try:
        while not worker.stopped:
            server.handle_request()
    finally:
        server.server_close()

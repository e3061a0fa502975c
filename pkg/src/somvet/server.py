"""HTTP API over a trained model for the browser-based map inspector.

Read endpoints are backed by caches built at startup over an immutable
model, so concurrent queries are safe; selection writes go through a lock
with last-write-wins semantics and an etag echo for conflict detection.
"""

from __future__ import annotations

import base64
import json
import re
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .model import DesomModel, assign_cells, decode_prototypes
from .pngio import encode_gray_png
from .stamps import as_pixel_array


class ServerState:
    def __init__(self, model: DesomModel, stamps, selection_file="selection.json",
                 ui_dir=None, scorer_seed: int = 0):
        self.model = model
        self.stamps = list(stamps)
        self.selection_file = Path(selection_file)
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.scorer_seed = scorer_seed
        self.lock = threading.Lock()

        self.prototypes = decode_prototypes(model)
        if self.stamps:
            self.pixels = as_pixel_array(self.stamps)
            self.cells = assign_cells(model, self.pixels)
        else:
            self.pixels = np.empty((0, 32, 32), np.float32)
            self.cells = np.empty(0, np.int64)
        labels = np.array([s.label for s in self.stamps]) if self.stamps else np.array([])
        self.real_mask = labels == "real"
        self.bogus_mask = labels == "bogus"
        self._scorer = None

        if self.selection_file.exists():
            self.selection = ev.PvSelection.from_json(
                json.loads(self.selection_file.read_text())
            )
        else:
            self.selection = ev.PvSelection.none(model.m)

    @property
    def labeled(self) -> bool:
        return bool(self.real_mask.any() and self.bogus_mask.any())

    def scorer(self) -> ev.ReferenceScorer:
        with self.lock:
            if self._scorer is None:
                labeled = self.real_mask | self.bogus_mask
                self._scorer = ev.train_reference_scorer(
                    self.model,
                    self.pixels[labeled],
                    labels=np.where(self.real_mask[labeled], "real", "bogus"),
                    seed=self.scorer_seed,
                )
            return self._scorer

    def metrics(self, sel: ev.PvSelection) -> dict:
        mask = sel.mask()
        real_hit = mask[self.cells[self.real_mask]]
        bogus_hit = mask[self.cells[self.bogus_mask]]
        return {
            "mdr": float(1.0 - real_hit.mean()),
            "fpr": float(bogus_hit.mean()),
        }

    def save_selection(self, sel: ev.PvSelection) -> str:
        with self.lock:
            self.selection = sel
            self.selection_file.write_text(sel.canonical_bytes().decode())
            return sel.etag()


def _compact(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


class ApiHandler(BaseHTTPRequestHandler):
    state: ServerState  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _json(self, obj, status: int = 200):
        self._send(status, _compact(obj), "application/json")

    def _error(self, status: int, message: str):
        self._json({"error": message}, status)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        url = urllib.parse.urlparse(self.path)
        query = urllib.parse.parse_qs(url.query)
        st = self.state
        try:
            if url.path == "/api/map":
                return self._json({"m": st.model.m, "d": st.model.d})

            m = re.fullmatch(r"/api/pv/(\d+)/(\d+)\.png", url.path)
            if m:
                i, j = int(m.group(1)), int(m.group(2))
                if i >= st.model.m or j >= st.model.m:
                    return self._error(404, f"cell ({i}, {j}) outside map")
                return self._send(200, encode_gray_png(st.prototypes[i, j]), "image/png")

            m = re.fullmatch(r"/api/pv/(\d+)/(\d+)/members", url.path)
            if m:
                i, j = int(m.group(1)), int(m.group(2))
                if i >= st.model.m or j >= st.model.m:
                    return self._error(404, f"cell ({i}, {j}) outside map")
                limit = int(query.get("limit", ["12"])[0])
                return self._json(self._members(i, j, limit))

            if url.path == "/api/metrics":
                if not st.labeled:
                    return self._error(409, "no labeled stamps loaded")
                if "sel" not in query:
                    return self._error(400, "missing sel= query parameter")
                sel = ev.PvSelection.from_json(json.loads(query["sel"][0]))
                if sel.m != st.model.m:
                    return self._error(400, f"selection is for an {sel.m}x{sel.m} map")
                return self._json(st.metrics(sel))

            if url.path == "/api/selection":
                sel = st.selection
                return self._json({**sel.to_json(), "etag": sel.etag()})

            if url.path == "/api/roc":
                if not st.labeled:
                    return self._error(409, "no labeled stamps loaded")
                q = float(query.get("q", ["99"])[0])
                ordering = ev.order_cells_by_percentile(st.model, st.scorer(), st.pixels, q)
                roc = ev.roc_switch_off(
                    st.model, ordering, st.pixels[st.real_mask], st.pixels[st.bogus_mask], q=q
                )
                return self._send(200, ev.roc_to_csv(roc).encode(), "text/csv")

            if url.path == "/api/ratio":
                if not st.labeled:
                    return self._error(409, "no labeled stamps loaded")
                rm = ev.ratio_map(st.model, st.pixels[st.real_mask], st.pixels[st.bogus_mask])
                return self._json(rm.to_json_grid())

            if st.ui_dir is not None:
                return self._static(url.path)
            return self._error(404, f"unknown path {url.path}")
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            return self._error(400, str(e))

    def do_POST(self):
        url = urllib.parse.urlparse(self.path)
        if url.path != "/api/selection":
            return self._error(404, f"unknown path {url.path}")
        try:
            length = int(self.headers.get("Content-Length", "0"))
            sel = ev.PvSelection.from_json(json.loads(self.rfile.read(length)))
            if sel.m != self.state.model.m:
                return self._error(400, f"selection is for an {sel.m}x{sel.m} map")
            etag = self.state.save_selection(sel)
            return self._json({"etag": etag})
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            return self._error(400, str(e))

    def _members(self, i: int, j: int, limit: int) -> dict:
        st = self.state
        flat = i * st.model.m + j
        idx = np.flatnonzero(st.cells == flat)
        hist: dict = {}
        for k in idx:
            label = st.stamps[k].label
            hist[label] = hist.get(label, 0) + 1
        rng = np.random.default_rng(flat)
        take = idx if idx.size <= limit else rng.choice(idx, size=limit, replace=False)
        thumbs = [
            base64.b64encode(encode_gray_png(st.pixels[k])).decode() for k in sorted(take)
        ]
        return {"count": int(idx.size), "labels": hist, "stamps": thumbs}

    def _static(self, path: str):
        st = self.state
        rel = "index.html" if path in ("", "/") else path.lstrip("/")
        target = (st.ui_dir / rel).resolve()
        if not str(target).startswith(str(st.ui_dir.resolve())) or not target.is_file():
            return self._error(404, f"no such file {path}")
        ctype = {
            ".html": "text/html",
            ".js": "application/javascript",
            ".css": "text/css",
            ".png": "image/png",
        }.get(target.suffix, "application/octet-stream")
        return self._send(200, target.read_bytes(), ctype)


def make_server(state: ServerState, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundApiHandler", (ApiHandler,), {"state": state})
    return ThreadingHTTPServer((host, port), handler)


def serve(model, stamps, host="127.0.0.1", port=8765, selection_file="selection.json",
          ui_dir=None, scorer_seed=0):
    state = ServerState(model, stamps, selection_file, ui_dir, scorer_seed)
    httpd = make_server(state, host, port)
    labeled = "labeled" if state.labeled else "unlabeled"
    print(f"serving {model.m}x{model.m} map with {len(state.stamps)} {labeled} stamps "
          f"on http://{host}:{httpd.server_address[1]}/")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0

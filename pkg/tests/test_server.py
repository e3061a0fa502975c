import base64
import json
import threading
import urllib.parse
import urllib.request

import numpy as np
import pytest

from somvet.evaluate import PvSelection, confusion_rates
from somvet.server import ServerState, make_server
from somvet.stamps import as_pixel_array


@pytest.fixture(scope="module")
def server(small_model, corpus_mixed, tmp_path_factory):
    sel_file = tmp_path_factory.mktemp("srv") / "selection.json"
    state = ServerState(small_model, corpus_mixed[:400], selection_file=sel_file)
    httpd = make_server(state, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base, state
    httpd.shutdown()


def get(base, path):
    with urllib.request.urlopen(base + path) as r:
        return r.status, r.headers.get_content_type(), r.read()


def get_json(base, path):
    status, ctype, body = get(base, path)
    assert ctype == "application/json"
    return status, json.loads(body)


def post_json(base, path, obj):
    req = urllib.request.Request(
        base + path, data=json.dumps(obj).encode(), method="POST",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as r:
        return r.status, json.loads(r.read())


def test_map_endpoint(server):
    base, state = server
    status, obj = get_json(base, "/api/map")
    assert status == 200
    assert obj == {"d": state.model.d, "m": state.model.m}


def test_prototype_png(server):
    base, state = server
    status, ctype, body = get(base, "/api/pv/0/1.png")
    assert status == 200 and ctype == "image/png"
    assert body[:8] == b"\x89PNG\r\n\x1a\n"


def test_prototype_out_of_bounds_404(server):
    base, _ = server
    with pytest.raises(urllib.error.HTTPError) as err:
        get(base, "/api/pv/99/0.png")
    assert err.value.code == 404


def test_members_counts_and_histogram(server):
    base, state = server
    total = 0
    labels = {"real": 0, "bogus": 0}
    for i in range(state.model.m):
        for j in range(state.model.m):
            _, obj = get_json(base, f"/api/pv/{i}/{j}/members?limit=5")
            total += obj["count"]
            assert len(obj["stamps"]) == min(5, obj["count"])
            for k, v in obj["labels"].items():
                labels[k] += v
            for b64 in obj["stamps"]:
                assert base64.b64decode(b64)[:8] == b"\x89PNG\r\n\x1a\n"
    assert total == 400
    want = [s.label for s in state.stamps]
    assert labels["real"] == want.count("real")
    assert labels["bogus"] == want.count("bogus")


def test_metrics_matches_library(server, corpus_mixed):
    base, state = server
    sel = PvSelection(state.model.m, frozenset({(0, 0), (1, 2), (3, 3)}))
    q = urllib.parse.quote(sel.canonical_bytes().decode())
    _, obj = get_json(base, f"/api/metrics?sel={q}")
    stamps = corpus_mixed[:400]
    pix = as_pixel_array(stamps)
    real = np.array([s.label == "real" for s in stamps])
    mdr, fpr = confusion_rates(state.model, sel, pix[real], pix[~real])
    assert obj == {"fpr": fpr, "mdr": mdr}


def test_metrics_all_cells_endpoint_identity(server):
    base, state = server
    sel = PvSelection.all_cells(state.model.m)
    q = urllib.parse.quote(sel.canonical_bytes().decode())
    _, obj = get_json(base, f"/api/metrics?sel={q}")
    assert obj == {"fpr": 1.0, "mdr": 0.0}


def test_selection_post_then_get_round_trip(server):
    base, state = server
    sel = PvSelection(state.model.m, frozenset({(2, 2), (0, 3)}))
    status, posted = post_json(base, "/api/selection", sel.to_json())
    assert status == 200
    assert posted["etag"] == sel.etag()
    _, got = get_json(base, "/api/selection")
    assert got["etag"] == sel.etag()
    assert PvSelection.from_json(got) == sel
    assert state.selection_file.exists()


def test_selection_bad_cell_rejected(server):
    base, state = server
    with pytest.raises(urllib.error.HTTPError) as err:
        post_json(base, "/api/selection", {"m": state.model.m, "selected": [[99, 0]]})
    assert err.value.code == 400


def test_roc_csv_endpoint(server):
    base, state = server
    status, ctype, body = get(base, "/api/roc?q=99")
    assert status == 200 and ctype == "text/csv"
    lines = body.decode().strip().split("\n")
    assert lines[0] == "n_off,fpr,mdr"
    assert len(lines) == state.model.m ** 2 + 2


def test_ratio_endpoint_nulls(server):
    base, state = server
    _, grid = get_json(base, "/api/ratio")
    m = state.model.m
    assert len(grid) == m and all(len(row) == m for row in grid)
    flat = [v for row in grid for v in row]
    assert any(v is None for v in flat) or all(v is not None for v in flat)
    for v in flat:
        assert v is None or v >= 0.0


def test_unknown_path_404(server):
    base, _ = server
    with pytest.raises(urllib.error.HTTPError) as err:
        get(base, "/api/nothing")
    assert err.value.code == 404


def test_unlabeled_state_rejects_metrics(small_model, tmp_path):
    state = ServerState(small_model, [], selection_file=tmp_path / "s.json")
    httpd = make_server(state, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    try:
        sel = urllib.parse.quote(PvSelection.none(small_model.m).canonical_bytes().decode())
        with pytest.raises(urllib.error.HTTPError) as err:
            get(base, f"/api/metrics?sel={sel}")
        assert err.value.code == 409
    finally:
        httpd.shutdown()

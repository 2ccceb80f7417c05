"""HTTP service for labeling adjacent segment pairs.

Serves tile imagery, segment boundary polygons with adjacency, and an
append-only label journal with tombstone undo. Adjacency is validated
server-side: labeling a non-adjacent pair is a 409. The export endpoint
streams the net ledger as JSON Lines, ready for training.
"""

from __future__ import annotations

import datetime
import io
import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel

from .raster import adjacency_pairs, load_raster, load_segment_map
from .vector import trace_boundaries


class LabelPost(BaseModel):
    tile: str
    a: int
    b: int
    label: str  # "positive" | "negative"
    annotator: str = "anonymous"


class LabelStore:
    """Append-only journal; undo appends a tombstone instead of deleting."""

    def __init__(self, path):
        self.path = Path(path)
        self.lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists():
            self.path.touch()

    def _append(self, op: dict) -> None:
        with open(self.path, "a") as f:
            f.write(json.dumps(op) + "\n")
            f.flush()

    def add(self, record: dict) -> None:
        with self.lock:
            self._append({"op": "label", **record})

    def undo(self) -> dict | None:
        with self.lock:
            active = self._replay()
            if not active:
                return None
            self._append({"op": "undo"})
            return active[-1]

    def export(self) -> list:
        with self.lock:
            return self._replay()

    def _replay(self) -> list:
        active: list[dict] = []
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            op = json.loads(line)
            if op.get("op") == "label":
                active.append({k: v for k, v in op.items() if k != "op"})
            elif op.get("op") == "undo" and active:
                active.pop()
        return active


class TileWorkspace:
    """Directory of <tile>.png (or .ppm) plus <tile>.segr files."""

    def __init__(self, data_dir):
        self.dir = Path(data_dir)
        self._maps: dict[str, object] = {}
        self._adjacency: dict[str, set] = {}
        self._segments_doc: dict[str, dict] = {}

    def tiles(self) -> list:
        out = []
        for segr in sorted(self.dir.glob("*.segr")):
            tile = segr.stem
            if self._image_path(tile) is not None:
                out.append(tile)
        return out

    def _image_path(self, tile: str) -> Path | None:
        for ext in (".png", ".ppm"):
            p = self.dir / f"{tile}{ext}"
            if p.exists():
                return p
        return None

    def segmap(self, tile: str):
        if tile not in self._maps:
            path = self.dir / f"{tile}.segr"
            if not path.exists():
                raise KeyError(tile)
            self._maps[tile] = load_segment_map(path)
        return self._maps[tile]

    def image_png(self, tile: str) -> bytes:
        path = self._image_path(tile)
        if path is None:
            raise KeyError(tile)
        if path.suffix == ".png":
            return path.read_bytes()
        from PIL import Image

        raster = load_raster(path)
        buf = io.BytesIO()
        Image.fromarray(raster.data).save(buf, format="PNG")
        return buf.getvalue()

    def adjacency(self, tile: str) -> set:
        if tile not in self._adjacency:
            pairs = adjacency_pairs(self.segmap(tile).labels)
            self._adjacency[tile] = {(int(a), int(b)) for a, b in pairs}
        return self._adjacency[tile]

    def segments_doc(self, tile: str) -> dict:
        if tile not in self._segments_doc:
            segmap = self.segmap(tile)
            refs = trace_boundaries(segmap)
            self._segments_doc[tile] = {
                "tile": tile,
                "width": segmap.width,
                "height": segmap.height,
                "polygons": [
                    {
                        "id": p.id,
                        "ring": [[int(x), int(y)] for x, y in p.ring],
                        "holes": [[[int(x), int(y)] for x, y in h] for h in p.holes],
                    }
                    for p in refs
                ],
                "adjacency": [[a, b] for a, b in sorted(self.adjacency(tile))],
            }
        return self._segments_doc[tile]


def create_app(data_dir, labels_path, static_dir=None) -> FastAPI:
    app = FastAPI(title="segmerge labeling service")
    tiles = TileWorkspace(data_dir)
    store = LabelStore(labels_path)

    @app.get("/api/tiles")
    def list_tiles():
        out = []
        for tile in tiles.tiles():
            m = tiles.segmap(tile)
            out.append(
                {"id": tile, "width": m.width, "height": m.height, "segments": m.count}
            )
        return out

    def _get_tile(tile: str):
        try:
            return tiles.segmap(tile)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile!r}")

    @app.get("/api/tiles/{tile}/image.png")
    def tile_image(tile: str):
        _get_tile(tile)
        return Response(content=tiles.image_png(tile), media_type="image/png")

    @app.get("/api/tiles/{tile}/segments.json")
    def tile_segments(tile: str):
        _get_tile(tile)
        return JSONResponse(tiles.segments_doc(tile))

    @app.post("/api/labels")
    def post_label(body: LabelPost):
        segmap = _get_tile(body.tile)
        if body.label not in ("positive", "negative"):
            raise HTTPException(status_code=422, detail="label must be positive|negative")
        for sid in (body.a, body.b):
            if not 0 <= sid < segmap.count:
                raise HTTPException(status_code=404, detail=f"unknown segment {sid}")
        key = (min(body.a, body.b), max(body.a, body.b))
        if body.a == body.b or key not in tiles.adjacency(body.tile):
            raise HTTPException(status_code=409, detail="segments are not adjacent")
        record = {
            "tile": body.tile,
            "a": body.a,
            "b": body.b,
            "label": body.label,
            "ts": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "annotator": body.annotator,
        }
        store.add(record)
        return {"ok": True, "record": record, "count": len(store.export())}

    @app.post("/api/labels/undo")
    def undo_label():
        undone = store.undo()
        if undone is None:
            raise HTTPException(status_code=409, detail="nothing to undo")
        return {"ok": True, "undone": undone, "count": len(store.export())}

    @app.get("/api/labels/export")
    def export_labels():
        lines = "".join(json.dumps(r) + "\n" for r in store.export())
        return PlainTextResponse(lines, media_type="application/x-ndjson")

    @app.get("/api/labels/summary")
    def summary():
        records = store.export()
        pos = sum(1 for r in records if r["label"] == "positive")
        return {"positive": pos, "negative": len(records) - pos, "total": len(records)}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app

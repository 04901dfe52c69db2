"""Local HTTP inference service backing the latent explorer.

Endpoints (JSON over HTTP/1.1, localhost, no auth):

- GET  /api/latents    utterance posterior means per style with axis ranges;
                       503 until the model is loaded, 409 unless latent dim is 2
- POST /api/synthesize latents + feature trajectories for one request;
                       400 on invalid mode/shape, 409 when z_u is sent to an
                       FG-family mode
- GET  /schemas/<name> the published response schemas shipped with the package
- GET  /...            static explorer files when a UI directory is configured

The service is stateless across requests: responses depend only on the
read-only model snapshot and the request body.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .bundle import Bundle
from .corpus import CorpusManifest, GenConfig, SegmentedUtterance, linguistic_features
from .layers import SegmentSpec
from .metrics import default_channel_map
from .pipelines import MG_MODES, MODES, PipelineError, SynthesisRequest, synthesize

SCHEMA_DIR = Path(__file__).parent / "schemas"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


class RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class ServiceState:
    bundle: Bundle
    manifest: CorpusManifest
    gen_config: GenConfig | None = None
    map_per_style: int = 1500
    _map_cache: dict | None = field(default=None, repr=False)
    _items_by_id: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def load(cls, checkpoint: str | Path, corpus: str | Path,
             map_per_style: int = 1500) -> "ServiceState":
        bundle = Bundle.load(checkpoint)
        manifest = CorpusManifest.load(corpus)
        gen_cfg = None
        cfg_path = Path(corpus).parent / "gen_config.json"
        if cfg_path.exists():
            gen_cfg = GenConfig.from_json(cfg_path.read_text(encoding="utf-8"))
        return cls(bundle=bundle, manifest=manifest, gen_config=gen_cfg,
                   map_per_style=map_per_style)

    # -- /api/latents --------------------------------------------------------

    def latent_map(self) -> dict:
        if self.bundle.model.cfg.d_z != 2:
            raise RequestError(409, f"latent map requires a 2-dimensional latent "
                                    f"space; model has d_z={self.bundle.model.cfg.d_z}")
        if "step1" not in self.bundle.trained:
            raise RequestError(409, "checkpoint has no trained encoders")
        with self._lock:
            if self._map_cache is None:
                self._map_cache = self._build_map()
            return self._map_cache

    def _build_map(self) -> dict:
        points = []
        per_style: dict[str, int] = {}
        for item in self.manifest.items:
            if per_style.get(item.style, 0) >= self.map_per_style:
                continue
            per_style[item.style] = per_style.get(item.style, 0) + 1
            u = self.manifest.load_item(item)
            z = self.bundle.model.oracle_latents(u).z_utterance.reshape(-1)
            points.append({"id": item.id, "style": item.style,
                           "z_u": [float(z[0]), float(z[1])]})
        if points:
            xs = [p["z_u"][0] for p in points]
            ys = [p["z_u"][1] for p in points]
            ranges = {"x": [min(xs), max(xs)], "y": [min(ys), max(ys)]}
        else:
            ranges = {"x": [-1.0, 1.0], "y": [-1.0, 1.0]}
        return {"points": points, "axis_ranges": ranges}

    # -- /api/synthesize -----------------------------------------------------

    def _utterance_from_request(self, body: dict) -> tuple[SegmentedUtterance | None,
                                                           np.ndarray, SegmentSpec,
                                                           SegmentSpec, str | None]:
        if "utterance_id" in body and body["utterance_id"] is not None:
            uid = str(body["utterance_id"])
            if uid not in self._items_by_id:
                for item in self.manifest.items:
                    self._items_by_id[item.id] = item
            if uid not in self._items_by_id:
                raise RequestError(400, f"unknown utterance id {uid!r}")
            u = self.manifest.load_item(self._items_by_id[uid])
            return u, u.y, u.word_seg, u.phrase_seg, uid
        if "spec" in body and body["spec"] is not None:
            if self.gen_config is None:
                raise RequestError(400, "text-analogue specs need gen_config.json "
                                        "next to the corpus manifest")
            spec = body["spec"]
            try:
                symbols = np.asarray([int(s) for s in spec["word_symbols"]])
                frames = [int(f) for f in spec["word_frames"]]
                counts = [int(c) for c in spec["phrase_word_counts"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise RequestError(400, f"bad text-analogue spec: {exc}") from exc
            if len(frames) != len(symbols) or sum(counts) != len(symbols) \
                    or any(c < 1 for c in counts) or any(f < 1 for f in frames):
                raise RequestError(400, "inconsistent text-analogue spec")
            if symbols.min() < 0 or symbols.max() >= self.gen_config.vocab_size:
                raise RequestError(400, "word symbol out of vocabulary range")
            word_seg = SegmentSpec.from_lengths(frames)
            phrase_lengths = []
            idx = 0
            for c in counts:
                phrase_lengths.append(sum(frames[idx:idx + c]))
                idx += c
            phrase_seg = SegmentSpec.from_lengths(phrase_lengths)
            y = linguistic_features(self.gen_config, symbols, word_seg, phrase_seg)
            return None, y, word_seg, phrase_seg, None
        raise RequestError(400, "request needs utterance_id or spec")

    def synthesize_payload(self, body: dict) -> dict:
        mode = body.get("mode")
        if mode not in MODES:
            raise RequestError(400, f"invalid mode {mode!r}; expected one of "
                                    f"{list(MODES)}")
        z_u = body.get("z_u")
        if z_u is not None and mode not in MG_MODES:
            raise RequestError(409, f"z_u cannot be specified for mode {mode}")
        u, y, word_seg, phrase_seg, uid = self._utterance_from_request(body)
        temperature = float(body.get("temperature", 1.0))
        seed = body.get("seed", 0)
        cmap = default_channel_map(self.manifest.d_ac)
        channel_index = int(body.get("channel",
                                     cmap.cepstral[0] if cmap.cepstral else 0))
        if not (0 <= channel_index < self.manifest.d_ac):
            raise RequestError(400, f"channel {channel_index} out of range")
        try:
            self.bundle.require_mode(mode)
            req = SynthesisRequest(
                y=y, word_seg=word_seg, phrase_seg=phrase_seg, mode=mode,
                z_u_override=None if z_u is None else np.asarray(z_u, dtype=np.float64),
                temperature=temperature, seed=int(seed))
            result = synthesize(req, self.bundle.model, self.bundle.suite)
        except PipelineError as exc:
            raise RequestError(400, str(exc)) from exc
        cmap = default_channel_map(self.manifest.d_ac)
        trace_payload = {}
        for level, tr in result.trace.items():
            trace_payload[level] = (None if tr is None else
                                    {"mean": tr.mean.tolist(),
                                     "log_var": tr.log_var.tolist()})
        return {
            "mode": result.mode,
            "utterance_id": uid,
            "word_count": word_seg.n_segments,
            "phrase_count": phrase_seg.n_segments,
            "z_utterance": (None if result.z_utterance is None
                            else result.z_utterance.reshape(-1).tolist()),
            "word_latents": result.z_word.tolist(),
            "phrase_latents": (None if result.z_phrase is None
                               else result.z_phrase.tolist()),
            "trajectories": {
                "pitch": result.x_hat[:, cmap.pitch].tolist(),
                "channel": {"index": channel_index,
                            "values": result.x_hat[:, channel_index].tolist()},
            },
            "trace": trace_payload,
        }


class ExplorerHandler(BaseHTTPRequestHandler):
    server_version = "mgvae-explorer/0.1"
    state: ServiceState | None = None
    ui_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_file(self, path: Path) -> None:
        data = path.read_bytes()
        ctype = _CONTENT_TYPES.get(path.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _state(self) -> ServiceState:
        if self.state is None:
            raise RequestError(503, "model not loaded yet")
        return self.state

    def do_GET(self):
        try:
            path = self.path.split("?", 1)[0]
            if path == "/api/latents":
                self._send_json(200, self._state().latent_map())
                return
            if path.startswith("/schemas/"):
                name = Path(path).name
                target = SCHEMA_DIR / name
                if not target.is_file():
                    raise RequestError(404, f"unknown schema {name}")
                self._send_file(target)
                return
            self._serve_static(path)
        except RequestError as exc:
            self._send_json(exc.status, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"error": f"internal error: {exc}"})

    def _serve_static(self, path: str) -> None:
        if self.ui_dir is None:
            raise RequestError(404, f"no route for {path}")
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            raise RequestError(404, f"no route for {path}")
        self._send_file(target)

    def do_POST(self):
        try:
            if self.path.split("?", 1)[0] != "/api/synthesize":
                raise RequestError(404, f"no route for {self.path}")
            state = self._state()
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise RequestError(400, f"invalid JSON body: {exc}") from exc
            if not isinstance(body, dict):
                raise RequestError(400, "request body must be a JSON object")
            self._send_json(200, state.synthesize_payload(body))
        except RequestError as exc:
            self._send_json(exc.status, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive
            self._send_json(500, {"error": f"internal error: {exc}"})


def make_server(state: ServiceState | None, host: str = "127.0.0.1", port: int = 0,
                ui_dir: Path | None = None) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (ExplorerHandler,),
                   {"state": state, "ui_dir": ui_dir})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(state: ServiceState, host: str = "127.0.0.1", port: int = 8765,
                  ui_dir: Path | None = None) -> None:
    server = make_server(state, host=host, port=port, ui_dir=ui_dir)
    print(f"serving on http://{host}:{server.server_address[1]}/ "
          f"(ui: {ui_dir or 'none'})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()

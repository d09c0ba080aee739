"""HTTP app serving the paraphrase wire protocol.

Routes:
    POST /caption     {"image": b64 png}                       -> {"caption"}
    POST /paraphrase  {"image", "strength", "guidance_scale",
                       "steps", "seed", optional "caption"}    -> {"image", "caption"}
    POST /embedding   {"image": b64 png}                       -> {"vector"}
    GET  /health                                               -> {"status", "captioner", "diffuser"}

Request handling is concurrent; generation is serialized through a
semaphore sized by max_concurrent, and a generation that overruns the
configured timeout returns 504.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import io
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from PIL import Image as PILImage, UnidentifiedImageError

from .backends import BackendNotLoaded, ModelBackend, StubBackend


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    captioner_id: str = "stub"
    diffuser_id: str = "stub"
    device: str = "cpu"
    max_concurrent: int = 1
    timeout_seconds: float = 300.0
    stub: bool = True


class RequestError(ValueError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _decode_image(payload: dict) -> PILImage.Image:
    raw = payload.get("image")
    if not isinstance(raw, str) or not raw:
        raise RequestError(400, "missing base64 'image' field")
    try:
        blob = base64.b64decode(raw, validate=True)
        img = PILImage.open(io.BytesIO(blob))
        img.load()
        return img
    except (binascii.Error, UnidentifiedImageError, OSError, ValueError) as e:
        raise RequestError(400, f"image field is not a decodable base64 PNG: {e}") from e


def _encode_image(img: PILImage.Image) -> str:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class ParaphraseService:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.backend = StubBackend() if config.stub else ModelBackend(
            config.captioner_id, config.diffuser_id, config.device
        )
        self._generation_slots = threading.Semaphore(config.max_concurrent)
        self._pool = ThreadPoolExecutor(max_workers=max(config.max_concurrent, 1))

    # ------------------------------------------------------------------
    # route handlers: return (status, payload)

    def handle_health(self) -> tuple[int, dict]:
        return 200, {
            "status": "ok",
            "captioner": self.backend.captioner_name,
            "diffuser": self.backend.diffuser_name,
        }

    def handle_caption(self, payload: dict) -> tuple[int, dict]:
        image = _decode_image(payload)
        caption = self._run_with_timeout(lambda: self.backend.caption(image))
        return 200, {"caption": caption}

    def handle_paraphrase(self, payload: dict) -> tuple[int, dict]:
        image = _decode_image(payload)
        strength = payload.get("strength", 0.5)
        guidance = payload.get("guidance_scale", 7.5)
        steps = payload.get("steps", 50)
        seed = payload.get("seed", 0)
        if not isinstance(strength, (int, float)) or not (0.0 <= strength <= 1.0):
            raise RequestError(400, f"strength must lie in [0, 1], got {strength!r}")
        if not isinstance(guidance, (int, float)) or guidance < 0:
            raise RequestError(400, f"guidance_scale must be non-negative, got {guidance!r}")
        if not isinstance(steps, int) or steps < 1:
            raise RequestError(400, f"steps must be a positive integer, got {steps!r}")
        if not isinstance(seed, int):
            raise RequestError(400, f"seed must be an integer, got {seed!r}")
        caption = payload.get("caption")
        if caption is not None and (not isinstance(caption, str) or not caption):
            raise RequestError(400, "caption override must be a nonempty string")

        def generate():
            text = caption or self.backend.caption(image)
            out = self.backend.paraphrase(image, text, float(strength), float(guidance),
                                          steps, seed)
            return out, text

        out, text = self._run_with_timeout(generate)
        return 200, {"image": _encode_image(out), "caption": text}

    def handle_embedding(self, payload: dict) -> tuple[int, dict]:
        image = _decode_image(payload)
        vector = self._run_with_timeout(lambda: self.backend.embedding(image))
        return 200, {"vector": vector}

    def _run_with_timeout(self, fn):
        with self._generation_slots:
            future = self._pool.submit(fn)
            try:
                return future.result(timeout=self.config.timeout_seconds)
            except FutureTimeoutError:
                future.cancel()
                raise RequestError(504, "generation timed out") from None

    # ------------------------------------------------------------------

    def make_server(self) -> ThreadingHTTPServer:
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                if self.path == "/health":
                    self._send(*service.handle_health())
                else:
                    self._send(404, {"error": f"no route {self.path}"})

            def do_POST(self):
                routes = {
                    "/caption": service.handle_caption,
                    "/paraphrase": service.handle_paraphrase,
                    "/embedding": service.handle_embedding,
                }
                handler = routes.get(self.path)
                if handler is None:
                    self._send(404, {"error": f"no route {self.path}"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    if not isinstance(payload, dict):
                        raise RequestError(400, "request body must be a JSON object")
                    status, reply = handler(payload)
                except RequestError as e:
                    status, reply = e.status, {"error": str(e)}
                except json.JSONDecodeError as e:
                    status, reply = 400, {"error": f"request body is not JSON: {e}"}
                except BackendNotLoaded as e:
                    status, reply = 503, {"error": str(e)}
                except Exception as e:  # unexpected: surface, never hang
                    status, reply = 500, {"error": f"internal error: {e}"}
                self._send(status, reply)

            def _send(self, status: int, payload: dict):
                blob = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(blob)))
                self.end_headers()
                self.wfile.write(blob)

        return ThreadingHTTPServer((self.config.host, self.config.port), Handler)

    def serve_forever(self):
        server = self.make_server()
        print(f"serving on http://{server.server_address[0]}:{server.server_address[1]} "
              f"(captioner={self.backend.captioner_name}, diffuser={self.backend.diffuser_name})")
        server.serve_forever()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="wmbench-service",
                                     description="caption + img2img paraphrase sidecar")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--captioner", default="microsoft/kosmos-2-patch14-224")
    parser.add_argument("--diffuser", default="stabilityai/stable-diffusion-xl-refiner-1.0")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-concurrent", type=int, default=1)
    parser.add_argument("--timeout", type=float, default=300.0)
    parser.add_argument("--stub", action="store_true",
                        help="serve the deterministic weight-free stub backend")
    args = parser.parse_args(argv)
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        captioner_id="stub" if args.stub else args.captioner,
        diffuser_id="stub" if args.stub else args.diffuser,
        device=args.device,
        max_concurrent=args.max_concurrent,
        timeout_seconds=args.timeout,
        stub=args.stub,
    )
    ParaphraseService(config).serve_forever()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Contract tests for the paraphrase sidecar in stub-model mode.

Every response is validated against the JSON schemas shipped with the
wmbench package (the published wire protocol); no model weights are
required.
"""

import base64
import io
import json
import threading
import urllib.error
import urllib.request
from importlib import resources

import numpy as np
import pytest
from PIL import Image as PILImage

from wmbench_service.app import ParaphraseService, ServiceConfig

try:
    import jsonschema
except ImportError:
    jsonschema = None


def load_schema(name: str) -> dict:
    ref = resources.files("wmbench") / "schemas" / name
    return json.loads(ref.read_text())


def validate(payload: dict, schema_name: str):
    schema = load_schema(schema_name)
    if jsonschema is not None:
        jsonschema.validate(payload, schema)
    else:  # minimal structural check: required keys with the right JSON types
        types = {"string": str, "array": list, "object": dict, "number": (int, float)}
        for key in schema.get("required", []):
            assert key in payload, f"missing {key}"
            spec = schema["properties"].get(key, {})
            if "type" in spec:
                assert isinstance(payload[key], types[spec["type"]])


@pytest.fixture(scope="module")
def service_url():
    server = ParaphraseService(ServiceConfig(port=0, timeout_seconds=30.0)).make_server()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def post(url: str, route: str, body: dict):
    req = urllib.request.Request(
        url + route,
        data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read().decode())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read().decode())


def fixture_png(seed: int, side: int = 48) -> str:
    g = np.random.Generator(np.random.PCG64(seed))
    base = g.uniform(0.1, 0.9, (side, side, 3))
    yy = np.linspace(0, 1, side)[:, None, None]
    arr = np.clip(base * 0.5 + 0.4 * yy, 0, 1)
    img = PILImage.fromarray((arr * 255).astype(np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def png_to_array(b64: str) -> np.ndarray:
    img = PILImage.open(io.BytesIO(base64.b64decode(b64)))
    return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(np.mean((a - b) ** 2))
    return float("inf") if mse == 0 else 10.0 * np.log10(1.0 / mse)


class TestHealth:
    def test_reports_stub_models_truthfully(self, service_url):
        with urllib.request.urlopen(service_url + "/health", timeout=10) as resp:
            payload = json.loads(resp.read().decode())
        validate(payload, "health_response.json")
        assert payload == {"status": "ok", "captioner": "stub", "diffuser": "stub"}


class TestCaption:
    def test_valid_image_nonempty_caption(self, service_url):
        status, payload = post(service_url, "/caption", {"image": fixture_png(1)})
        assert status == 200
        validate(payload, "caption_response.json")
        assert payload["caption"] == "stub caption"

    def test_truncated_base64_is_400(self, service_url):
        status, payload = post(service_url, "/caption", {"image": fixture_png(1)[:-10]})
        assert status == 400
        assert "error" in payload

    def test_missing_image_field_is_400(self, service_url):
        status, _ = post(service_url, "/caption", {})
        assert status == 400

    def test_non_json_body_is_400(self, service_url):
        req = urllib.request.Request(service_url + "/caption", data=b"not json",
                                     headers={"Content-Type": "application/json"})
        with pytest.raises(urllib.error.HTTPError) as exc:
            urllib.request.urlopen(req, timeout=10)
        assert exc.value.code == 400


class TestParaphrase:
    def test_contract_and_schema(self, service_url):
        status, payload = post(service_url, "/paraphrase", {
            "image": fixture_png(2), "strength": 0.5, "guidance_scale": 7.5,
            "steps": 50, "seed": 11,
        })
        assert status == 200
        validate(payload, "paraphrase_response.json")
        assert payload["caption"] == "stub caption"
        assert png_to_array(payload["image"]).shape == (48, 48, 3)

    def test_deterministic_under_fixed_seed(self, service_url):
        body = {"image": fixture_png(3), "strength": 0.7, "guidance_scale": 5.0,
                "steps": 50, "seed": 99}
        _, first = post(service_url, "/paraphrase", body)
        _, second = post(service_url, "/paraphrase", body)
        assert first["image"] == second["image"]

    def test_strength_ordering_on_fixtures(self, service_url):
        # gentle regeneration stays closer to the input than heavy regeneration
        gaps = []
        for seed in range(5):
            b64 = fixture_png(100 + seed)
            original = png_to_array(b64)
            _, weak = post(service_url, "/paraphrase",
                           {"image": b64, "strength": 0.05, "guidance_scale": 7.5,
                            "steps": 50, "seed": seed})
            _, strong = post(service_url, "/paraphrase",
                             {"image": b64, "strength": 0.9, "guidance_scale": 7.5,
                              "steps": 50, "seed": seed})
            gaps.append(psnr(original, png_to_array(weak["image"]))
                        - psnr(original, png_to_array(strong["image"])))
        assert np.mean(gaps) > 0
        assert all(g > 0 for g in gaps)

    def test_caption_override_honored(self, service_url):
        status, payload = post(service_url, "/paraphrase", {
            "image": fixture_png(4), "strength": 0.3, "guidance_scale": 7.5,
            "steps": 50, "seed": 1, "caption": "a custom caption",
        })
        assert status == 200
        assert payload["caption"] == "a custom caption"

    @pytest.mark.parametrize("strength", [1.3, -0.1, "high"])
    def test_bad_strength_is_400(self, service_url, strength):
        status, _ = post(service_url, "/paraphrase",
                         {"image": fixture_png(5), "strength": strength})
        assert status == 400

    def test_bad_steps_is_400(self, service_url):
        status, _ = post(service_url, "/paraphrase",
                         {"image": fixture_png(5), "strength": 0.5, "steps": 0})
        assert status == 400


class TestEmbedding:
    def test_contract_and_schema(self, service_url):
        status, payload = post(service_url, "/embedding", {"image": fixture_png(6)})
        assert status == 200
        validate(payload, "embedding_response.json")
        assert len(payload["vector"]) == 64

    def test_deterministic(self, service_url):
        a = post(service_url, "/embedding", {"image": fixture_png(7)})[1]["vector"]
        b = post(service_url, "/embedding", {"image": fixture_png(7)})[1]["vector"]
        assert a == b


class TestUnknownRoute:
    def test_404(self, service_url):
        status, _ = post(service_url, "/nonsense", {})
        assert status == 404


class TestPrimaryClientIntegration:
    def test_wmbench_client_speaks_to_live_service(self, service_url):
        wmbench = pytest.importorskip("wmbench")
        from wmbench.attacks import ParaphraseClient
        from wmbench.imaging import Image

        g = np.random.Generator(np.random.PCG64(8))
        img = Image(g.uniform(0.1, 0.9, (3, 32, 32)))
        client = ParaphraseClient(service_url)
        assert client.health()["status"] == "ok"
        assert client.caption(img) == "stub caption"
        out, caption = client.paraphrase(img, strength=0.4, guidance_scale=7.5, seed=3)
        assert caption == "stub caption"
        assert out.data.shape == img.data.shape
        assert client.embedding(img).shape == (64,)

    def test_harness_external_rows_run_against_live_service(self, service_url, tmp_path):
        pytest.importorskip("wmbench")
        from wmbench.attacks import AttackSpec
        from wmbench.harness import ExperimentConfig, run_experiment
        from wmbench.synth import write_corpus

        corpus = tmp_path / "corpus"
        write_corpus(corpus, 8, seed=1, side=160)
        cfg = ExperimentConfig(
            dataset_dir=str(corpus),
            output_dir=str(tmp_path / "out"),
            resize_to=128,
            schemes=("dwtdctsvd",),
            attacks=(AttackSpec("paraphrase", {"s": 0.4, "backend": "external"}),),
            n_images=3,
            seed=5,
            n_negatives=100,
            paraphrase_url=service_url,
        )
        result = run_experiment(cfg)
        assert not result.skipped
        labels = [r.attack for r in result.rows]
        assert any(label.startswith("paraphrase") for label in labels)

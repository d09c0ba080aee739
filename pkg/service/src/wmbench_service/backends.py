"""Caption and image-to-image backends.

The stub backend is deterministic and weight-free so protocol tests run
anywhere: captions are fixed, paraphrasing blurs and perturbs the input
with severity scaled by strength, embeddings are a pooled-luma sketch.
The real backend wraps a captioning model and a diffusion img2img
pipeline behind the same interface; the heavyweight imports stay guarded
so the package imports cleanly without them.
"""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage, ImageFilter


class BackendNotLoaded(RuntimeError):
    """Raised when a model backend is unavailable; maps to HTTP 503."""


class StubBackend:
    """Deterministic, model-free stand-in used for contract testing."""

    captioner_name = "stub"
    diffuser_name = "stub"

    def caption(self, image: PILImage.Image) -> str:
        return "stub caption"

    def paraphrase(self, image: PILImage.Image, caption: str, strength: float,
                   guidance_scale: float, steps: int, seed: int) -> PILImage.Image:
        arr = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
        blurred = image.convert("RGB").filter(ImageFilter.GaussianBlur(radius=0.5 + 3.0 * strength))
        base = np.asarray(blurred, dtype=np.float64) / 255.0
        mixed = (1.0 - strength) * arr + strength * base
        noise = np.random.Generator(np.random.PCG64(seed)).normal(0.0, 0.25 * strength, arr.shape)
        out = np.clip(mixed + noise, 0.0, 1.0)
        return PILImage.fromarray(np.round(out * 255.0).astype(np.uint8))

    def embedding(self, image: PILImage.Image) -> list[float]:
        gray = np.asarray(image.convert("L").resize((8, 8)), dtype=np.float64) / 255.0
        return [float(v) for v in gray.ravel()]


class ModelBackend:
    """Captioning + diffusion img2img via transformers and diffusers."""

    def __init__(self, captioner_id: str, diffuser_id: str, device: str = "cpu"):
        self.captioner_name = captioner_id
        self.diffuser_name = diffuser_id
        self.device = device
        self._processor = None
        self._captioner = None
        self._pipeline = None

    def _load_captioner(self):
        if self._captioner is None:
            try:
                from transformers import AutoModelForVision2Seq, AutoProcessor
            except ImportError as e:
                raise BackendNotLoaded(f"transformers unavailable: {e}") from e
            self._processor = AutoProcessor.from_pretrained(self.captioner_name)
            self._captioner = AutoModelForVision2Seq.from_pretrained(self.captioner_name).to(self.device)

    def _load_pipeline(self):
        if self._pipeline is None:
            try:
                import torch
                from diffusers import AutoPipelineForImage2Image
            except ImportError as e:
                raise BackendNotLoaded(f"diffusers unavailable: {e}") from e
            self._pipeline = AutoPipelineForImage2Image.from_pretrained(self.diffuser_name)
            self._pipeline.to(self.device)
            self._torch = torch

    def caption(self, image: PILImage.Image) -> str:
        self._load_captioner()
        prompt = "<grounding>An image of"
        inputs = self._processor(text=prompt, images=image, return_tensors="pt").to(self.device)
        # greedy decoding keeps captions deterministic for a fixed model
        generated = self._captioner.generate(**inputs, max_new_tokens=64, do_sample=False)
        text = self._processor.batch_decode(generated, skip_special_tokens=True)[0]
        caption, _entities = self._processor.post_process_generation(text)
        return caption.strip() or "an image"

    def paraphrase(self, image: PILImage.Image, caption: str, strength: float,
                   guidance_scale: float, steps: int, seed: int) -> PILImage.Image:
        self._load_pipeline()
        generator = self._torch.Generator(device=self.device).manual_seed(seed)
        result = self._pipeline(
            prompt=caption,
            image=image.convert("RGB"),
            strength=strength,
            guidance_scale=guidance_scale,
            num_inference_steps=steps,
            generator=generator,
        )
        return result.images[0]

    def embedding(self, image: PILImage.Image) -> list[float]:
        self._load_captioner()
        inputs = self._processor(images=image, return_tensors="pt").to(self.device)
        features = self._captioner.get_image_features(**inputs)
        return [float(v) for v in features.detach().cpu().numpy().ravel()]

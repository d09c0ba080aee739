#!/usr/bin/env python3
"""Regenerate the bundled demo corpus and config under demo/.

The images are deterministic, so rerunning this script reproduces the
checked-in fixture byte for byte.
"""

import json
from pathlib import Path

from wmbench.synth import write_corpus

ROOT = Path(__file__).resolve().parent.parent
DEMO = ROOT / "demo"


def main():
    write_corpus(DEMO / "images", count=10, seed=2024, side=256)
    config = {
        "dataset_dir": "images",
        "output_dir": "demo_output",
        "resize_to": 128,
        "schemes": ["dwtdctsvd", "treering", "gaussianshading"],
        "attacks": [
            {"kind": "brightness", "factor": 2.0},
            {"kind": "noise", "sigma": 0.05},
            {"kind": "paraphrase", "s": 0.4, "gs": 7.5, "backend": "surrogate"},
        ],
        "n_images": 10,
        "seed": 7,
        "fpr_target": 0.01,
        "n_negatives": 100,
    }
    (DEMO / "demo.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {DEMO}/images (10 PNGs) and {DEMO}/demo.json")


if __name__ == "__main__":
    main()

"""Command-line front end.

Exit codes: 0 success, 1 operational failure, 2 usage error.  All
subcommands are non-interactive and deterministic given their flags.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .attacks import AttackSpec, apply_attack, strip_metadata
from .imaging import Image, derive_seed, load_image, save_image
from .transport import get_transport
from .watermark_core import (
    DetectionOutcome,
    generate_key,
    key_load,
    key_save,
    scheme_statistic,
)

ENV_SERVICE_URL = "WMBENCH_PARAPHRASE_URL"


def _image_files(directory: Path) -> list[Path]:
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".png", ".ppm") and p.is_file()
    )
    if not files:
        raise ValueError(f"no .png/.ppm images in {directory}")
    return files


def _transport_for(args):
    url = getattr(args, "paraphrase_url", None) or os.environ.get(ENV_SERVICE_URL)
    return get_transport(args.transport, base_url=url)


def cmd_keygen(args) -> int:
    options = {}
    if args.scheme == "treering":
        options["pattern"] = args.pattern
    else:
        options["payload_len"] = args.payload_bits
    key = generate_key(args.scheme, args.seed, **options)
    key_save(key, args.out)
    print(f"wrote {args.scheme} key to {args.out}")
    return 0


def cmd_embed(args) -> int:
    key = key_load(args.key)
    if key.scheme_id != args.scheme:
        raise ValueError(f"key is for {key.scheme_id}, not {args.scheme}")
    transport = _transport_for(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .watermark_core import scheme_embed

    for path in _image_files(Path(args.in_dir)):
        img = load_image(path)
        if key.scheme_id in harness.LATENT_SCHEMES:
            marked = scheme_embed(key, img, transport=transport,
                                  latent_seed=derive_seed(key.seed, path.name))
        else:
            marked = scheme_embed(key, img)
        save_image(marked, out_dir / (path.stem + ".png"))
    print(f"embedded watermark into {len(_image_files(Path(args.in_dir)))} images -> {out_dir}")
    return 0


def cmd_attack(args) -> int:
    params = {}
    for name in ("factor", "angle_degrees", "quality", "sigma"):
        v = getattr(args, name, None)
        if v is not None:
            params[name] = v
    if args.kind == "paraphrase":
        params = {"s": args.strength, "gs": args.guidance, "backend": args.backend}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    url = args.paraphrase_url or os.environ.get(ENV_SERVICE_URL)
    files = _image_files(Path(args.in_dir))
    for i, path in enumerate(files):
        spec = AttackSpec(args.kind, params, seed=derive_seed(args.seed, path.name, i))
        save_image(apply_attack(spec, load_image(path), service_url=url),
                   out_dir / (path.stem + ".png"))
    print(f"attacked {len(files)} images with {args.kind} -> {out_dir}")
    return 0


def cmd_detect(args) -> int:
    key = key_load(args.key)
    if key.scheme_id != args.scheme:
        raise ValueError(f"key is for {key.scheme_id}, not {args.scheme}")
    if args.tau is not None:
        tau = args.tau
    else:
        record = harness.CalibrationRecord.from_json(Path(args.calibration).read_text())
        tau = record.tau
    transport = _transport_for(args)
    lines = ["image_id,statistic,detected"]
    for path in _image_files(Path(args.in_dir)):
        kwargs = {"transport": transport} if key.scheme_id in harness.LATENT_SCHEMES else {}
        stat = scheme_statistic(key, load_image(path), **kwargs)
        outcome = DetectionOutcome(statistic=stat, threshold=tau)
        lines.append(f"{path.name},{stat:.10g},{int(outcome.detected)}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote detection outcomes to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    key = key_load(args.key)
    if key.scheme_id != args.scheme:
        raise ValueError(f"key is for {key.scheme_id}, not {args.scheme}")
    transport = _transport_for(args)
    stats = []
    if args.negatives:
        for path in _image_files(Path(args.negatives)):
            kwargs = {"transport": transport} if key.scheme_id in harness.LATENT_SCHEMES else {}
            stats.append(scheme_statistic(key, load_image(path), **kwargs))
    elif key.scheme_id in harness.LATENT_SCHEMES:
        from .transport import sample_latent

        for i in range(args.generate_negatives):
            img = transport.generate(sample_latent(derive_seed(key.seed, "negative", i)))
            stats.append(scheme_statistic(key, img, transport=transport))
    else:
        raise ValueError("pixel-domain schemes need --negatives DIR")
    record = harness.calibrate_threshold(args.scheme, stats, args.fpr)
    Path(args.out).write_text(record.to_json() + "\n")
    print(f"tau={record.tau:.10g} (fpr target {args.fpr}, {record.n_negatives} negatives)")
    return 0


def cmd_eval(args) -> int:
    cfg = harness.ExperimentConfig.from_json(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    url = args.paraphrase_url or os.environ.get(ENV_SERVICE_URL)
    if url:
        overrides["paraphrase_url"] = url
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    result = harness.run_experiment(cfg)
    print(f"report: {result.csv_path}")
    print(f"table:  {result.markdown_path}")
    for s in result.skipped:
        print(f"skipped: {s}")
    if result.failure_fraction > 0.10:
        print(f"{len(result.failures)} per-image failures (> 10%)", file=sys.stderr)
        return 1
    return 0


def cmd_strip(args) -> int:
    report = strip_metadata(args.file, args.out)
    if report.clean:
        print(f"{args.file}: no metadata segments found")
    else:
        for name, size in report.removed:
            print(f"removed {name} ({size} bytes)")
    return 0


def cmd_dump_key(args) -> int:
    from . import transforms
    from .wm_treering import decode_ring_key

    key = key_load(args.key)
    rk = decode_ring_key(key)
    spectrum = transforms.fftshift(rk.target)
    sidecar = []
    for part, plane in (("real", spectrum.real), ("imag", spectrum.imag)):
        lo, hi = float(plane.min()), float(plane.max())
        scaled = np.zeros_like(plane) if hi == lo else (plane - lo) / (hi - lo)
        out = Path(f"{args.out_prefix}_{part}.png")
        save_image(Image(scaled[None]), out)
        sidecar.append(f"{part}: min={lo:.10g} -> byte 0, max={hi:.10g} -> byte 255, file={out.name}")
    Path(f"{args.out_prefix}_scale.txt").write_text("\n".join(sidecar) + "\n")
    print(f"wrote {args.out_prefix}_real.png, {args.out_prefix}_imag.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wmbench",
                                     description="watermark schemes, attacks, and benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a watermark key")
    p.add_argument("--scheme", required=True, choices=("dwtdctsvd", "treering", "gaussianshading"))
    p.add_argument("--pattern", default="ring", choices=("ring", "rand", "zeros"))
    p.add_argument("--payload-bits", type=int, default=64)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_keygen)

    p = sub.add_parser("embed", help="watermark a directory of images")
    p.add_argument("--scheme", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--transport", default="identity", choices=("identity", "toy", "external"))
    p.add_argument("--paraphrase-url")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("attack", help="apply a de-watermarking attack to a directory")
    p.add_argument("--kind", required=True,
                   choices=("brightness", "rotation", "jpeg", "noise", "paraphrase"))
    p.add_argument("--factor", type=float)
    p.add_argument("--angle-degrees", dest="angle_degrees", type=float)
    p.add_argument("--quality", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--strength", type=float, default=0.5)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--backend", default="surrogate", choices=("surrogate", "external"))
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paraphrase-url")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("detect", help="score a directory against a key")
    p.add_argument("--scheme", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--calibration")
    p.add_argument("--out", required=True)
    p.add_argument("--transport", default="identity", choices=("identity", "toy", "external"))
    p.add_argument("--paraphrase-url")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("calibrate", help="fit a detection threshold on unwatermarked negatives")
    p.add_argument("--scheme", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--negatives")
    p.add_argument("--generate-negatives", type=int, default=500)
    p.add_argument("--fpr", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.add_argument("--transport", default="identity", choices=("identity", "toy", "external"))
    p.add_argument("--paraphrase-url")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("eval", help="run a full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--paraphrase-url")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("strip-metadata", help="remove ancillary container segments")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_strip)

    p = sub.add_parser("dump-key-fourier", help="render a ring key's spectrum planes")
    p.add_argument("--key", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(fn=cmd_dump_key)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "detect" and args.tau is None and not args.calibration:
        parser.error("detect needs --tau or --calibration")
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

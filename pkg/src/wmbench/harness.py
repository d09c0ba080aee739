"""Experiment harness: dataset ingestion, threshold calibration, sweeps.

A run covers scheme x attack-grid x corpus.  Latent-space schemes get a
generated corpus (one image per seeded latent, with the unwatermarked
generation of the same latent as reference); the pixel-domain scheme
watermarks the ingested dataset.  Thresholds come from an order statistic
over unwatermarked negatives so the empirical false-positive rate stays
at or below the target.  Reports are byte-identical across reruns with an
equal config and seed.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .attacks import AttackServiceError, AttackSpec, ParaphraseClient, apply_attack
from .imaging import Image, center_crop_square, derive_seed, load_image, resize_image
from .transport import IdentityTransport, sample_latent
from .watermark_core import WatermarkKey, generate_key, scheme_statistic
from .wm_gaussianshading import ShadingParams, gs_embed
from .wm_treering import decode_ring_key, tr_embed_latent

__all__ = [
    "ExperimentConfig",
    "CalibrationRecord",
    "ReportRow",
    "ingest_dataset",
    "calibrate_threshold",
    "run_experiment",
    "default_attack_grid",
    "spearman",
]

LATENT_SCHEMES = ("treering", "gaussianshading")
VP_STRENGTHS = (0.2, 0.4, 0.6, 0.8, 1.0)
VP_GUIDANCE = 7.5  # held fixed during strength sweeps


def default_attack_grid() -> list[AttackSpec]:
    grid = [
        AttackSpec("brightness", {"factor": 2.0}),
        AttackSpec("rotation", {"angle_degrees": 45.0}),
        AttackSpec("jpeg", {"quality": 50}),
        AttackSpec("noise", {"sigma": 0.05}),
    ]
    grid += [
        AttackSpec("paraphrase", {"s": s, "gs": VP_GUIDANCE, "backend": "surrogate"})
        for s in VP_STRENGTHS
    ]
    return grid


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str
    output_dir: str
    resize_to: int = 512
    schemes: tuple[str, ...] = ("dwtdctsvd", "treering", "gaussianshading")
    attacks: tuple[AttackSpec, ...] = field(default_factory=lambda: tuple(default_attack_grid()))
    n_images: int = 50
    seed: int = 0
    fpr_target: float = 0.01
    n_negatives: int = 500
    workers: int = 0  # 0 = logical CPU count; results are worker-invariant
    paraphrase_url: str | None = None

    def __post_init__(self):
        if self.n_images < 1:
            raise ValueError("n_images must be at least 1")
        if not (0.0 < self.fpr_target < 1.0):
            raise ValueError("fpr_target must lie strictly inside (0, 1)")
        if self.resize_to < 128:
            raise ValueError("resize_to below 128 cannot host every scheme")

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        path = Path(path)
        raw = json.loads(path.read_text())
        attacks = raw.pop("attacks", None)
        if attacks is not None:
            specs = []
            for entry in attacks:
                entry = dict(entry)
                kind = entry.pop("kind")
                specs.append(AttackSpec(kind, entry))
            raw["attacks"] = tuple(specs)
        if "schemes" in raw:
            raw["schemes"] = tuple(raw["schemes"])
        for field_name in ("dataset_dir", "output_dir"):
            if field_name in raw and not Path(raw[field_name]).is_absolute():
                raw[field_name] = str((path.parent / raw[field_name]).resolve())
        return ExperimentConfig(**raw)


@dataclass(frozen=True)
class CalibrationRecord:
    scheme_id: str
    tau: float
    fpr_target: float
    n_negatives: int
    negative_statistic_quantiles: tuple[tuple[float, float], ...]
    degenerate: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "scheme_id": self.scheme_id,
            "tau": self.tau,
            "fpr_target": self.fpr_target,
            "n_negatives": self.n_negatives,
            "negative_statistic_quantiles": [list(q) for q in self.negative_statistic_quantiles],
            "degenerate": self.degenerate,
        }, indent=2)

    @staticmethod
    def from_json(text: str) -> "CalibrationRecord":
        raw = json.loads(text)
        raw["negative_statistic_quantiles"] = tuple(
            (float(a), float(b)) for a, b in raw["negative_statistic_quantiles"]
        )
        return CalibrationRecord(**raw)


@dataclass(frozen=True)
class ReportRow:
    scheme: str
    attack: str
    params: str
    n_images: int
    mean_statistic: float
    eta: float
    tau: float
    mmd: float
    psnr_mean: float
    ssim_mean: float


def ingest_dataset(dataset_dir, resize_to: int, n_images: int, seed: int) -> list[Image]:
    """Deterministic selection: lexicographic sort, seeded shuffle, take n."""
    paths = sorted(
        p for p in Path(dataset_dir).iterdir()
        if p.suffix.lower() in (".png", ".ppm") and p.is_file()
    )
    if len(paths) < n_images:
        raise ValueError(
            f"dataset {dataset_dir} holds {len(paths)} usable images, need {n_images}"
        )
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(paths))
    chosen = [paths[i] for i in order[:n_images]]
    out = []
    for p in chosen:
        img = center_crop_square(load_image(p))
        out.append(resize_image(img, resize_to, resize_to))
    return out


def calibrate_threshold(scheme_id: str, negative_statistics, fpr_target: float) -> CalibrationRecord:
    stats = np.sort(np.asarray(list(negative_statistics), dtype=np.float64))
    n = stats.size
    if n < 100:
        raise ValueError(f"calibration needs at least 100 negatives, got {n}")
    k = math.ceil((1.0 - fpr_target) * n)
    # one ulp above the k-th order statistic: ties break upward, so the
    # empirical false-positive count can never exceed floor(fpr * n)
    tau = float(np.nextafter(stats[k - 1], np.inf))
    quantiles = tuple(
        (q, float(np.quantile(stats, q))) for q in (0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0)
    )
    degenerate = bool(stats[0] == stats[-1])
    return CalibrationRecord(
        scheme_id=scheme_id,
        tau=tau,
        fpr_target=fpr_target,
        n_negatives=int(n),
        negative_statistic_quantiles=quantiles,
        degenerate=degenerate,
    )


def spearman(xs, ys) -> float:
    """Rank correlation with average ranks on ties."""

    def ranks(vals):
        vals = np.asarray(vals, dtype=np.float64)
        order = np.argsort(vals, kind="stable")
        r = np.empty(len(vals))
        i = 0
        while i < len(vals):
            j = i
            while j + 1 < len(vals) and vals[order[j + 1]] == vals[order[i]]:
                j += 1
            r[order[i:j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return r

    rx, ry = ranks(xs), ranks(ys)
    sx, sy = rx.std(), ry.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


# ---------------------------------------------------------------------------
# experiment internals

def _pmap(fn, items, workers: int):
    if workers < 1:
        workers = os.cpu_count() or 1
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf"
    return f"{v:.10g}"


@dataclass
class _SchemeContext:
    scheme: str
    key: WatermarkKey
    transport: object | None
    originals: list[Image]
    watermarked: list[Image]
    calibration: CalibrationRecord


def _build_scheme_context(cfg: ExperimentConfig, scheme: str, dataset: list[Image]) -> _SchemeContext:
    key = generate_key(scheme, derive_seed(cfg.seed, scheme, "key"))
    if scheme in LATENT_SCHEMES:
        transport = IdentityTransport()
        originals, watermarked = [], []
        for i in range(cfg.n_images):
            latent_seed = derive_seed(cfg.seed, scheme, "latent", i)
            z = sample_latent(latent_seed)
            originals.append(transport.generate(z))
            if scheme == "treering":
                watermarked.append(transport.generate(tr_embed_latent(decode_ring_key(key), z)))
            else:
                _, img = gs_embed(key, ShadingParams(), latent_seed, transport)
                watermarked.append(img)
        negative_stats = [
            scheme_statistic(key, transport.generate(
                sample_latent(derive_seed(cfg.seed, scheme, "negative", i))), transport=transport)
            for i in range(cfg.n_negatives)
        ]
    else:
        transport = None
        originals = dataset[:cfg.n_images]
        watermarked = _pmap(lambda img: _embed_pixel_scheme(key, img), originals, cfg.workers)
        negatives = _negative_images(cfg)
        negative_stats = _pmap(lambda img: scheme_statistic(key, img), negatives, cfg.workers)
    calibration = calibrate_threshold(scheme, negative_stats, cfg.fpr_target)
    return _SchemeContext(scheme, key, transport, originals, watermarked, calibration)


def _embed_pixel_scheme(key: WatermarkKey, img: Image) -> Image:
    from .watermark_core import scheme_embed

    return scheme_embed(key, img)


def _negative_images(cfg: ExperimentConfig) -> list[Image]:
    """Unwatermarked negatives from the tail of the shuffled dataset.

    When the dataset cannot supply n_images + n_negatives distinct files the
    tail wraps around; repeated statistics are legitimate calibration input,
    only less granular.
    """
    paths = sorted(
        p for p in Path(cfg.dataset_dir).iterdir()
        if p.suffix.lower() in (".png", ".ppm") and p.is_file()
    )
    order = np.random.Generator(np.random.PCG64(cfg.seed)).permutation(len(paths))
    tail = [paths[i] for i in order[cfg.n_images:]]
    chosen = []
    idx = 0
    while len(chosen) < cfg.n_negatives:
        pool = tail if tail else [paths[i] for i in order]
        chosen.append(pool[idx % len(pool)])
        idx += 1
    return [
        resize_image(center_crop_square(load_image(p)), cfg.resize_to, cfg.resize_to)
        for p in chosen
    ]


def _detect_stat(ctx: _SchemeContext, img: Image) -> float:
    if ctx.transport is not None:
        return scheme_statistic(ctx.key, img, transport=ctx.transport)
    return scheme_statistic(ctx.key, img)


def _row_specs(spec: AttackSpec) -> list[AttackSpec]:
    # the rotation row is the mean of the +angle and -angle runs
    if spec.kind == "rotation":
        angle = abs(spec.params["angle_degrees"])
        return [
            replace(spec, params={"angle_degrees": angle}),
            replace(spec, params={"angle_degrees": -angle}),
        ]
    return [spec]


@dataclass
class ExperimentResult:
    rows: list[ReportRow]
    csv_path: Path
    markdown_path: Path
    per_image_dir: Path
    failures: list[str]
    skipped: list[str]

    @property
    def failure_fraction(self) -> float:
        total = sum(r.n_images for r in self.rows) + len(self.failures)
        return len(self.failures) / total if total else 0.0


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_image_dir = out_dir / "per_image"
    per_image_dir.mkdir(exist_ok=True)

    needs_dataset = any(s not in LATENT_SCHEMES for s in cfg.schemes)
    dataset = ingest_dataset(cfg.dataset_dir, cfg.resize_to, cfg.n_images, cfg.seed) if needs_dataset else []

    rows: list[ReportRow] = []
    failures: list[str] = []
    skipped: list[str] = []

    service_ok = None
    for scheme in cfg.schemes:
        ctx = _build_scheme_context(cfg, scheme, dataset)
        rows.append(_evaluate_row(cfg, ctx, "pre_attack", None, ctx.watermarked,
                                  per_image_dir, failures))
        for spec in cfg.attacks:
            label = spec.label()
            if spec.kind == "paraphrase" and spec.params.get("backend") == "external":
                if service_ok is None:
                    service_ok = _probe_service(cfg.paraphrase_url)
                if not service_ok:
                    skipped.append(f"{scheme}/{label}: paraphrase service unavailable")
                    continue
            sub_rows = []
            for sub in _row_specs(spec):
                def attack_one(pair):
                    i, img = pair
                    seeded = replace(sub, seed=derive_seed(cfg.seed, scheme, sub.label(), i))
                    try:
                        return apply_attack(seeded, img, service_url=cfg.paraphrase_url), None
                    except AttackServiceError as e:
                        raise e
                    except Exception as e:  # per-image failures never abort the sweep
                        return None, f"{scheme}/{label}/image{i}: {e}"

                try:
                    outcomes = _pmap(attack_one, list(enumerate(ctx.watermarked)), cfg.workers)
                except AttackServiceError as e:
                    skipped.append(f"{scheme}/{label}: {e}")
                    break
                attacked = [img for img, _ in outcomes]
                failures.extend(msg for _, msg in outcomes if msg)
                sub_rows.append(_evaluate_row(cfg, ctx, sub.label(), sub, attacked,
                                              per_image_dir, failures))
            if sub_rows:
                rows.append(_merge_rows(scheme, label, spec, sub_rows))

    csv_path = out_dir / "report.csv"
    md_path = out_dir / "report.md"
    _write_csv(csv_path, rows)
    _write_markdown(md_path, cfg, rows, skipped)
    if skipped:
        (out_dir / "skipped.txt").write_text("\n".join(skipped) + "\n")
    return ExperimentResult(rows, csv_path, md_path, per_image_dir, failures, skipped)


def _probe_service(url: str | None) -> bool:
    if not url:
        return False
    try:
        return ParaphraseClient(url, timeout=5.0).health().get("status") == "ok"
    except AttackServiceError:
        return False


def _evaluate_row(cfg: ExperimentConfig, ctx: _SchemeContext, label: str,
                  spec: AttackSpec | None, images: list[Image | None],
                  per_image_dir: Path, failures: list[str]) -> ReportRow:
    def score_one(pair):
        i, img = pair
        if img is None:
            return None
        try:
            stat = _detect_stat(ctx, img)
        except Exception as e:
            return f"{ctx.scheme}/{label}/image{i}: {e}"
        return (i, stat, metrics.psnr(ctx.originals[i], img), metrics.ssim(ctx.originals[i], img), img)

    stats, psnrs, ssims, lines = [], [], [], []
    detected = 0
    usable = []
    for outcome in _pmap(score_one, list(enumerate(images)), cfg.workers):
        if outcome is None:
            continue
        if isinstance(outcome, str):
            failures.append(outcome)
            continue
        i, stat, p, s, img = outcome
        hit = stat >= ctx.calibration.tau
        detected += int(hit)
        stats.append(stat)
        psnrs.append(p)
        ssims.append(s)
        usable.append(img)
        lines.append(f"image{i:04d},{_fmt(stat)},{int(hit)},{_fmt(p)},{_fmt(s)}")

    name = f"{ctx.scheme}__{label}".replace("(", "_").replace(")", "").replace(",", "_").replace("=", "-")
    (per_image_dir / f"{name}.csv").write_text(
        "image_id,statistic,detected,psnr,ssim\n" + "\n".join(lines) + "\n"
    )
    n = len(stats)
    mmd = metrics.mmd_distortion(ctx.originals[:len(images)], usable) if n >= 2 else float("nan")
    finite_psnrs = [p for p in psnrs if not math.isinf(p)]
    psnr_mean = float(np.mean(finite_psnrs)) if finite_psnrs else float("inf")
    return ReportRow(
        scheme=ctx.scheme,
        attack=label,
        params="" if spec is None else json.dumps(spec.params, sort_keys=True),
        n_images=n,
        mean_statistic=float(np.mean(stats)) if stats else float("nan"),
        eta=detected / n if n else float("nan"),
        tau=ctx.calibration.tau,
        mmd=mmd,
        psnr_mean=psnr_mean,
        ssim_mean=float(np.mean(ssims)) if ssims else float("nan"),
    )


def _merge_rows(scheme: str, label: str, spec: AttackSpec, sub_rows: list[ReportRow]) -> ReportRow:
    if len(sub_rows) == 1:
        return sub_rows[0]
    return ReportRow(
        scheme=scheme,
        attack=label,
        params=json.dumps(spec.params, sort_keys=True),
        n_images=sub_rows[0].n_images,
        mean_statistic=float(np.mean([r.mean_statistic for r in sub_rows])),
        eta=float(np.mean([r.eta for r in sub_rows])),
        tau=sub_rows[0].tau,
        mmd=float(np.mean([r.mmd for r in sub_rows])),
        psnr_mean=float(np.mean([r.psnr_mean for r in sub_rows])),
        ssim_mean=float(np.mean([r.ssim_mean for r in sub_rows])),
    )


def _write_csv(path: Path, rows: list[ReportRow]) -> None:
    out = ["scheme,attack,params,n_images,mean_statistic,eta,tau,mmd,psnr_mean,ssim_mean"]
    for r in rows:
        out.append(",".join([
            r.scheme, r.attack, f'"{r.params}"', str(r.n_images),
            _fmt(r.mean_statistic), _fmt(r.eta), _fmt(r.tau), _fmt(r.mmd),
            _fmt(r.psnr_mean), _fmt(r.ssim_mean),
        ]))
    path.write_text("\n".join(out) + "\n")


_COLUMN_ORDER = ["pre_attack", "brightness", "rotation", "jpeg", "noise"]


def _column_key(attack_label: str):
    for i, prefix in enumerate(_COLUMN_ORDER):
        if attack_label.startswith(prefix):
            return (i, 0.0)
    if attack_label.startswith("paraphrase"):
        tag = attack_label.split("s=")[-1].split(",")[0].rstrip(")")
        try:
            return (len(_COLUMN_ORDER), float(tag))
        except ValueError:
            return (len(_COLUMN_ORDER), 99.0)
    return (len(_COLUMN_ORDER) + 1, 0.0)


def _write_markdown(path: Path, cfg: ExperimentConfig, rows: list[ReportRow],
                    skipped: list[str]) -> None:
    schemes = list(dict.fromkeys(r.scheme for r in rows))
    labels = sorted(dict.fromkeys(r.attack for r in rows), key=_column_key)
    by_key = {(r.scheme, r.attack): r for r in rows}
    header = "| scheme | " + " | ".join(labels) + " |"
    sep = "|" + "---|" * (len(labels) + 1)
    lines = ["# Watermark detection rate report", "", header, sep]
    for scheme in schemes:
        cells = []
        for label in labels:
            r = by_key.get((scheme, label))
            cells.append(_fmt(r.eta) if r else "-")
        lines.append(f"| {scheme} | " + " | ".join(cells) + " |")
    lines += [
        "",
        f"n_images={cfg.n_images}, resize_to={cfg.resize_to}, seed={cfg.seed}, "
        f"fpr_target={_fmt(cfg.fpr_target)}, n_negatives={cfg.n_negatives}",
        "rotation row is the mean of the +angle and -angle runs; "
        f"paraphrase sweeps hold gs={_fmt(VP_GUIDANCE)} fixed.",
    ]
    if skipped:
        lines += ["", "skipped rows:"] + [f"- {s}" for s in skipped]
    path.write_text("\n".join(lines) + "\n")

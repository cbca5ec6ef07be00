"""Command-line surface: build datasets, generate corpora, estimate, evaluate.

Exit codes for `estimate`: 0 success, 2 unreadable or unsupported JPEG,
3 dataset failure (unreadable file or parameter mismatch), 4 when nothing
could be estimated because the image's q2 factors exceed the dataset grid.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dctsim import reconstruct, standard_table
from .estimator import (
    DEGENERATE,
    OK,
    UNSUPPORTED,
    EstimationParams,
    EstimationResult,
    estimate,
)
from .jpegio import JpegError, PgmError, encode_baseline_gray, parse_jpeg, read_pgm, crop_center
from .refdata import DatasetFormatError, ReferenceDataset, build_reference, deserialize, serialize
from .types import GrayImage, QuantTable

EXIT_PARSE_FAILURE = 2
EXIT_DATASET_FAILURE = 3
EXIT_UNSUPPORTED_Q2 = 4

MANIFEST_NAME = "manifest.csv"
MANIFEST_FACTORS = 15


def _resolve_jobs(flag: int | None) -> int:
    env = os.environ.get("FQE_JOBS")
    if env is not None:
        try:
            jobs = int(env)
        except ValueError:
            raise click.ClickException(f"FQE_JOBS={env!r} is not an integer")
    else:
        jobs = flag if flag is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise click.ClickException("job count must be at least 1")
    return jobs


def _load_dataset(path: str) -> ReferenceDataset:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetFormatError(f"cannot read dataset {path}: {exc}") from exc
    return deserialize(blob)


def _params_from_flags(
    ds: ReferenceDataset, k: int, n: int, w: float, reg_variant: str, no_reg: bool
) -> EstimationParams:
    return EstimationParams(
        k=k,
        q1_max=ds.q1_max,
        n_candidates=n,
        w=w,
        reg_variant=reg_variant,
        regularize=not no_reg,
    )


@click.group()
@click.version_option(version=__version__, prog_name="fqe")
def main() -> None:
    """First quantization estimation for double-compressed JPEG images."""


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------


@main.command()
@click.option("--raw-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--q1-max", default=22, show_default=True)
@click.option("--k", default=15, show_default=True)
@click.option("--patch", default=64, show_default=True, help="Center-crop side.")
@click.option("--jobs", default=None, type=int, help="Worker processes (FQE_JOBS overrides).")
def build(raw_dir: str, out: str, q1_max: int, k: int, patch: int, jobs: int | None) -> None:
    """Build a reference dataset from a directory of PGM images."""
    paths = sorted(Path(raw_dir).glob("*.pgm"))
    patches: list[GrayImage] = []
    skipped = 0
    for path in paths:
        try:
            img = read_pgm(path.read_bytes())
            patches.append(crop_center(img, patch))
        except (PgmError, ValueError, OSError) as exc:
            skipped += 1
            click.echo(f"skipping {path.name}: {exc}", err=True)
    if not patches:
        raise click.ClickException(f"no usable PGM images in {raw_dir}")
    n_jobs = _resolve_jobs(jobs)
    click.echo(
        f"building from {len(patches)} patches ({skipped} skipped), "
        f"q1_max={q1_max} k={k}: {len(patches) * q1_max * q1_max} double compressions"
    )
    ds = build_reference(patches, q1_max=q1_max, k=k, jobs=n_jobs)
    blob = serialize(ds)
    Path(out).write_bytes(blob)
    total_dc = total_ac = 0
    for q1 in range(1, q1_max + 1):
        for q2 in range(1, q1_max + 1):
            sub = ds.sub(q1, q2)
            total_dc += len(sub.dc)
            total_ac += len(sub.ac)
            click.echo(f"q1={q1:>3} q2={q2:>3}: dc={len(sub.dc)} ac={len(sub.ac)}")
    click.echo(
        f"wrote {out}: {len(blob)} bytes, {total_dc} DC + {total_ac} AC records"
    )


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _result_rows(result: EstimationResult) -> list[dict]:
    dm = result.distances
    rows = []
    for i in range(dm.k):
        status = dm.status[i]
        raw = result.raw_estimates[i]
        est = result.estimates[i]
        raw_dist = float(dm.d[i][raw - 1]) if raw is not None else None
        est_dist = float(dm.d[i][est - 1]) if est is not None else None
        rows.append(
            {
                "position": i + 1,
                "q2": dm.q2[i],
                "status": status,
                "raw": raw,
                "estimate": est,
                "raw_distance": raw_dist,
                "estimate_distance": est_dist,
            }
        )
    return rows


def _params_dict(p: EstimationParams) -> dict:
    return {
        "k": p.k,
        "q1_max": p.q1_max,
        "n_candidates": p.n_candidates,
        "w": p.w,
        "reg_variant": p.reg_variant,
        "regularize": p.regularize,
    }


def _format_estimate(result: EstimationResult, fmt: str) -> str:
    rows = _result_rows(result)
    if fmt == "json":
        return json.dumps(
            {
                "params": _params_dict(result.params),
                "warnings": result.warnings,
                "positions": rows,
            },
            indent=2,
        )
    p = result.params
    buf = io.StringIO()
    buf.write(
        f"# k={p.k} n={p.n_candidates} w={p.w} reg_variant={p.reg_variant} "
        f"regularize={'on' if p.regularize else 'off'}\n"
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["position", "q2", "status", "raw", "estimate", "raw_distance", "estimate_distance"]
    )
    for row in rows:
        writer.writerow(
            [
                row["position"],
                row["q2"],
                row["status"],
                "" if row["raw"] is None else row["raw"],
                "" if row["estimate"] is None else row["estimate"],
                "" if row["raw_distance"] is None else repr(row["raw_distance"]),
                "" if row["estimate_distance"] is None else repr(row["estimate_distance"]),
            ]
        )
    return buf.getvalue().rstrip("\n")


@main.command("estimate")
@click.option("--image", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=15, show_default=True)
@click.option("--n", default=1000, show_default=True, help="Candidates per sub-dataset.")
@click.option("--w", default=0.92, show_default=True, help="Data-term weight.")
@click.option(
    "--reg-variant",
    default="reg3",
    show_default=True,
    type=click.Choice(["reg1", "reg2", "reg3"]),
)
@click.option("--no-reg", is_flag=True, help="Report raw argmin estimates only.")
@click.option(
    "--format", "fmt", default="json", show_default=True, type=click.Choice(["json", "csv"])
)
def estimate_cmd(
    image: str, dataset: str, k: int, n: int, w: float, reg_variant: str, no_reg: bool, fmt: str
) -> None:
    """Estimate the first quantization factors of one JPEG image."""
    try:
        ds = _load_dataset(dataset)
        params = _params_from_flags(ds, k, n, w, reg_variant, no_reg)
    except (DatasetFormatError, ValueError) as exc:
        click.echo(f"dataset error: {exc}", err=True)
        sys.exit(EXIT_DATASET_FAILURE)
    try:
        result = estimate(Path(image).read_bytes(), ds, params)
    except (JpegError, OSError) as exc:
        click.echo(f"cannot parse {image}: {exc}", err=True)
        sys.exit(EXIT_PARSE_FAILURE)
    except ValueError as exc:
        click.echo(f"dataset error: {exc}", err=True)
        sys.exit(EXIT_DATASET_FAILURE)
    click.echo(_format_estimate(result, fmt))
    statuses = result.distances.status
    if OK not in statuses and UNSUPPORTED in statuses:
        sys.exit(EXIT_UNSUPPORTED_Q2)


# ---------------------------------------------------------------------------
# make-corpus
# ---------------------------------------------------------------------------


def read_table_file(text: str) -> list[QuantTable]:
    """Parse explicit tables: 8 lines of 8 integers each, blank-line separated."""
    rows: list[list[int]] = []
    tables: list[QuantTable] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 8:
            raise ValueError(f"line {lineno}: expected 8 integers, got {len(parts)}")
        try:
            rows.append([int(x) for x in parts])
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer factor") from None
        if len(rows) == 8:
            tables.append(QuantTable(np.array(rows).reshape(64)))
            rows = []
    if rows:
        raise ValueError("trailing lines do not form a full 8x8 table")
    if not tables:
        raise ValueError("table file contains no tables")
    return tables


def _double_compress_file(patch: GrayImage, q1_table: QuantTable, q2_table: QuantTable) -> bytes:
    """File-path double compression: encode, decode to pixels, encode again."""
    first = parse_jpeg(encode_baseline_gray(patch, q1_table))
    pixels = reconstruct(first.coeffs, first.luma_table)
    return encode_baseline_gray(pixels, q2_table)


@main.command("make-corpus")
@click.option("--raw-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--qf1", default=None, help="Comma-separated first-compression quality factors.")
@click.option(
    "--tables",
    default=None,
    type=click.Path(exists=True, dir_okay=False),
    help="File of explicit 8x8 first-compression tables.",
)
@click.option("--qf2", required=True, type=int, help="Second-compression quality factor.")
@click.option("--patch", default=64, show_default=True)
@click.option(
    "--crop", default="center", show_default=True, type=click.Choice(["center", "random"])
)
@click.option("--seed", default=None, type=int, help="Required for random crops.")
def make_corpus(
    raw_dir: str,
    out_dir: str,
    qf1: str | None,
    tables: str | None,
    qf2: int,
    patch: int,
    crop: str,
    seed: int | None,
) -> None:
    """Generate a double-compressed corpus with a ground-truth manifest."""
    if (qf1 is None) == (tables is None):
        raise click.ClickException("exactly one of --qf1 or --tables is required")
    if crop == "random" and seed is None:
        raise click.ClickException("--seed is required for random crops")
    if not 1 <= qf2 <= 100:
        raise click.ClickException("--qf2 must be in [1, 100]")

    if qf1 is not None:
        try:
            qfs = [int(x) for x in qf1.split(",") if x.strip()]
        except ValueError:
            raise click.ClickException(f"bad --qf1 list {qf1!r}")
        if not qfs or any(not 1 <= q <= 100 for q in qfs):
            raise click.ClickException("--qf1 values must be in [1, 100]")
        sources = [(f"qf{q:02d}", standard_table(q)) for q in qfs]
        spec_desc = f"qf1={','.join(str(q) for q in qfs)}"
    else:
        try:
            parsed_tables = read_table_file(Path(tables).read_text())
        except ValueError as exc:
            raise click.ClickException(f"bad table file {tables}: {exc}")
        sources = [(f"tbl{i:02d}", t) for i, t in enumerate(parsed_tables)]
        spec_desc = f"tables={Path(tables).name}"

    raw_paths = sorted(Path(raw_dir).glob("*.pgm"))
    if not raw_paths:
        raise click.ClickException(f"no PGM images in {raw_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q2_table = standard_table(qf2)
    rng = np.random.default_rng(seed)

    rows: list[list] = []
    for path in raw_paths:
        img = read_pgm(path.read_bytes())
        if crop == "center":
            x = (img.width - patch) // 2
            y = (img.height - patch) // 2
            cropped = crop_center(img, patch)
        else:
            x = int(rng.integers(0, img.width - patch + 1))
            y = int(rng.integers(0, img.height - patch + 1))
            cropped = GrayImage(img.pixels[y : y + patch, x : x + patch].copy())
        for label, q1_table in sources:
            name = f"{path.stem}__{label}.jpg"
            (out / name).write_bytes(_double_compress_file(cropped, q1_table, q2_table))
            truth = q1_table.to_zigzag()[:MANIFEST_FACTORS]
            rows.append([name, label, x, y, *[int(v) for v in truth]])

    with (out / MANIFEST_NAME).open("w", newline="") as fh:
        fh.write(f"# fqe-corpus {spec_desc} qf2={qf2} patch={patch} crop={crop} seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["filename", "label", "crop_x", "crop_y"]
            + [f"q1_{i}" for i in range(1, MANIFEST_FACTORS + 1)]
        )
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} images and {MANIFEST_NAME} to {out_dir}")


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def read_manifest(path: Path) -> list[dict]:
    entries = []
    with path.open() as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    required = {"filename", "label"} | {f"q1_{i}" for i in range(1, MANIFEST_FACTORS + 1)}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise ValueError(f"manifest {path} is missing required columns")
    for row in reader:
        entries.append(
            {
                "filename": row["filename"],
                "label": row["label"],
                "truth": [int(row[f"q1_{i}"]) for i in range(1, MANIFEST_FACTORS + 1)],
            }
        )
    if not entries:
        raise ValueError(f"manifest {path} lists no images")
    return entries


_EVAL_CTX: dict = {}


def _eval_one(args: tuple[str, list[int]]) -> dict:
    """Estimate one corpus file; runs in the parent or a forked worker."""
    filename, truth = args
    ds = _EVAL_CTX["ds"]
    params = _EVAL_CTX["params"]
    corpus = _EVAL_CTX["corpus"]
    result = estimate((corpus / filename).read_bytes(), ds, params)
    dm = result.distances
    return {
        "filename": filename,
        "status": dm.status,
        "raw": result.raw_estimates,
        "reg": result.estimates,
        "truth": truth[: params.k],
    }


def evaluate_corpus(
    corpus_dir: Path, ds: ReferenceDataset, params: EstimationParams, jobs: int = 1
) -> dict:
    """Run the estimator over a corpus and assemble the accuracy report."""
    entries = read_manifest(corpus_dir / MANIFEST_NAME)
    if params.k > MANIFEST_FACTORS:
        raise ValueError(f"manifest carries {MANIFEST_FACTORS} factors, requested k={params.k}")
    for e in entries:
        if not (corpus_dir / e["filename"]).is_file():
            raise ValueError(f"manifest lists missing file {e['filename']}")

    _EVAL_CTX.update(ds=ds, params=params, corpus=corpus_dir)
    work = [(e["filename"], e["truth"]) for e in entries]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_eval_one, work, chunksize=8))
        else:
            outcomes = [_eval_one(item) for item in work]
    finally:
        _EVAL_CTX.clear()

    labels = sorted({e["label"] for e in entries})
    by_label = {e["filename"]: e["label"] for e in entries}
    k = params.k

    def bucket() -> dict:
        return {
            "total": np.zeros(k, dtype=int),
            "degenerate": np.zeros(k, dtype=int),
            "unsupported": np.zeros(k, dtype=int),
            "correct_raw": np.zeros(k, dtype=int),
            "correct_reg": np.zeros(k, dtype=int),
        }

    per_label = {label: bucket() for label in labels}
    for outcome in outcomes:
        acc = per_label[by_label[outcome["filename"]]]
        for i in range(k):
            acc["total"][i] += 1
            status = outcome["status"][i]
            if status == DEGENERATE:
                acc["degenerate"][i] += 1
            elif status == UNSUPPORTED:
                acc["unsupported"][i] += 1
            else:
                truth = outcome["truth"][i]
                if outcome["raw"][i] == truth:
                    acc["correct_raw"][i] += 1
                if outcome["reg"][i] == truth:
                    acc["correct_reg"][i] += 1

    def summarize(acc: dict) -> dict:
        positions = []
        for i in range(k):
            total = int(acc["total"][i])
            deg = int(acc["degenerate"][i])
            uns = int(acc["unsupported"][i])
            predictable = total - deg - uns
            row = {
                "position": i + 1,
                "total": total,
                "degenerate": deg,
                "unsupported": uns,
                "predictable": predictable,
                "correct_raw": int(acc["correct_raw"][i]),
                "correct_reg": int(acc["correct_reg"][i]),
                "accuracy_raw": (acc["correct_raw"][i] / predictable) if predictable else None,
                "accuracy_reg": (acc["correct_reg"][i] / predictable) if predictable else None,
                "degenerate_pct": deg / total if total else None,
            }
            positions.append(row)
        total = int(acc["total"].sum())
        deg = int(acc["degenerate"].sum())
        uns = int(acc["unsupported"].sum())
        predictable = total - deg - uns
        overall = {
            "total": total,
            "degenerate": deg,
            "unsupported": uns,
            "predictable": predictable,
            "correct_raw": int(acc["correct_raw"].sum()),
            "correct_reg": int(acc["correct_reg"].sum()),
            "accuracy_raw": (acc["correct_raw"].sum() / predictable) if predictable else None,
            "accuracy_reg": (acc["correct_reg"].sum() / predictable) if predictable else None,
            "degenerate_pct": deg / total if total else None,
        }
        return {"positions": positions, "overall": overall}

    report_labels = {label: summarize(per_label[label]) for label in labels}
    combined = bucket()
    for acc in per_label.values():
        for key in combined:
            combined[key] += acc[key]
    return {
        "params": _params_dict(params),
        "dataset": {
            "q1_max": ds.q1_max,
            "k": ds.k,
            "patch_side": ds.patch_side,
            "source_count": ds.source_count,
        },
        "images": len(entries),
        "labels": report_labels,
        "overall": summarize(combined),
    }


def report_to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "label", "position", "total", "degenerate", "unsupported", "predictable",
            "correct_raw", "accuracy_raw", "correct_reg", "accuracy_reg", "degenerate_pct",
        ]
    )

    def fmt(x) -> str:
        return "" if x is None else f"{x:.6f}"

    def emit(label: str, section: dict) -> None:
        for row in section["positions"]:
            writer.writerow(
                [
                    label, row["position"], row["total"], row["degenerate"],
                    row["unsupported"], row["predictable"], row["correct_raw"],
                    fmt(row["accuracy_raw"]), row["correct_reg"],
                    fmt(row["accuracy_reg"]), fmt(row["degenerate_pct"]),
                ]
            )
        o = section["overall"]
        writer.writerow(
            [
                label, "all", o["total"], o["degenerate"], o["unsupported"],
                o["predictable"], o["correct_raw"], fmt(o["accuracy_raw"]),
                o["correct_reg"], fmt(o["accuracy_reg"]), fmt(o["degenerate_pct"]),
            ]
        )

    for label, section in report["labels"].items():
        emit(label, section)
    emit("ALL", report["overall"])
    return buf.getvalue()


@main.command("evaluate")
@click.option("--corpus-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=15, show_default=True)
@click.option("--n", default=1000, show_default=True)
@click.option("--w", default=0.92, show_default=True)
@click.option(
    "--reg-variant",
    default="reg3",
    show_default=True,
    type=click.Choice(["reg1", "reg2", "reg3"]),
)
@click.option("--no-reg", is_flag=True)
@click.option("--jobs", default=None, type=int, help="Worker processes (FQE_JOBS overrides).")
@click.option("--out-dir", default=".", show_default=True, type=click.Path(file_okay=False))
def evaluate_cmd(
    corpus_dir: str,
    dataset: str,
    k: int,
    n: int,
    w: float,
    reg_variant: str,
    no_reg: bool,
    jobs: int | None,
    out_dir: str,
) -> None:
    """Evaluate estimation accuracy over a corpus with a manifest."""
    try:
        ds = _load_dataset(dataset)
        params = _params_from_flags(ds, k, n, w, reg_variant, no_reg)
        report = evaluate_corpus(Path(corpus_dir), ds, params, jobs=_resolve_jobs(jobs))
    except (DatasetFormatError, JpegError, ValueError) as exc:
        raise click.ClickException(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    (out / "report.csv").write_text(report_to_csv(report))
    for label, section in report["labels"].items():
        o = section["overall"]
        acc_raw = "n/a" if o["accuracy_raw"] is None else f"{o['accuracy_raw']:.3f}"
        acc_reg = "n/a" if o["accuracy_reg"] is None else f"{o['accuracy_reg']:.3f}"
        click.echo(
            f"{label}: raw={acc_raw} reg={acc_reg} "
            f"predictable={o['predictable']}/{o['total']}"
        )
    o = report["overall"]["overall"]
    acc_raw = "n/a" if o["accuracy_raw"] is None else f"{o['accuracy_raw']:.3f}"
    acc_reg = "n/a" if o["accuracy_reg"] is None else f"{o['accuracy_reg']:.3f}"
    click.echo(f"ALL: raw={acc_raw} reg={acc_reg} predictable={o['predictable']}/{o['total']}")
    click.echo(f"reports written to {out / 'report.csv'} and {out / 'report.json'}")

"""Command-line pipeline: phantom generation, projection, both
reconstructions, training, and evaluation, with files as the interface
between stages.

Exit codes: 0 success, 2 usage error, 3 missing prerequisite,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .metrics import evaluate
from .nn import TrainingDivergedError
from .phantom import PhantomSpec, generate_dataset
from .pipeline import SplitManifest, TrainConfig, reconstruct_dbp, train
from .projection import ProjectionGeometry, Sinogram, build_bp_tensor, fbp, radon, uniform_angles

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write_config(out_dir: Path, subcommand: str, values: dict) -> None:
    lines = [f"subcommand={subcommand}"]
    lines += [f"{key}={values[key]}" for key in sorted(values)]
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _scan_files(data_dir: Path, prefix: str) -> list[tuple[int, Path]]:
    """Numbered stage outputs ``<prefix>_XXXX.dbpt`` sorted by scan id."""
    found = []
    pattern = re.compile(rf"{prefix}_(\d{{4}})\.dbpt$")
    for path in sorted(data_dir.glob(f"{prefix}_*.dbpt")):
        m = pattern.fullmatch(path.name)
        if m:
            found.append((int(m.group(1)), path))
    return found


def _require_dir(path: Path) -> Path:
    if not path.is_dir():
        raise CliError(EXIT_MISSING, f"missing data directory: {path}")
    return path


def _require_scans(data_dir: Path, prefix: str) -> list[tuple[int, Path]]:
    scans = _scan_files(data_dir, prefix)
    if not scans:
        raise CliError(
            EXIT_MISSING, f"no {prefix}_*.dbpt files found in {data_dir}"
        )
    return scans


def _load_pair(scans_a, scans_b, name_b: str):
    """Align two stage outputs by scan id; fail naming the first gap."""
    by_id = dict(scans_b)
    for sid, _ in scans_a:
        if sid not in by_id:
            raise CliError(
                EXIT_MISSING, f"missing prerequisite file: {name_b}_{sid:04d}.dbpt"
            )
    return by_id


def cmd_gen_data(args) -> int:
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot create output directory: {exc}")
    try:
        lo, hi = (int(part) for part in args.grains.split(":"))
        spec = PhantomSpec(size=args.size, grain_range=(lo, hi), seed=args.seed)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"invalid phantom settings: {exc}")
    images = generate_dataset(spec, args.count, args.seed)
    for k, image in enumerate(images):
        dio.save_tensor(out_dir / f"phantom_{k:04d}.dbpt", image)
    _write_config(out_dir, "gen-data", {
        "out": args.out, "count": args.count, "size": args.size,
        "seed": args.seed, "grains": args.grains,
    })
    return 0


def cmd_project(args) -> int:
    data_dir = _require_dir(Path(args.data))
    scans = _require_scans(data_dir, "phantom")
    if args.views < 1:
        raise CliError(EXIT_USAGE, f"--views must be >= 1, got {args.views}")
    angles = uniform_angles(args.views)
    for sid, path in scans:
        image = dio.load_tensor(path)
        geometry = ProjectionGeometry(image_size=image.shape[0])
        sino = radon(image, angles, geometry)
        dio.save_tensor(data_dir / f"sino_{sid:04d}.dbpt", sino.data)
    _write_config(data_dir, "project", {"data": args.data, "views": args.views})
    return 0


def cmd_fbp(args) -> int:
    data_dir = _require_dir(Path(args.data))
    scans = _require_scans(data_dir, "sino")
    for sid, path in scans:
        data = dio.load_tensor(path)
        sino = Sinogram(data=data, angles=uniform_angles(data.shape[1]))
        geometry = ProjectionGeometry(image_size=data.shape[0])
        dio.save_tensor(data_dir / f"fbp_{sid:04d}.dbpt", fbp(sino, geometry))
    _write_config(data_dir, "fbp", {"data": args.data})
    return 0


def cmd_train(args) -> int:
    data_dir = _require_dir(Path(args.data))
    phantoms = _require_scans(data_dir, "phantom")
    sinos = _require_scans(data_dir, "sino")
    sino_by_id = _load_pair(phantoms, sinos, "sino")

    images, tensors = [], []
    geometry = None
    for sid, path in phantoms:
        image = dio.load_tensor(path)
        sino_data = dio.load_tensor(sino_by_id[sid])
        if geometry is None:
            geometry = ProjectionGeometry(image_size=image.shape[0])
        sino = Sinogram(data=sino_data, angles=uniform_angles(sino_data.shape[1]))
        images.append(image)
        tensors.append(build_bp_tensor(sino, geometry))

    config = (TrainConfig.paper(seed=args.seed) if args.preset == "paper"
              else TrainConfig.lite(seed=args.seed))
    manifest = SplitManifest.from_count(len(phantoms))
    model_path = Path(args.out)
    log_path = Path(str(model_path) + ".log")
    log_path.unlink(missing_ok=True)  # fresh run appends from empty
    try:
        net, _ = train(tensors, images, manifest, config, log_path=log_path)
    except TrainingDivergedError as exc:
        raise CliError(EXIT_NUMERICAL, f"training diverged: {exc}")
    dio.save_checkpoint(model_path, net, size=geometry.image_size,
                        seed=config.seed, epochs=config.epochs)
    _write_config(model_path.parent, "train", {
        "data": args.data, "preset": args.preset,
        "out": args.out, "seed": args.seed,
        "epochs": config.epochs, "batch_size": config.batch_size,
        "patches_per_scan": config.patches_per_scan,
        "depth": config.depth, "width": config.width,
        "lr_start": config.lr_start, "lr_end": config.lr_end,
        "patch": config.patch,
    })
    return 0


def cmd_infer(args) -> int:
    model_path = Path(args.model)
    if not model_path.is_file():
        raise CliError(EXIT_MISSING, f"missing model file: {model_path}")
    data_dir = _require_dir(Path(args.data))
    scans = _require_scans(data_dir, "sino")
    net, meta = dio.load_checkpoint(model_path)
    for sid, path in scans:
        data = dio.load_tensor(path)
        if data.shape[1] != net.in_channels:
            raise CliError(
                EXIT_USAGE,
                f"sinogram {path.name} has {data.shape[1]} views but the "
                f"checkpoint expects {net.in_channels}",
            )
        sino = Sinogram(data=data, angles=uniform_angles(data.shape[1]))
        geometry = ProjectionGeometry(image_size=meta["size"])
        dio.save_tensor(data_dir / f"dbp_{sid:04d}.dbpt",
                        reconstruct_dbp(sino, net, geometry))
    _write_config(data_dir, "infer", {"model": args.model, "data": args.data})
    return 0


def cmd_eval(args) -> int:
    data_dir = _require_dir(Path(args.data))
    phantoms = _require_scans(data_dir, "phantom")
    fbps = _load_pair(phantoms, _scan_files(data_dir, "fbp"), "fbp")
    dbps = _load_pair(phantoms, _scan_files(data_dir, "dbp"), "dbp")

    manifest = SplitManifest.from_count(len(phantoms))
    test_ids = set(manifest.test_ids)
    targets, fbp_pred, dbp_pred = {}, {}, {}
    for sid, path in phantoms:
        if sid in test_ids:
            targets[sid] = dio.load_tensor(path)
            fbp_pred[sid] = dio.load_tensor(fbps[sid])
            dbp_pred[sid] = dio.load_tensor(dbps[sid])

    report = evaluate({"fbp": fbp_pred, "dbp": dbp_pred}, targets)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_csv(), encoding="utf-8")
    if args.export_pgm:
        for sid in sorted(targets):
            sep = np.ones((targets[sid].shape[0], 2))
            strip = np.hstack([
                np.clip(fbp_pred[sid], 0.0, 1.0), sep,
                np.clip(dbp_pred[sid], 0.0, 1.0), sep,
                targets[sid],
            ])
            dio.export_pgm(data_dir / f"compare_{sid:04d}.pgm", strip)
    _write_config(report_path.parent, "eval", {
        "data": args.data, "report": args.report,
        "export_pgm": bool(args.export_pgm),
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbpct",
        description="Sparse-view CT reconstruction pipeline "
                    "(filtered and deep back projection).",
        epilog="exit codes: 0 success, 2 usage error, "
               "3 missing prerequisite, 4 numerical failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic phantom dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grains", default="6:14", help="grain count range LO:HI")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("project", help="forward project phantoms to sinograms")
    p.add_argument("--data", required=True)
    p.add_argument("--views", type=int, default=16)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("fbp", help="filtered back projection of all sinograms")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_fbp)

    p = sub.add_parser("train", help="train the learned reconstructor")
    p.add_argument("--data", required=True)
    p.add_argument("--preset", choices=("lite", "paper"), default="lite")
    p.add_argument("--out", required=True, help="checkpoint path (.dbpm)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="reconstruct every sinogram with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score test-split reconstructions")
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--export-pgm", action="store_true",
                   help="write side-by-side FBP | DBP | truth images")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"dbpct {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except dio.ContainerError as exc:
        print(f"dbpct {args.command}: bad container: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, OSError) as exc:
        print(f"dbpct {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

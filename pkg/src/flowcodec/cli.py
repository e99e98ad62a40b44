"""Command-line interface.

Subcommands: synth, encode, decode, eval, bd, bpp. Results print as
JSON with --json (eval/bd/bpp always do); failures print a JSON error
object {"error": code, "message": ...} to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from .bd import RdCurve, RdPoint, bd_delta
from .bitstream import BitstreamError, measure_bpp
from .metrics import ms_ssim, psnr
from .pipeline import CodecConfig, decode, encode, payload_breakdown
from .video import (RvidError, SYNTH_KINDS, load_video, save_video,
                    synth_video)


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _json_safe(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def _emit(payload: dict) -> None:
    print(json.dumps({k: _json_safe(v) for k, v in payload.items()}, indent=2))


def _cmd_synth(args) -> None:
    video = synth_video(args.kind, args.frames, args.height, args.width, args.seed)
    save_video(args.output, video)
    if args.json:
        _emit({"output": args.output, "frames": args.frames,
               "height": args.height, "width": args.width})


def _load_config(path: str) -> CodecConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return CodecConfig.from_json(text)
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError("bad-config", f"{path}: {exc}") from exc


def _cmd_encode(args) -> None:
    video = load_video(args.input)
    cfg = _load_config(args.config)
    stream = encode(video, cfg)
    with open(args.output, "wb") as fh:
        fh.write(stream)
    t, h, w, _ = video.shape
    info = {
        "output": args.output,
        "bytes": len(stream),
        "bpp": measure_bpp(stream, t, h, w),
        **payload_breakdown(stream),
    }
    if args.json:
        _emit(info)
    else:
        print(f"{args.output}: {info['bytes']} bytes, {info['bpp']:.4f} bpp, "
              f"INR share {info['inr_share']:.1%}")


def _cmd_decode(args) -> None:
    with open(args.input, "rb") as fh:
        stream = fh.read()
    video = decode(stream)
    save_video(args.output, video)
    if args.json:
        _emit({"output": args.output, "frames": int(video.shape[0]),
               "height": int(video.shape[1]), "width": int(video.shape[2])})


def _cmd_eval(args) -> None:
    ref = load_video(args.reference)
    test = load_video(args.test)
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"psnr": psnr, "msssim": ms_ssim}
    result = {}
    for name in wanted:
        if name not in known:
            raise CliError("unknown-metric",
                           f"{name!r} (choose from {sorted(known)})")
        result[name] = known[name](ref, test)
    _emit(result)


def _read_curve(path: str) -> RdCurve:
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "bpp" not in reader.fieldnames:
            raise CliError("bad-curve", f"{path}: need a 'bpp' column")
        for row in reader:
            metrics = {k: float(v) for k, v in row.items()
                       if k != "bpp" and v not in (None, "")}
            points.append(RdPoint(float(row["bpp"]), metrics))
    try:
        return RdCurve(points)
    except ValueError as exc:
        raise CliError("bad-curve", f"{path}: {exc}") from exc


def _cmd_bd(args) -> None:
    reference = _read_curve(args.reference)
    test = _read_curve(args.test)
    try:
        value = bd_delta(reference, test, args.metric)
    except (ValueError, KeyError) as exc:
        raise CliError("bd-failed", str(exc)) from exc
    _emit({"metric": args.metric, "bd_delta": value})


def _cmd_bpp(args) -> None:
    with open(args.stream, "rb") as fh:
        data = fh.read()
    try:
        t, h, w = (int(x) for x in args.dims.lower().split("x"))
    except ValueError:
        raise CliError("bad-dims", f"--dims must look like TxHxW, got {args.dims!r}")
    _emit({"bytes": len(data), "bpp": measure_bpp(data, t, h, w)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcodec",
        description="Neural video codec: conditioning-network + velocity-field decoder")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic RVID fixture")
    p.add_argument("kind", choices=SYNTH_KINDS)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-T", "--frames", type=int, default=8)
    p.add_argument("-H", "--height", type=int, default=32)
    p.add_argument("-W", "--width", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode", help="compress an RVID video")
    p.add_argument("input")
    p.add_argument("config", help="JSON codec configuration")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="reconstruct a video from a bitstream")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("eval", help="compare two RVID videos")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--metrics", default="psnr,msssim")
    p.add_argument("--json", action="store_true")  # output is always JSON
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bd", help="average metric gap between two RD curves")
    p.add_argument("reference", help="CSV with header bpp,psnr,msssim")
    p.add_argument("test")
    p.add_argument("--metric", default="psnr")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bd)

    p = sub.add_parser("bpp", help="bits per pixel of a bitstream file")
    p.add_argument("stream")
    p.add_argument("--dims", required=True, help="TxHxW")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bpp)
    return parser


def _fail(code: str, message: str) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, str(exc))
    except BitstreamError as exc:
        return _fail(exc.code, str(exc))
    except RvidError as exc:
        return _fail(exc.code, str(exc))
    except FileNotFoundError as exc:
        return _fail("io-error", str(exc))
    except (ValueError, KeyError) as exc:
        return _fail("invalid-argument", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())

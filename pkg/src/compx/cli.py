"""Command-line surface: compress sessions, raw codec operations, metrics,
benchmarks, the HTTP server, and prompt-store validation.

Exit codes: 0 success, 1 domain error (typed message on stderr), 2 usage.
Config: optional ./compx.toml ([chat] and [codec] tables) plus the
COMPX_API_KEY / COMPX_BASE_URL / COMPX_MODEL environment variables.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import agent, bench, codec, container, llmclient, metrics, prompts
from .errors import CompxError
from .imaging import load_image, save_image

CONFIG_FILE = "compx.toml"


def load_config(path: str | None = None) -> dict:
    candidate = Path(path) if path else Path.cwd() / CONFIG_FILE
    if not candidate.is_file():
        return {}
    with open(candidate, "rb") as f:
        return tomllib.load(f)


def chat_config_from(config: dict) -> llmclient.ChatConfig:
    chat = {k: v for k, v in config.get("chat", {}).items()
            if k in ("base_url", "model", "temperature", "max_retries",
                     "timeout", "api_key")}
    return llmclient.ChatConfig.from_env(**chat)


def _parse_groups(text: str):
    if text.strip().lower() == "all":
        return None
    return {int(part) for part in text.split(",") if part.strip()}


def _read_curve_csv(path) -> metrics.RdCurve:
    points = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip():
                continue
            try:
                bpp, value = float(row[-2]), float(row[-1])
            except ValueError:
                continue  # header line
            points.append(metrics.RdPoint(bpp=bpp, metric=value))
    return metrics.RdCurve(points)


def _load_binary_mask(path, image) -> np.ndarray:
    mask_img = load_image(path)
    if (mask_img.width, mask_img.height) != (image.width, image.height):
        raise CompxError("mask dimensions differ from images")
    return (mask_img.data[:, :, 0] != 0).astype(np.uint8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compx",
                                     description="instruction-driven image compression")
    parser.add_argument("--config", help=f"path to {CONFIG_FILE}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="run a full compression session")
    p.add_argument("-i", "--image", required=True)
    p.add_argument("-m", "--message", required=True, help="natural-language request")
    p.add_argument("--planner", default="rules",
                   choices=("rules", "llm", "llm_with_fallback"))
    p.add_argument("--proposer", default="bisection", choices=("bisection", "llm"))
    p.add_argument("--mask", help="grayscale mask file to use instead of the heuristic")
    p.add_argument("--out", help="session directory (default: ./compx_session)")
    p.add_argument("--transport", default="live",
                   help="'live' or 'fixture:<name>' for scripted replay")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("codec", help="raw codec operations")
    codec_sub = p.add_subparsers(dest="codec_command", required=True)

    enc = codec_sub.add_parser("encode")
    enc.add_argument("-i", "--image", required=True)
    enc.add_argument("-o", "--output", required=True)
    enc.add_argument("--q", type=float, default=0.5, help="uniform quality in [0,1]")
    enc.add_argument("--qmap", help="grayscale quality-map image (0..255 -> 0..1)")
    enc.add_argument("--mask", help="grayscale group-mask image")
    enc.add_argument("--profile", default="distortion", choices=codec.PROFILE_KINDS)

    dec = codec_sub.add_parser("decode")
    dec.add_argument("-s", "--stream", required=True)
    dec.add_argument("-o", "--output", required=True)
    dec.add_argument("--groups", default="all", help="comma-separated ids or 'all'")

    ext = codec_sub.add_parser("extract")
    ext.add_argument("-s", "--stream", required=True)
    ext.add_argument("-o", "--output", required=True)
    ext.add_argument("--groups", required=True, help="comma-separated ids")

    p = sub.add_parser("metrics", help="quality and rate metrics")
    msub = p.add_subparsers(dest="metrics_command", required=True)

    mp = msub.add_parser("psnr")
    mp.add_argument("-a", required=True)
    mp.add_argument("-b", required=True)
    mp.add_argument("--json", action="store_true")

    mw = msub.add_parser("wpsnr")
    mw.add_argument("-a", required=True)
    mw.add_argument("-b", required=True)
    mw.add_argument("--mask", required=True, help="binary RoI mask image")
    mw.add_argument("--alpha", type=float, required=True)
    mw.add_argument("--beta", type=float, default=None,
                    help="defaults to 1 - alpha")
    mw.add_argument("--json", action="store_true")

    mb = msub.add_parser("bpp")
    mb.add_argument("-s", "--stream", required=True)
    mb.add_argument("--width", type=int, help="override: pixel width")
    mb.add_argument("--height", type=int, help="override: pixel height")
    mb.add_argument("--json", action="store_true")

    md = msub.add_parser("bd")
    md.add_argument("--ref", required=True, help="CSV with bpp,metric columns")
    md.add_argument("--test", required=True)
    md.add_argument("--mode", default="psnr", choices=("psnr", "rate"))
    md.add_argument("--json", action="store_true")

    p = sub.add_parser("bench", help="benchmarks")
    bsub = p.add_subparsers(dest="bench_command", required=True)

    br = bsub.add_parser("run")
    br.add_argument("--suite", help="JSONL suite (default: bundled mini suite)")
    br.add_argument("--planner", default="rules",
                    choices=("rules", "llm", "llm_with_fallback"))
    br.add_argument("--repeats", type=int, default=3)
    br.add_argument("--format", default="markdown", choices=("csv", "markdown", "json"))
    br.add_argument("--out", help="write the report here instead of stdout")

    bs = bsub.add_parser("sweep")
    bs.add_argument("--images", nargs="+", required=True)
    bs.add_argument("--grid", default="0.1,0.3,0.5,0.7,0.9",
                    help="comma-separated increasing qualities")
    bs.add_argument("--profile", default="distortion", choices=codec.PROFILE_KINDS)
    bs.add_argument("--format", default="csv", choices=("csv", "markdown", "json"))
    bs.add_argument("--out")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8300)
    p.add_argument("--root", default="compx_sessions")
    p.add_argument("--ui", help="directory with the built web UI bundle")

    p = sub.add_parser("prompts", help="prompt store tools")
    psub = p.add_subparsers(dest="prompts_command", required=True)
    pv = psub.add_parser("validate")
    pv.add_argument("--dir", help="prompt store directory (default: bundled)")

    return parser


def _load_group_mask(path, image) -> codec.GroupMask:
    from .segmenter import mask_from_file

    return mask_from_file(path, (image.width, image.height))


def _cmd_compress(args, config) -> int:
    out_dir = Path(args.out) if args.out else Path.cwd() / "compx_session"
    if args.transport.startswith("fixture:"):
        name = args.transport.split(":", 1)[1]
        instruction, deps = agent.fixture_deps(name, out_dir=out_dir)
    else:
        instruction = args.message
        image = load_image(args.image)
        deps = agent.SessionDeps(image=image, planner=args.planner,
                                 proposer=args.proposer, out_dir=out_dir)
        if args.mask:
            deps.mask = _load_group_mask(args.mask, image)
        if args.planner in ("llm", "llm_with_fallback") or args.proposer == "llm":
            deps.chat_config = chat_config_from(config)
    trace = agent.run_session(instruction, deps)
    if args.json:
        print(json.dumps(trace.to_json_dict(), indent=2))
    else:
        print(f"session directory: {out_dir}")
        for it in trace.iterations:
            print(f"  iteration {it.index}: q={list(it.q_factors)} "
                  f"bytes={it.bytes} metric={metrics.format_db(it.metric_value)} "
                  f"-> {it.verdict}")
        print(f"outcome: {trace.outcome} (chosen iteration {trace.chosen_iteration})")
    return 0


def _cmd_codec(args, config) -> int:
    if args.codec_command == "encode":
        image = load_image(args.image)
        profile = codec.TaskProfile.for_kind(args.profile)
        if args.mask:
            mask = _load_group_mask(args.mask, image)
        else:
            mask = codec.GroupMask.single_group(image.width, image.height)
        if args.qmap:
            qmap_img = load_image(args.qmap)
            if (qmap_img.width, qmap_img.height) != (image.width, image.height):
                raise CompxError("quality map dimensions differ from image")
            values = qmap_img.data[:, :, 0].astype(np.float32) / 255.0
            qmap = codec.QualityMap(image.width, image.height, values)
        else:
            qmap = codec.QualityMap.uniform(image.width, image.height, args.q)
        stream = container.serialize(codec.encode(image, qmap, mask, profile))
        Path(args.output).write_bytes(stream)
        print(f"{args.output}: {len(stream)} bytes, "
              f"bpp {metrics.container_bpp(stream, image.width, image.height):.4f}")
        return 0
    if args.codec_command == "decode":
        parsed = container.parse(Path(args.stream).read_bytes())
        groups = _parse_groups(args.groups)
        image = codec.decode(parsed, groups if groups is not None else codec.ALL)
        save_image(image, args.output)
        print(f"{args.output}: {image.width}x{image.height}")
        return 0
    parsed = container.parse(Path(args.stream).read_bytes())
    groups = _parse_groups(args.groups)
    if groups is None:
        raise CompxError("extract needs an explicit group list")
    sub = container.extract(parsed, groups)
    data = container.serialize(sub)
    Path(args.output).write_bytes(data)
    print(f"{args.output}: {len(data)} bytes, kept groups "
          f"{sorted(e.group_id for e in sub.header.group_table)}")
    return 0


def _print_value(args, name: str, value: float) -> None:
    if getattr(args, "json", False):
        print(json.dumps({name: metrics.format_db(value)
                          if name != "bpp" else round(value, 6)}))
    else:
        if name == "bpp":
            print(f"{value:.6f}")
        else:
            print(metrics.format_db(value))


def _cmd_metrics(args, config) -> int:
    if args.metrics_command == "psnr":
        value = metrics.psnr(load_image(args.a), load_image(args.b))
        _print_value(args, "psnr", value)
        return 0
    if args.metrics_command == "wpsnr":
        a = load_image(args.a)
        beta = args.beta if args.beta is not None else round(1.0 - args.alpha, 9)
        weights = metrics.RoiWeights(alpha=args.alpha, beta=beta)
        roi = _load_binary_mask(args.mask, a)
        value = metrics.weighted_psnr(a, load_image(args.b), roi, weights)
        _print_value(args, "wpsnr", value)
        return 0
    if args.metrics_command == "bpp":
        data = Path(args.stream).read_bytes()
        if args.width and args.height:
            width, height = args.width, args.height
        else:
            header = container.parse(data).header
            width, height = header.width, header.height
        _print_value(args, "bpp", metrics.bpp(8 * len(data), width, height))
        return 0
    ref = _read_curve_csv(args.ref)
    test = _read_curve_csv(args.test)
    value = metrics.bd_delta(ref, test, args.mode)
    if args.json:
        print(json.dumps({f"bd_{args.mode}": round(value, 6)}))
    else:
        print(f"{value:.2f}")
    return 0


def _cmd_bench(args, config) -> int:
    if args.bench_command == "run":
        suite = bench.load_suite(args.suite)
        kwargs = {}
        if args.planner in ("llm", "llm_with_fallback"):
            kwargs["config"] = chat_config_from(config)
        report = bench.run_success_eval(args.planner, suite, repeats=args.repeats,
                                        **kwargs)
        text = bench.render_bench_report(report, args.format)
        if args.out:
            Path(args.out).write_text(text)
        else:
            print(text, end="")
        return 0
    grid = [float(v) for v in args.grid.split(",")]
    images = {Path(p).stem: load_image(p) for p in args.images}
    curves = bench.rd_sweep(images, grid, codec.TaskProfile.for_kind(args.profile))
    text = bench.render_curves(curves, grid, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def _cmd_serve(args, config) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(root=args.root, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _cmd_prompts(args, config) -> int:
    bundle = prompts.load_store(args.dir)
    print(f"prompt store OK: {len(bundle.transcripts)} transcripts, "
          f"planning prompt {len(bundle.planning_system)} chars")
    return 0


_DISPATCH = {
    "compress": _cmd_compress,
    "codec": _cmd_codec,
    "metrics": _cmd_metrics,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
    "prompts": _cmd_prompts,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = load_config(args.config)
    try:
        return _DISPATCH[args.command](args, config)
    except CompxError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

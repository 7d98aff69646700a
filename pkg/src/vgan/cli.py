"""Command line front end: ``vgan {train,visualize,evaluate,baseline,synth}``.

Exit codes: 0 ok, 1 usage, 2 I/O, 3 numeric divergence, 4 shape mismatch.
Options may also come from a ``key=value`` file given with ``--config``
(keys use underscores, e.g. ``lr_g=1e-4``); explicit flags win.
"""

import argparse
import json
import logging
import os
import sys

from . import baselines, data, metrics
from .errors import DimensionError, DivergenceError, FormatError
from .networks import load_checkpoint
from .training import PRESETS, TrainConfig, rgb_sources_from_images, train_loop, visualize

log = logging.getLogger("vgan")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED, EXIT_SHAPE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _merge_config(args, parser):
    if not getattr(args, "config", None):
        return args
    try:
        values = read_config_file(args.config)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config file {args.config}: {exc}") from exc
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    for key, raw in values.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is not None:
            continue  # flag given explicitly
        action = actions[key]
        value = action.type(raw) if action.type else raw
        setattr(args, key, value)
    return args


def _effective(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _require_file(path, what):
    if not path or not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _widths(text):
    return tuple(int(t) for t in str(text).replace(",", " ").split())


# --------------------------------------------------------------------------
# subcommands


def _train_config(args):
    base = PRESETS[args.preset or "full"]
    overrides = {
        "lr_g": args.lr_g, "lr_d": args.lr_d, "lam": args.lam, "epoch_size": args.epoch_size,
        "epochs": args.epochs, "patch_size": args.patch_size, "gen_width": args.gen_width,
        "disc_widths": args.disc_widths, "history_capacity": args.history, "seed": args.seed,
    }
    d = base.to_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(d)


def cmd_train(args):
    _require_file(args.cube, "cube")
    if not args.rgb or not os.path.isdir(args.rgb):
        raise FileNotFoundError(f"RGB directory not found: {args.rgb}")
    if args.resume:
        _require_file(args.resume, "checkpoint")
    pngs = sorted(f for f in os.listdir(args.rgb) if f.lower().endswith(".png"))
    if not pngs:
        raise FileNotFoundError(f"no PNG files in {args.rgb}")
    cfg = _train_config(args)
    cube = data.load_cube(args.cube)
    images = [data.read_png(os.path.join(args.rgb, f)) for f in pngs]
    for src in [cube.values] + [im.pixels for im in images]:
        if src.shape[0] < cfg.patch_size or src.shape[1] < cfg.patch_size:
            raise DimensionError(f"input {src.shape[:2]} smaller than patch size {cfg.patch_size}")
    stats = data.compute_stats(cube)
    norm = data.normalize_cube(cube, stats)
    meta = {"norm_stats": stats.to_dict(), "command": _effective(args)}
    result = train_loop(cfg, norm.values, rgb_sources_from_images(images), out_dir=args.out,
                        resume=args.resume, extra_meta=meta)
    for path in result.checkpoints:
        print(path)
    return EXIT_OK


def cmd_visualize(args):
    _require_file(args.ckpt, "checkpoint")
    _require_file(args.cube, "cube")
    ckpt = load_checkpoint(args.ckpt)
    cube = data.load_cube(args.cube)
    if cube.bands != ckpt.config.bands:
        raise DimensionError(f"checkpoint expects {ckpt.config.bands} bands, cube has {cube.bands}")
    if "norm_stats" in ckpt.meta:
        stats = data.NormalizationStats.from_dict(ckpt.meta["norm_stats"])
    else:
        stats = data.compute_stats(cube)
    tile = args.tile or ckpt.meta.get("train_config", {}).get("patch_size", 128)
    img = visualize(data.normalize_cube(cube, stats), ckpt.params, ckpt.config, tile=tile)
    meta = dict(_effective(args), tile=tile)
    data.write_png(img, args.out, text={"vgan": json.dumps(meta, sort_keys=True)})
    return EXIT_OK


def cmd_evaluate(args):
    args.mode = args.mode or "auto"
    args.samples = args.samples or 100_000
    args.seed = 0 if args.seed is None else args.seed
    for p in args.images:
        _require_file(p, "image")
    truth = None
    if args.truth:
        _require_file(args.truth, "truth image")
        truth = data.read_png(args.truth)
    reports = {}
    for path in args.images:
        img = data.read_png(path)
        if truth is not None and img.pixels.shape != truth.pixels.shape:
            raise DimensionError(f"{path} is {img.pixels.shape[:2]}, truth is {truth.pixels.shape[:2]}")
        rep = metrics.evaluate(img, truth, mode=args.mode, n=args.samples, seed=args.seed)
        rep.inputs["visualization"] = path
        if args.truth:
            rep.inputs["truth"] = args.truth
        reports[path] = rep.to_dict()
    doc = reports[args.images[0]] if len(args.images) == 1 else {"methods": reports}
    doc = dict(doc, config=_effective(args))
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        data._atomic_write(args.out, text.encode())
    else:
        print(text)
    if len(args.images) > 1:
        print(comparison_table(reports), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def comparison_table(reports):
    """Plain-text table with one row per method and the four metrics."""
    def fmt(v):
        return "-" if v is None else f"{v:.2f}"

    names = [os.path.splitext(os.path.basename(p))[0] for p in reports]
    width = max(len("Method"), *(len(n) for n in names))
    lines = [f"{'Method':<{width}}  {'Entropy':>8}  {'RMSE':>8}  {'CORR':>6}  {'Separability':>12}"]
    for name, rep in zip(names, reports.values()):
        lines.append(f"{name:<{width}}  {fmt(rep['entropy']):>8}  {fmt(rep['rmse']):>8}  "
                     f"{fmt(rep['corr']):>6}  {fmt(rep['separability']):>12}")
    return "\n".join(lines)


def cmd_baseline(args):
    methods = []
    for m in args.method or ["lp", "cmf", "pca"]:
        methods += [s for s in m.split(",") if s]
    unknown = [m for m in methods if m not in baselines.METHODS]
    if unknown:
        raise UsageError(f"unknown method(s) {unknown}; choose from {sorted(baselines.METHODS)}")
    _require_file(args.cube, "cube")
    cube = data.load_cube(args.cube)
    k = args.k or 3
    rendered = {}
    for m in methods:
        if m == "lp":
            img, sel = baselines.lp_false_color(cube, k)
            print(f"lp: selected bands {sel.indices}")
        else:
            img = baselines.METHODS[m](cube)
        rendered[m] = img
    # write only after every method succeeded
    os.makedirs(args.out, exist_ok=True)
    meta = json.dumps(dict(_effective(args), stretch_percentiles=list(baselines.STRETCH_PERCENTILES)),
                      sort_keys=True)
    for m, img in rendered.items():
        path = os.path.join(args.out, f"{m}.png")
        data.write_png(img, path, text={"vgan": meta})
        print(path)
    return EXIT_OK


def cmd_synth(args):
    bands = args.bands if args.bands is not None else 8
    if bands < 4:
        raise UsageError(f"--bands must be at least 4, got {bands}")
    _require_file(args.rgb, "RGB image")
    rgb = data.read_png(args.rgb)
    lift = data.make_lift(bands, sigma=args.sigma if args.sigma is not None else 0.02,
                          seed=args.seed if args.seed is not None else 0)
    cube = data.synthesize_cube(rgb, lift)
    sidecar = dict(lift.to_dict(), config=_effective(args))
    cube_data = data.cube_bytes(cube)
    side_data = json.dumps(sidecar, indent=2, sort_keys=True).encode()
    data._atomic_write(args.out, cube_data)
    data._atomic_write(args.out + ".lift.json", side_data)
    print(args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="vgan", description="Spectral image visualisation with a cycle GAN.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train the model on a cube and a folder of RGB PNGs")
    t.add_argument("--cube")
    t.add_argument("--rgb", help="directory of RGB PNG images")
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--lr-g", dest="lr_g", type=float)
    t.add_argument("--lr-d", dest="lr_d", type=float)
    t.add_argument("--lam", type=float)
    t.add_argument("--epoch-size", dest="epoch_size", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--patch-size", dest="patch_size", type=int)
    t.add_argument("--gen-width", dest="gen_width", type=int)
    t.add_argument("--disc-widths", dest="disc_widths", type=_widths)
    t.add_argument("--history", type=int)
    t.add_argument("--config")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("visualize", help="render a cube with a trained checkpoint")
    v.add_argument("--ckpt")
    v.add_argument("--cube")
    v.add_argument("--out")
    v.add_argument("--tile", type=int)
    v.add_argument("--config")
    v.set_defaults(func=cmd_visualize)

    e = sub.add_parser("evaluate", help="compute entropy, RMSE, CORR and separability")
    e.add_argument("images", nargs="+")
    e.add_argument("--truth")
    e.add_argument("--mode", choices=["auto", "exact", "sampled"])
    e.add_argument("--samples", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--config")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", help="classic visualisations (lp, cmf, pca)")
    b.add_argument("--cube")
    b.add_argument("--method", action="append")
    b.add_argument("--k", type=int)
    b.add_argument("--out")
    b.add_argument("--config")
    b.set_defaults(func=cmd_baseline)

    s = sub.add_parser("synth", help="fabricate a cube from an RGB PNG")
    s.add_argument("--rgb")
    s.add_argument("--bands", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_synth)
    return p


_REQUIRED = {
    "train": ("cube", "rgb", "out"),
    "visualize": ("ckpt", "cube", "out"),
    "baseline": ("cube", "out"),
    "synth": ("rgb", "out"),
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _merge_config(args, parser)
        missing = [k for k in _REQUIRED.get(args.command, ()) if not getattr(args, k)]
        if missing:
            raise UsageError(f"missing required option(s): {', '.join('--' + m for m in missing)}")
        return args.func(args)
    except UsageError as exc:
        print(f"vgan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"vgan: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"vgan: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DimensionError as exc:
        print(f"vgan: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ValueError as exc:
        print(f"vgan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

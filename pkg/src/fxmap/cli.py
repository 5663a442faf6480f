"""Command-line interface: ``fxmap <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
Every run writes a JSON run-log next to its main output (or to ``--log``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .effects.chain import render
from .effects.fit import fit_preset
from .effects.layout import LAYOUT_VERSION
from .encoders import ENCODERS, dump_embeddings, embed_stereo, load_embeddings
from .objective import MAPObjective, ObjectiveConfig, ReferenceSet
from .optim import adam_minimize
from .prior import DEFAULT_SHRINKAGE, fit_gaussian
from .protocol import METHODS, SPACES, Method, load_manifest, nn_index, run_protocol


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sigma(text: str):
    if text == "adaptive":
        return text
    try:
        vm, vs = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("sigma is 'adaptive' or 'MID,SIDE' variances") from None
    return (vm, vs)


def _mono(path):
    buf = io.read_wav(path)
    if buf.channels != 1:
        raise ValueError(f"{path}: channels: expected mono, got {buf.channels}")
    return buf.mono


def _stereo(path):
    buf = io.read_wav(path)
    if buf.channels != 2:
        raise ValueError(f"{path}: channels: expected stereo, got {buf.channels}")
    return buf.samples


# subcommands ------------------------------------------------------------------


def cmd_fit_preset(args):
    res = fit_preset(_mono(args.dry), _stereo(args.wet), args.steps, args.lr, seed=args.seed,
                     init=io.load_preset(args.init) if args.init else None)
    io.save_preset(args.out, res.theta, losses=[float(v) for v in res.losses])
    config = dict(res.config, dry=args.dry, wet=args.wet, init=args.init)
    return args.out, config, {"seed": args.seed}, [args.out]


def cmd_fit_prior(args):
    prior = fit_gaussian(io.load_dataset(args.presets), args.shrinkage)
    io.save_prior(args.out, prior)
    return args.out, {"presets": args.presets, "shrinkage": args.shrinkage}, {}, [args.out]


def cmd_transfer(args):
    if args.out and len(args.out) > len(args.input):
        raise UsageError("transfer: more --out paths than --input files")
    prior = io.load_prior(args.prior) if args.prior else None
    inputs = [_mono(p) for p in args.input]
    refs = ReferenceSet([embed_stereo(_stereo(p), args.encoder) for p in args.reference], args.encoder)
    cfg = ObjectiveConfig(args.alpha, args.encoder, args.sigma)
    if args.init:
        theta0 = io.load_preset(args.init)
    elif prior is not None:
        theta0 = prior.mean
    else:
        raise ValueError("transfer needs --prior or --init for the starting point")
    run = adam_minimize(MAPObjective(inputs, refs, prior, cfg), theta0, args.steps, args.lr, seed=args.seed,
                        thin=args.steps)
    outputs = []
    if args.params_out:
        io.save_preset(args.params_out, run.theta, losses=[float(v) for v in run.losses])
        outputs.append(args.params_out)
    for x, path in zip(inputs, args.out or []):
        io.write_wav(path, render(x, run.theta))
        outputs.append(path)
    if not outputs:
        raise UsageError("transfer: give --out and/or --params-out")
    config = dict(cfg.as_dict(), inputs=args.input, references=args.reference, prior=args.prior, init=args.init,
                  steps=args.steps, lr=args.lr)
    return outputs[0], config, {"seed": args.seed}, outputs


def cmd_evaluate(args):
    manifest = load_manifest(args.manifest)
    for name in ("prior", "presets", "bank"):
        if getattr(args, name):
            setattr(manifest, name, getattr(args, name))
    method = Method(args.method, args.space, args.alpha, args.encoder, args.sigma, args.steps, args.lr)
    report = run_protocol(manifest, method, args.seed)
    with open(args.report, "w") as fh:
        fh.write(report.to_json())
    for t in report.tracks:
        if "error" in t:
            print(f"track {t['track_id']}: {t['error']}", file=sys.stderr)
    print(json.dumps(report.medians, sort_keys=True))
    config = dict(method.as_dict(), manifest=args.manifest, prior=args.prior, presets=args.presets, bank=args.bank)
    return args.report, config, {"seed": args.seed}, [args.report]


def cmd_embed(args):
    items = {}
    if args.presets:
        if not args.source:
            raise UsageError("embed: --presets needs --source")
        source = _mono(args.source)
        data = io.load_dataset(args.presets)
        for k in range(data.count):
            e = embed_stereo(render(source, data[k]), args.encoder)
            items[f"{k}/mid"], items[f"{k}/side"] = e.mid, e.side
    for path in args.input or []:
        buf = io.read_wav(path)
        stem = Path(path).stem
        if buf.channels == 2:
            e = embed_stereo(buf.samples, args.encoder)
            items[f"{stem}/mid"], items[f"{stem}/side"] = e.mid, e.side
        else:
            items[stem] = ENCODERS[args.encoder](buf.mono)
    if not items:
        raise UsageError("embed: give --input and/or --presets")
    io.dump_json(args.out, dump_embeddings(items, args.encoder))
    config = {"encoder": args.encoder, "inputs": args.input, "presets": args.presets, "source": args.source}
    return args.out, config, {}, [args.out]


def cmd_nearest(args):
    data = io.load_dataset(args.presets)
    if args.space == "theta":
        if not args.query:
            raise UsageError("nearest: theta space needs --query")
        index = nn_index(io.load_preset(args.query), data, "theta")
    else:
        if not (args.reference and args.bank):
            raise UsageError(f"nearest: space {args.space!r} needs --reference and --bank")
        bank = load_embeddings(args.bank)
        refs = ReferenceSet([embed_stereo(_stereo(p), bank.encoder_id) for p in args.reference], bank.encoder_id)
        index = nn_index(refs, data, args.space, bank)
    io.save_preset(args.out, data[index], index=index)
    print(index)
    config = {"space": args.space, "presets": args.presets, "query": args.query, "references": args.reference,
              "bank": args.bank}
    return args.out, config, {}, [args.out]


def cmd_render(args):
    io.write_wav(args.out, render(_mono(args.input), io.load_preset(args.params)))
    return args.out, {"input": args.input, "params": args.params}, {}, [args.out]


# parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fxmap", description="Vocal effects style transfer with a preset prior.")
    p.add_argument("--log", help="run-log path (default: <output>.runlog.json)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def optim_flags(s, steps):
        s.add_argument("--steps", type=int, default=steps)
        s.add_argument("--lr", type=float, default=0.01)
        s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("fit-preset", help="fit an oracle preset to a dry/wet pair")
    s.add_argument("--dry", required=True)
    s.add_argument("--wet", required=True)
    s.add_argument("--init")
    s.add_argument("--out", required=True)
    optim_flags(s, 2000)
    s.set_defaults(func=cmd_fit_preset)

    s = sub.add_parser("fit-prior", help="fit the Gaussian prior to a preset dataset")
    s.add_argument("--presets", required=True)
    s.add_argument("--shrinkage", type=float, default=DEFAULT_SHRINKAGE)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit_prior)

    s = sub.add_parser("transfer", help="estimate parameters from reference audio and render the inputs")
    s.add_argument("--input", action="append", required=True)
    s.add_argument("--reference", action="append", required=True)
    s.add_argument("--prior")
    s.add_argument("--init")
    s.add_argument("--encoder", choices=sorted(ENCODERS), default="mfcc")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--sigma", type=_sigma, default="adaptive")
    s.add_argument("--out", action="append")
    s.add_argument("--params-out")
    optim_flags(s, 1000)
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("evaluate", help="run the A/B protocol over a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--space", choices=SPACES, default="theta")
    s.add_argument("--encoder", choices=sorted(ENCODERS), default="mfcc")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--sigma", type=_sigma, default="adaptive")
    s.add_argument("--prior")
    s.add_argument("--presets")
    s.add_argument("--bank")
    s.add_argument("--report", required=True)
    optim_flags(s, 1000)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("embed", help="embed audio files or preset renders")
    s.add_argument("--input", action="append")
    s.add_argument("--presets")
    s.add_argument("--source", help="mono source audio rendered through each preset")
    s.add_argument("--encoder", choices=sorted(ENCODERS), default="mfcc")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("nearest", help="nearest-neighbour preset lookup")
    s.add_argument("--presets", required=True)
    s.add_argument("--space", choices=SPACES, default="theta")
    s.add_argument("--query", help="preset JSON (theta space)")
    s.add_argument("--reference", action="append")
    s.add_argument("--bank")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_nearest)

    s = sub.add_parser("render", help="process a mono file with a preset")
    s.add_argument("--input", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        primary, config, seeds, outputs = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        io.write_run_log(args.log or io.run_log_path(primary), args.command, dict(config, layout_version=LAYOUT_VERSION),
                         seeds, outputs)
    except OSError as exc:
        print(f"error: run-log: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``siamface`` command line: train, evaluate, enroll, serve and the helper utilities.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 runtime or
overload error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import FormatError, InvalidArgument, NumericError, SiamfaceError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(args, payload: dict, text: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload))
    elif text is not None:
        print(text)
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def cmd_train(args) -> int:
    from .data import load_corpus, split, write_manifest
    from .siamese import SiameseNetwork, TrainConfig, save_checkpoint, train

    data_split = split(load_corpus(args.data), seed=args.seed)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)
    net = SiameseNetwork.build(args.seed)
    progress = None if args.json else print
    reports = train(net, data_split, config, progress=progress)
    save_checkpoint(net, args.out)
    if args.manifest:
        write_manifest(data_split, args.manifest)
    summary = {
        "checkpoint": str(args.out),
        "config": config.to_dict(),
        "epoch_mean_loss": [r.epoch_mean for r in reports],
        "final_loss": reports[-1].loss,
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"saved {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import load_corpus, split
    from .siamese import evaluate, load_checkpoint

    data_split = split(load_corpus(args.data), seed=args.split_seed)
    metrics = evaluate(load_checkpoint(args.model), data_split.test, args.pairs, args.seed)
    _emit(args, metrics)
    return EXIT_OK


def cmd_enroll(args) -> int:
    from .data import load_corpus, load_pgm, preprocess, split
    from .gallery import Gallery
    from .siamese import embed_batch, load_checkpoint

    net = load_checkpoint(args.model)
    gallery = Gallery.open(args.gallery)
    if args.corpus:
        images = split(load_corpus(args.corpus), seed=args.split_seed).train
        excluded = set(args.exclude_subject or [])
        images = [img for img in images if img.subject_id not in excluded]
        ids = [str(img.subject_id) for img in images]
    else:
        if not args.user_id or not args.images:
            raise UsageError("enroll needs --corpus, or --user-id with one or more images")
        images = [preprocess(load_pgm(p)) for p in args.images]
        ids = [args.user_id] * len(images)
    for uid, vec in zip(ids, embed_batch(net, images)):
        gallery.enroll(uid, vec)
    gallery.save()
    _emit(args, {"enrolled": len(images), "gallery_size": len(gallery), "gallery": str(args.gallery)})
    return EXIT_OK


def cmd_match(args) -> int:
    from .data import load_pgm, preprocess
    from .siamese import embed_batch, euclidean_distance, load_checkpoint

    net = load_checkpoint(args.model)
    va, vb = embed_batch(net, [preprocess(load_pgm(args.a)), preprocess(load_pgm(args.b))])
    d = euclidean_distance(va, vb)
    payload = {"face1": va.tolist(), "face2": vb.tolist(), "distance": d}
    text = f"Face1 Vector: {va.tolist()}\nFace2 Vector: {vb.tolist()}\nDistance between Face1 Vector and Face2 Vector: {d}"
    _emit(args, payload, text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .nn import run_suite

    results = run_suite(instances=args.instances, seed=args.seed)
    ok = all(r.ok for r in results)
    if args.json:
        print(json.dumps({"ok": ok, "checks": {r.name: r.max_rel_error for r in results}}))
    else:
        for r in results:
            print(f"{'ok  ' if r.ok else 'FAIL'} {r.name:16s} max rel error {r.max_rel_error:.3e}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_export(args) -> int:
    from .gallery import Gallery

    n = Gallery.load(args.gallery).export_csv(args.csv)
    _emit(args, {"exported": n, "csv": str(args.csv)})
    return EXIT_OK


def cmd_import(args) -> int:
    from .gallery import Gallery

    gallery = Gallery.import_csv(args.csv, args.gallery)
    gallery.save()
    _emit(args, {"imported": len(gallery), "gallery": str(args.gallery)})
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import RecognitionService, create_app, load_config

    config = load_config(args.config)
    for key in ("gallery_path", "checkpoint_path", "host", "port", "embed_delay_ms"):
        value = getattr(args, key)
        if value is not None:
            setattr(config, key, value)
    service = RecognitionService.from_config(config)
    uvicorn.run(create_app(service), host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def cmd_client(args) -> int:
    from .service.client import CaptureConfig, capture, directory_source

    cfg = CaptureConfig(n_frames=args.n, tau=args.tau, cooldown_frames=args.cooldown_frames,
                        retries=args.retries, backoff_s=args.backoff)

    def show(result):
        print(json.dumps(result) if args.json else
              f"{result['request_id']}: " + ", ".join(f"{m['user_id']} ({m['distance']:.4f})" for m in result["matches"]))

    sent = capture(directory_source(args.frames), args.url, cfg, on_result=show)
    if not args.json:
        print(f"requests sent: {sent}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    parser = _Parser(prog="siamface", description="Siamese face embedding, matching and presence service.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train on an ORL-layout corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--manifest", type=Path, help="also write the train/test split here")
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="verification metrics on held-out pairs")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split-seed", type=int, default=1)
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0, help="pair sampling seed")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("enroll", parents=[common], help="add embeddings to a gallery file")
    p.add_argument("--model", required=True)
    p.add_argument("--gallery", required=True, type=Path)
    p.add_argument("--user-id")
    p.add_argument("images", nargs="*")
    p.add_argument("--corpus", help="enroll the training images of a corpus, id = subject number")
    p.add_argument("--split-seed", type=int, default=1)
    p.add_argument("--exclude-subject", type=int, action="append")
    p.set_defaults(run=cmd_enroll)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP recognition service")
    p.add_argument("--config", help="key=value config file (default: $SIAMFACE_CONFIG)")
    p.add_argument("--gallery", dest="gallery_path")
    p.add_argument("--model", dest="checkpoint_path")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--embed-delay-ms", type=float)
    p.set_defaults(run=cmd_serve)

    p = sub.add_parser("client", parents=[common], help="motion-gated capture from a frame directory")
    p.add_argument("--frames", required=True)
    p.add_argument("--url", default="http://127.0.0.1:8000")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--tau", type=float, default=8 / 255)
    p.add_argument("--cooldown-frames", type=int, default=20)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--backoff", type=float, default=0.5)
    p.set_defaults(run=cmd_client)

    p = sub.add_parser("match", parents=[common], help="embed two images and print their distance")
    p.add_argument("--model", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(run=cmd_match)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=cmd_gradcheck)

    p = sub.add_parser("export-gallery", parents=[common], help="gallery file to CSV")
    p.add_argument("--gallery", required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(run=cmd_export)

    p = sub.add_parser("import-gallery", parents=[common], help="CSV to gallery file")
    p.add_argument("--csv", required=True)
    p.add_argument("--gallery", required=True)
    p.set_defaults(run=cmd_import)
    return parser


def run(argv: list[str] | None = None) -> int:
    from .service.client import ServerUnavailable

    try:
        args = build_parser().parse_args(argv)
        return args.run(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, InvalidArgument, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ServerUnavailable, NumericError, SiamfaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except KeyboardInterrupt:
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

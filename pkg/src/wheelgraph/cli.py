"""Command-line client of the pipeline service.

Every subcommand builds a request model, dispatches it (in-process by
default, over HTTP when --server is given), and writes the returned
documents to local files. No pipeline logic lives here.
"""

import argparse
import sys

from .errors import WheelgraphError
from .service.app import ROUTES
from .service.schemas import (
    EvaluateRequest,
    FitPriorsRequest,
    GenerateRequest,
    PredictRequest,
    RenderRequest,
    TrainRequest,
)


class ServiceClient:
    """Dispatches a request to the service layer or a remote server."""

    def __init__(self, server=None):
        self.server = server.rstrip("/") if server else None

    def call(self, route, request):
        if self.server is None:
            handler, _ = ROUTES[route]
            return handler(request).model_dump()
        import httpx

        reply = httpx.post(
            self.server + route, json=request.model_dump(), timeout=None
        )
        if reply.status_code != 200:
            detail = reply.json().get("detail", reply.text)
            raise WheelgraphError(f"server rejected request: {detail}")
        return reply.json()


def _read(path):
    with open(path, encoding="ascii") as fh:
        return fh.read()


def _write(path, text):
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)


def _add_server(parser):
    parser.add_argument("--server", default=None, help="base URL of a running service; "
                        "omit to run in-process")


def _build_parser():
    parser = argparse.ArgumentParser(prog="wheelgraph",
                                     description="wheel/vehicle association pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scene dataset")
    _add_server(p)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--width", type=float, default=800.0)
    p.add_argument("--height", type=float, default=600.0)
    p.add_argument("--min-vehicles", type=int, default=1)
    p.add_argument("--max-vehicles", type=int, default=3)
    p.add_argument("--wheels", type=int, default=2, choices=(0, 1, 2))
    p.add_argument("--ambiguity", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-priors", help="fit mixture priors from a dataset")
    _add_server(p)
    p.add_argument("--data", required=True)
    p.add_argument("--components", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the relation network")
    _add_server(p)
    p.add_argument("--data", required=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--neg-weight", type=float, default=0.1)
    p.add_argument("--neg-keep", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--gcn-depth", type=int, default=2)
    p.add_argument("--gat-hidden", type=int, default=64)
    p.add_argument("--extractor-hidden", default="64",
                   help="comma-separated hidden widths, or '-' for none")
    p.add_argument("--no-small-mask", action="store_true",
                   help="disable the small-object candidate filter")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-log", default=None,
                   help="write per-epoch mean loss here instead of stdout")

    p = sub.add_parser("predict", help="write pair predictions for a dataset")
    _add_server(p)
    p.add_argument("--data", required=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--no-small-mask", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="accuracy over easy/hard/mixed splits")
    _add_server(p)
    p.add_argument("--data", required=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--baseline", action="store_true",
                   help="add logic-model rows to the table")
    p.add_argument("--no-small-mask", action="store_true")
    p.add_argument("--out", default=None, help="write the table here instead of stdout")
    p.add_argument("--json", default=None, help="also write rows as JSON")

    p = sub.add_parser("render", help="draw one scene and its pairs as SVG")
    _add_server(p)
    p.add_argument("--data", required=True)
    p.add_argument("--scene-id", type=int, required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _parse_hidden(text):
    if text.strip() in ("-", ""):
        return []
    return [int(v) for v in text.split(",")]


def _run(args):
    client = ServiceClient(getattr(args, "server", None))

    if args.command == "generate":
        reply = client.call("/datasets/generate", GenerateRequest(
            scenes=args.scenes, width=args.width, height=args.height,
            min_vehicles=args.min_vehicles, max_vehicles=args.max_vehicles,
            wheels_per_vehicle=args.wheels, ambiguity=args.ambiguity,
            jitter=args.jitter, seed=args.seed,
        ))
        _write(args.out, reply["dataset"])
        print(f"wrote {reply['scene_count']} scenes "
              f"({reply['wheel_vehicle_pairs']} wv / {reply['wheel_wheel_pairs']} ww pairs) "
              f"to {args.out}")
        return 0

    if args.command == "fit-priors":
        reply = client.call("/priors/fit", FitPriorsRequest(
            dataset=_read(args.data), components=args.components,
            tol=args.tol, max_iter=args.max_iter, seed=args.seed,
        ))
        _write(args.out, reply["priors"])
        print(f"fit priors on {reply['wheel_vehicle_samples']} wv / "
              f"{reply['wheel_wheel_samples']} ww samples to {args.out}")
        return 0

    if args.command == "train":
        reply = client.call("/models/train", TrainRequest(
            dataset=_read(args.data), priors=_read(args.priors),
            epochs=args.epochs, learning_rate=args.lr, momentum=args.momentum,
            neg_weight=args.neg_weight, neg_keep=args.neg_keep,
            batch_size=args.batch_size, seed=args.seed,
            feature_dim=args.feature_dim, gcn_depth=args.gcn_depth,
            gat_hidden=args.gat_hidden,
            extractor_hidden=_parse_hidden(args.extractor_hidden),
            small_object_mask=not args.no_small_mask,
        ))
        _write(args.out, reply["checkpoint"])
        loss_lines = "".join(f"{v!r}\n" for v in reply["loss_history"])
        if args.loss_log:
            _write(args.loss_log, loss_lines)
        else:
            sys.stdout.write(loss_lines)
        print(f"wrote checkpoint to {args.out} "
              f"(final loss {reply['loss_history'][-1]:.6f})")
        return 0

    if args.command == "predict":
        reply = client.call("/models/predict", PredictRequest(
            dataset=_read(args.data), priors=_read(args.priors),
            checkpoint=_read(args.checkpoint), threshold=args.threshold,
            small_object_mask=not args.no_small_mask,
        ))
        _write(args.out, reply["predictions"])
        print(f"wrote {reply['retained_pairs']} retained pairs to {args.out}")
        return 0

    if args.command == "eval":
        reply = client.call("/models/evaluate", EvaluateRequest(
            dataset=_read(args.data), priors=_read(args.priors),
            checkpoint=_read(args.checkpoint), threshold=args.threshold,
            split_seed=args.split_seed, baseline=args.baseline,
            small_object_mask=not args.no_small_mask,
        ))
        if args.out:
            _write(args.out, reply["table"])
        else:
            sys.stdout.write(reply["table"])
        if args.json:
            import json

            _write(args.json, json.dumps(reply["rows"], indent=2) + "\n")
        return 0

    if args.command == "render":
        reply = client.call("/scenes/render", RenderRequest(
            dataset=_read(args.data), scene_id=args.scene_id,
            predictions=_read(args.predictions),
        ))
        _write(args.out, reply["svg"])
        print(f"wrote scene {args.scene_id} to {args.out}")
        return 0

    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (WheelgraphError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

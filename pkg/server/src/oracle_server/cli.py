"""Entry point: serve a model file, a torchvision classifier, or a
scripted label fixture."""

import argparse

from .app import create_app
from .models import load_fixture, load_model


def build_parser():
    parser = argparse.ArgumentParser(prog="oracle-server")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", help="builtin .npz path or torchvision:<name>")
    source.add_argument("--fixture", help="labels.json with scripted responses")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    return parser


def main(argv=None):
    import uvicorn

    args = build_parser().parse_args(argv)
    backend = load_fixture(args.fixture) if args.fixture else load_model(args.model)
    app = create_app(backend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

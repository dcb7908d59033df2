"""Server entry point.

Examples:
    igaff-modelserver --port 9000 --model fixture:fixtures/models/mlp32/model.json
    igaff-modelserver --stdio --model pretrained:smoke-mlp
"""

from __future__ import annotations

import argparse
import sys

from .nets import load_ref
from .server import TcpServer, serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="igaff-modelserver", description=__doc__)
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--port", type=int, help="listen on this TCP port (127.0.0.1)")
    group.add_argument("--stdio", action="store_true", help="serve over stdin/stdout")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument(
        "--model", required=True, help="fixture:<model.json> or pretrained:<bundled name>"
    )
    args = parser.parse_args(argv)

    model = load_ref(args.model)
    if args.stdio:
        serve_stdio(model)
        return 0
    server = TcpServer(model, host=args.host, port=args.port)
    print(f"serving {args.model} on {server.host}:{server.port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())

import argparse
import sys

from .worker import MemorizingWorker, serve_http, serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="teachloop-trainer", description=__doc__)
    parser.add_argument("--http", type=int, metavar="PORT", help="serve HTTP POST / instead of stdio")
    parser.add_argument("--state-dir", help="directory for checkpoint files (default: a fresh temp dir)")
    args = parser.parse_args(argv)
    worker = MemorizingWorker(args.state_dir)
    if args.http:
        serve_http(worker, args.http)
    else:
        serve_stdio(worker, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())

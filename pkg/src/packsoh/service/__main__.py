"""Run the diagnostics service under uvicorn: ``python -m packsoh.service``."""

import argparse

import uvicorn

from . import create_app


def main() -> None:
    parser = argparse.ArgumentParser(description="Pack diagnostics service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args()
    uvicorn.run(create_app(), host=args.host, port=args.port)


if __name__ == "__main__":
    main()

"""Command-line entry point for the external-predictor protocol.

Exit codes: 0 success; 2 usage error; 3 protocol/schema mismatch or
unreadable file; 4 model unavailable (so the caller can skip this system).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adapter import ModelUnavailable, PredictRequest, SchemaMismatch, predict

EXIT_OK = 0
EXIT_SCHEMA = 3
EXIT_MODEL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltm-adapter",
        description="Run a pretrained tabular model over pipeline feature matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("predict", help="fit on train, predict test, write CSV")
    p.add_argument("--train", required=True, help="train feature matrix CSV")
    p.add_argument("--labels", required=True, help="train labels CSV (patient_id,label)")
    p.add_argument("--test", required=True, help="test feature matrix CSV")
    p.add_argument("--out", required=True, help="output predictions CSV")
    p.add_argument("--variant", default="raw", choices=("raw", "pre", "preprocessed"),
                   help="raw = untransformed matrices, pre = fitted-pipeline output")
    p.add_argument("--backend", default="auto", choices=("auto", "tabpfn", "hgb"))
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    request = None
    try:
        request = PredictRequest(
            train_matrix=Path(args.train),
            train_labels=Path(args.labels),
            test_matrix=Path(args.test),
            output=Path(args.out),
            variant=args.variant,
        )
        backend = predict(request, backend=args.backend, seed=args.seed)
    except ModelUnavailable as exc:
        print(f"ltm-adapter: model unavailable: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SchemaMismatch, FileNotFoundError, OSError, ValueError) as exc:
        print(f"ltm-adapter: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(f"ltm-adapter: wrote {request.output} using backend {backend}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

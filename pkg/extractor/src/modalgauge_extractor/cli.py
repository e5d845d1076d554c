"""Command line for the embedding extractor."""

from __future__ import annotations

import argparse
import sys

from .extract import DEFAULT_PROMPT, ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalgauge-extract",
        description="Embed an image-classification dataset with a dual encoder "
                    "and write modalgauge task files",
    )
    parser.add_argument("--model", required=True,
                        help="encoder identifier: stub, stub:<dim>, hf:<checkpoint>")
    parser.add_argument("--dataset", required=True,
                        help="dataset identifier: synthetic:<n>x<k>, folder:<path>")
    parser.add_argument("--split", default="train", choices=["train", "val", "test"],
                        help="dataset split to embed (default train)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--prompt", default=DEFAULT_PROMPT,
                        help="prompt template with one {class} placeholder")
    parser.add_argument("--batch-size", type=int, default=64, help="inference batch size")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomness")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(
            model=args.model,
            dataset=args.dataset,
            out_dir=args.out,
            split=args.split,
            prompt_template=args.prompt,
            batch_size=args.batch_size,
            seed=args.seed,
        )
        manifest_path = extract(job)
    except Exception as exc:  # single-line diagnostic, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(manifest_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

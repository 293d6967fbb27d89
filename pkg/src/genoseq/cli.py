"""Command-line interface.

Subcommands: ``run`` (execute a grid), ``report`` (render CSV reports from a
run directory), ``registry`` (GUE task statistics), and ``tokenizer``
(train/apply BPE vocabularies).

Exit codes: 0 success, 1 usage error, 2 data error, 3 grid cells failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .corpus import CorpusError, load_sequences, registry_table_csv
from .experiment import (
    ConfigError,
    DataMissingError,
    ExperimentError,
    NoRecordsError,
    load_grid_config,
    load_records,
    report,
    run_grid,
)
from .tokenizers import (
    TokenizerError,
    bpe_encode,
    bpe_train,
    encode_ids,
    load_vocabulary,
    save_vocabulary,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CELL_FAILURES = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genoseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a tokenizer x scheme x depth grid")
    run_p.add_argument("--config", required=True, help="grid config JSON file")
    run_p.add_argument("--data", required=True, help="directory containing one subdirectory per task")
    run_p.add_argument("--out", required=True, help="run directory for records and caches")
    run_p.add_argument("--workers", type=int, default=1, help="parallel cell workers")

    report_p = sub.add_parser("report", help="render CSV reports from a run directory")
    report_p.add_argument("--dir", required=True, help="run directory produced by `genoseq run`")
    report_p.add_argument("--layout", required=True, choices=("by-scheme", "robustness"))
    report_p.add_argument("--out", default=None, help="output directory (default: <dir>/reports)")

    registry_p = sub.add_parser("registry", help="embedded GUE task statistics")
    registry_sub = registry_p.add_subparsers(dest="registry_command", required=True)
    registry_sub.add_parser("list", help="print the task registry as CSV")

    tok_p = sub.add_parser("tokenizer", help="train or apply a BPE vocabulary")
    tok_sub = tok_p.add_subparsers(dest="tokenizer_command", required=True)
    tok_train = tok_sub.add_parser("train", help="learn BPE merges from a dataset CSV")
    tok_train.add_argument("--input", required=True, help="training split CSV (sequence,label)")
    tok_train.add_argument("--merges", type=int, required=True, help="number of merge iterations")
    tok_train.add_argument("--out", required=True, help="output vocabulary JSON path")
    tok_encode = tok_sub.add_parser("encode", help="tokenize one sequence with a saved vocabulary")
    tok_encode.add_argument("--vocab", required=True, help="vocabulary JSON path")
    tok_encode.add_argument("--seq", required=True, help="DNA sequence to encode")
    tok_encode.add_argument("--max-len", type=int, default=None, help="pad/truncate ids to this length")
    return parser


def _cmd_run(args) -> int:
    config = load_grid_config(args.config)
    print(f"grid: {config.num_cells} cells "
          f"({len(config.tasks)} tasks x {len(config.tokenizers)} tokenizers x "
          f"{len(config.schemes)} schemes x {len(config.depths)} depths x {len(config.seeds)} seeds)")
    result = run_grid(config, args.data, args.out, workers=args.workers)
    print(f"executed {result.executed}, resumed {result.skipped}, failed {len(result.failures)}")
    for key, error in sorted(result.failures.items()):
        print(f"FAILED {key}: {error}", file=sys.stderr)
    return EXIT_CELL_FAILURES if result.failures else EXIT_OK


def _cmd_report(args) -> int:
    records = load_records(args.dir)
    out_dir = Path(args.out) if args.out else Path(args.dir) / "reports"
    for path in report(records, args.layout, out_dir):
        print(path)
    return EXIT_OK


def _cmd_registry(args) -> int:
    sys.stdout.write(registry_table_csv())
    return EXIT_OK


def _cmd_tokenizer(args) -> int:
    if args.tokenizer_command == "train":
        corpus = load_sequences(args.input)
        vocab = bpe_train(corpus, args.merges)
        save_vocabulary(vocab, args.out)
        print(f"wrote {args.out}: {len(vocab)} tokens, {len(vocab.merges)} merges")
        return EXIT_OK
    vocab = load_vocabulary(args.vocab)
    tokens = bpe_encode(args.seq, vocab)
    print("tokens:", " ".join(tokens))
    if args.max_len is not None:
        encoded = encode_ids(tokens, vocab, args.max_len)
        print("ids:", " ".join(str(i) for i in encoded.ids))
    else:
        print("ids:", " ".join(str(vocab.id_of(t)) for t in tokens))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help, 2 for usage errors; fold the latter to 1
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "registry":
            return _cmd_registry(args)
        if args.command == "tokenizer":
            return _cmd_tokenizer(args)
    except (ConfigError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, TokenizerError, DataMissingError, NoRecordsError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

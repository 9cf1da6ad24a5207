"""Command-line entry: convert WESAD subject archives in bulk."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .convert import ConversionError, convert_subject


def find_subjects(in_dir: Path) -> list[str]:
    """Subject ids with both an archive and a readme (S2, S3, ... layout)."""
    ids = []
    for pkl in sorted(in_dir.glob("**/S*.pkl")):
        sid = pkl.stem
        if (pkl.parent / f"{sid}_readme.txt").exists():
            ids.append(sid)
    return ids


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wesad-convert",
        description="Convert WESAD per-subject archives into per-device "
                    "columnar recordings.")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="dataset root holding S*/S*.pkl and readme files")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--subjects", nargs="*", default=None,
                        help="subject ids to convert (default: all found)")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")

    in_dir = Path(args.in_dir)
    subjects = args.subjects or find_subjects(in_dir)
    if not subjects:
        print(f"no subject archives found under {in_dir}", file=sys.stderr)
        return 2

    manifests = []
    for sid in subjects:
        matches = sorted(in_dir.glob(f"**/{sid}.pkl"))
        if not matches:
            print(f"subject {sid}: no archive found", file=sys.stderr)
            return 2
        archive = matches[0]
        readme = archive.parent / f"{sid}_readme.txt"
        try:
            manifest = convert_subject(archive, readme, args.out)
        except ConversionError as exc:
            print(f"subject {sid}: {exc}", file=sys.stderr)
            return 2
        manifests.append(manifest)
        print(f"{sid}: {manifest.labels_out} labeled rows kept, "
              f"{manifest.labels_dropped} dropped")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "conversion_manifest.json", "w") as fh:
        json.dump([m.to_dict() for m in manifests], fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

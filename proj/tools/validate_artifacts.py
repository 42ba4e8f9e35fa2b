#!/usr/bin/env python3
"""Validate the JSON files in one or more run directories against docs/schemas."""
import json
import sys
from pathlib import Path

import jsonschema

SCHEMAS = Path(__file__).resolve().parent.parent / "docs" / "schemas"
FILES = {
    "metrics.json": "metrics.schema.json",
    "train_report.json": "train_report.schema.json",
    "norm.json": "norm.schema.json",
}


def main(dirs):
    checked = 0
    for d in map(Path, dirs):
        for name, schema_name in FILES.items():
            path = d / name
            if not path.exists():
                continue
            schema = json.loads((SCHEMAS / schema_name).read_text())
            jsonschema.validate(json.loads(path.read_text()), schema)
            print(f"ok {path}")
            checked += 1
    if checked == 0:
        print("no artifacts found", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

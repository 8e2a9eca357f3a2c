#!/usr/bin/env python

"""Gather the summaries of JSON result files into one CSV table."""

import os
import json
import argparse
from glob import glob

from zoegd.utils.output import to_plain, write_results


def collect(paths):
    rows = []
    for path in sorted(paths):
        with open(path, encoding='utf-8') as f:
            doc = json.load(f)
        row = {'file': os.path.basename(path)}
        for key, value in doc.get('summary', {}).items():
            # nested classification objects are flattened one level
            if isinstance(value, dict):
                row.update({f'{key}.{k}': v for k, v in value.items()})
            else:
                row[key] = value
        rows.append(to_plain(row))
    return rows


if __name__ == '__main__':
    parser = argparse.ArgumentParser()
    parser.add_argument("input_dir", help="directory with the JSON result files")
    parser.add_argument("-p", "--pattern", help="glob pattern for input files", default='*.json')
    parser.add_argument("-o", "--out", help="output CSV ('-' for stdout)", default='-')
    args = parser.parse_args()

    write_results(args.out, collect(glob(os.path.join(args.input_dir, args.pattern))))

# Copyright 2026 The milvae Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts the UCI MUSK C4.5 data files (clean1.data / clean2.data) into the
bag CSV format read by `milvae` (header: bag_id,label,f0,...,f165).

MUSK rows look like:
    MOLECULE_NAME,CONFORMATION_NAME,f1,...,f166,class
where class is 1 for musk molecules and 0 otherwise. The molecule name is the
bag id; the conformation name is dropped.

Usage:
    python3 tools/musk_to_bags.py clean1.data data/musk1.csv
"""

import argparse
import sys


def convert(src_path: str, dst_path: str) -> None:
    rows = []
    n_features = None
    with open(src_path, "r", encoding="utf-8") as src:
        for line_no, line in enumerate(src, start=1):
            line = line.strip().rstrip(".")
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) < 4:
                raise ValueError(f"line {line_no}: too few fields")
            molecule = fields[0]
            features = fields[2:-1]
            if n_features is None:
                n_features = len(features)
            elif len(features) != n_features:
                raise ValueError(
                    f"line {line_no}: expected {n_features} features, got {len(features)}"
                )
            label = 1 if float(fields[-1]) >= 0.5 else -1
            rows.append((molecule, label, [float(f) for f in features]))

    if not rows:
        raise ValueError("no data rows found")
    with open(dst_path, "w", encoding="utf-8") as dst:
        header = ",".join(["bag_id", "label"] + [f"f{i}" for i in range(n_features)])
        dst.write(header + "\n")
        for molecule, label, features in rows:
            dst.write(f"{molecule},{label}," + ",".join(repr(v) for v in features) + "\n")

    bags = {m for m, _, _ in rows}
    pos = {m for m, l, _ in rows if l == 1}
    print(
        f"wrote {dst_path}: {len(bags)} bags ({len(pos)} positive), "
        f"{len(rows)} instances, d={n_features}"
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("src", help="MUSK C4.5 data file (e.g. clean1.data)")
    parser.add_argument("dst", help="output bag CSV path")
    args = parser.parse_args()
    convert(args.src, args.dst)
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
# Copyright 2026 The hybridspec Authors. All Rights Reserved.
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
"""Writes the deterministic repetitive text fixture (about 50 KB).

Each line is a short sentence assembled from a few fixed phrase lists, so
the same byte transitions recur constantly while the phrase chosen at each
boundary stays uncertain.
"""

import argparse
import random

SUBJECTS = ["the server", "a client", "the parser", "our scheduler", "the cache", "each worker",
            "the compiler", "this module"]
VERBS = ["reads", "writes", "validates", "compresses", "encrypts", "parses", "merges", "sorts"]
OBJECTS = ["the input file", "a config block", "the request header", "every log record",
           "the output buffer", "a json document", "the index table", "each data page"]
ENDINGS = ["before the deadline .", "after the first retry .", "with a fixed budget .",
           "under heavy load .", "in a single pass .", "for the next step ."]


def sentence(rng):
    return f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)} {rng.choice(ENDINGS)}\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/repetitive_50k.txt")
    parser.add_argument("--bytes", type=int, default=50 * 1024)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    rng = random.Random(args.seed)
    parts, size = [], 0
    while size < args.bytes:
        line = sentence(rng)
        parts.append(line)
        size += len(line)
    text = "".join(parts)[: args.bytes]
    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        f.write(text)


if __name__ == "__main__":
    main()

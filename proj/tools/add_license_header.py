#!/usr/bin/env python3
"""Prepends the Apache-2.0 header to every C++ source and header in the repo.

Idempotent: files that already start with the header are left alone.
Vendored third-party headers are skipped.
"""

import pathlib
import sys

HEADER = """/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
"""

SKIP = {"vendor", "build", "examples", ".git"}


def main(root: pathlib.Path) -> int:
    changed = 0
    for path in sorted(root.rglob("*")):
        if path.suffix not in {".hpp", ".cpp"} or SKIP & set(path.relative_to(root).parts):
            continue
        text = path.read_text()
        if text.startswith(HEADER):
            continue
        path.write_text(HEADER + "\n" + text)
        changed += 1
    print(f"added header to {changed} files")
    return 0


if __name__ == "__main__":
    sys.exit(main(pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".").resolve()))

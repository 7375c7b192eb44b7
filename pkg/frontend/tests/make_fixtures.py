"""Build a small labeling-study fixture for frontend integration tests.

Usage: python3 make_fixtures.py <output-dir> [n_pairs] [examiner]
Writes the items manifest, images, sealed truth, an assignment covering all
items for one examiner, and an empty judgments file.
"""

import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from camcast import evaluation as ev
from camcast.descriptors import WeatherDescriptor
from camcast.fields import DESCRIPTOR_DIM


def main() -> None:
    outdir = Path(sys.argv[1])
    n_pairs = int(sys.argv[2]) if len(sys.argv) > 2 else 5
    examiner = sys.argv[3] if len(sys.argv) > 3 else "bot"
    rng = np.random.default_rng(42)
    base = datetime(2020, 7, 1, 8, 0, tzinfo=timezone.utc)

    candidates = []
    for i in range(n_pairs * 3):
        t0 = base + timedelta(hours=i % 6, days=i // 6)
        descriptor = WeatherDescriptor(
            vector=rng.normal(size=DESCRIPTOR_DIM), valid_time=t0
        )
        candidates.append(
            ev.EvalCandidate(
                site_id="fixture",
                t0=t0,
                lead_minutes=60,
                present_image=rng.uniform(-1, 1, (16, 32, 3)).astype(np.float32),
                present_descriptor=descriptor,
                future_image=rng.uniform(-1, 1, (16, 32, 3)).astype(np.float32),
                future_descriptor=descriptor,
            )
        )

    def generate(candidate, gen_rng):
        return np.clip(candidate.future_image + 0.05 * gen_rng.normal(), -1, 1)

    items = ev.sample_realism_set(candidates, generate, n_pairs=n_pairs, seed=7)
    outdir.mkdir(parents=True, exist_ok=True)
    ev.write_items(items, outdir)
    assignment = ev.assign_items(items, [examiner], per_examiner=len(items), seed=7)
    ev.write_assignments(assignment, outdir / ev.ASSIGNMENTS_FILE_NAME)
    (outdir / "judgments.jsonl").write_text("")
    print(f"{len(items)} items for examiner {examiner!r} in {outdir}")


if __name__ == "__main__":
    main()

"""On-disk corpus layout and loading.

    <root>/
      images/<id>.pgm     rendered staff images (binary graymap)
      labels.txt          all label encodings per sample (see labels module)
      splits.txt          "<id>\\t<train|val|test>" per line
      hard.txt            ids of the high-density subset, one per line
      stats.txt           corpus statistics table
      meta.txt            generation settings ("key = value" lines)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ingest
from . import labels as lb
from . import render as rd
from .labels import LabelRecord
from .model import preprocess


@dataclass(frozen=True)
class Dataset:
    root: Path
    records: dict[str, LabelRecord]
    order: tuple[str, ...]
    splits: dict[str, list[str]]
    hard_ids: tuple[str, ...]

    def ids(self, split: str | None = None, hard_only: bool = False) -> list[str]:
        pool = list(self.order) if split is None else list(self.splits.get(split, []))
        if hard_only:
            hard = set(self.hard_ids)
            pool = [i for i in pool if i in hard]
        return pool

    def image_path(self, sample_id: str) -> Path:
        return self.root / "images" / f"{sample_id}.pgm"

    def load_image(self, sample_id: str) -> np.ndarray:
        return rd.read_pgm(self.image_path(sample_id))

    def load_preprocessed(self, sample_id: str, target_height: int) -> np.ndarray:
        return preprocess(self.load_image(sample_id), target_height)


def build_dataset(
    out_dir: str | Path,
    n_samples: int,
    seed: int,
    knobs: rd.GeneratorKnobs | None = None,
    noise: rd.NoiseOptions | None = None,
    hard_threshold: int = ingest.HARD_DENSITY_THRESHOLD,
    fractions: tuple[float, float, float] = ingest.SPLIT_FRACTIONS,
) -> Dataset:
    """Render a synthetic corpus with labels, splits, and statistics.

    Byte-reproducible for a fixed (n_samples, seed, knobs, noise).
    """
    knobs = knobs or rd.GeneratorKnobs()
    knobs.validate()
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    records: list[LabelRecord] = []
    stat_rows = []
    for i in range(n_samples):
        sid = f"{i:05d}"
        rng = np.random.default_rng((seed, i))
        score = rd.generate_random_score(rng, knobs)
        image = rd.render(score, seed=int(np.random.default_rng((seed, i, 1)).integers(2**31)),
                          noise=noise)
        rd.write_pgm(root / "images" / f"{sid}.pgm", image)
        records.append(lb.make_record(sid, score))
        voices = max((len(v) for v in score.per_measure_voices()), default=0)
        stat_rows.append((sid, score, voices))
    lb.write_label_file(root / "labels.txt", records)
    stats = ingest.compute_stats(stat_rows)
    (root / "stats.txt").write_text(stats.table())
    hard_ids = ingest.hard_filter(stats, hard_threshold)
    (root / "hard.txt").write_text("".join(f"{i}\n" for i in hard_ids))
    ids = [r.sample_id for r in records]
    if len(ids) >= 10:
        splits = ingest.split(ids, seed=seed, fractions=fractions)
    else:
        splits = {"train": ids, "val": [], "test": []}
    with open(root / "splits.txt", "w") as fh:
        for name in ("train", "val", "test"):
            for sid in splits[name]:
                fh.write(f"{sid}\t{name}\n")
    meta = {
        "n_samples": n_samples,
        "seed": seed,
        "hard_threshold": hard_threshold,
        "fractions": ",".join(f"{f:g}" for f in fractions),
        "noise": "on" if noise is not None else "off",
        **{f"knobs.{k}": v for k, v in vars(knobs).items()},
    }
    (root / "meta.txt").write_text(
        "".join(f"{k} = {v}\n" for k, v in meta.items())
    )
    return load_dataset(root)


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    records = lb.read_label_file(root / "labels.txt")
    splits: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    splits_path = root / "splits.txt"
    if splits_path.exists():
        for line in splits_path.read_text().splitlines():
            if not line:
                continue
            sid, _, name = line.partition("\t")
            splits.setdefault(name, []).append(sid)
    hard_path = root / "hard.txt"
    hard = tuple(hard_path.read_text().split()) if hard_path.exists() else ()
    return Dataset(
        root=root,
        records={r.sample_id: r for r in records},
        order=tuple(r.sample_id for r in records),
        splits=splits,
        hard_ids=hard,
    )

"""Input tables -> labelled, year-split, standardized monthly sequences.

Three CSV tables are ingested (header row, UTF-8, '.' decimals):

* ``playas.csv``: playa_id, huc8, author, static attributes, centroid_x, centroid_y
* ``monthly.csv``: playa_id, year, month, weather columns, water_pixels
* ``lulc.csv``: playa_id, year, one ``frac_<class>`` column per land-cover class

Static attributes repeat at every month, annual land-cover fractions are
broadcast to the twelve months of their year.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .model import SPLIT_NAMES, TEST, TRAIN, VALIDATION, SequenceSample, split_code


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# Sohl et al. land-cover classes and the raster codes that map into each.
LULC_CLASSES: Dict[str, Tuple[int, ...]] = {
    "water": (1,),
    "urban": (2,),
    "clearcut": (3,),
    "mining": (6,),
    "barren": (7,),
    "deciduous": (8,),
    "evergreen": (9,),
    "mixed": (10,),
    "grassland": (11,),
    "shrubland": (12,),
    "cropland": (13,),
    "pasture": (14,),
    "wetland": (15, 16),
}

WEATHER_FEATURES = (("temp_c", "degC"), ("precip_mm", "mm"), ("vpd", "hPa"))
STATIC_FEATURES = (
    ("area_acres", "acres"),
    ("wet_freq", "fraction"),
    ("road_dist_ft", "ft"),
    ("sat_thickness", "ft"),
    ("healthy", "flag"),
    ("farmed", "flag"),
    ("modified", "flag"),
    ("cluster", "flag"),
)


@dataclass
class FeatureSchema:
    """Ordered numeric feature roster, grouped by source table."""

    weather: Tuple[Tuple[str, str], ...] = WEATHER_FEATURES
    static: Tuple[Tuple[str, str], ...] = STATIC_FEATURES
    lulc_classes: Tuple[str, ...] = tuple(LULC_CLASSES)

    def __post_init__(self):
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    @property
    def weather_names(self) -> List[str]:
        return [n for n, _ in self.weather]

    @property
    def static_names(self) -> List[str]:
        return [n for n, _ in self.static]

    @property
    def lulc_names(self) -> List[str]:
        return [f"frac_{c}" for c in self.lulc_classes]

    @property
    def names(self) -> List[str]:
        return self.weather_names + self.static_names + self.lulc_names

    @property
    def units(self) -> List[str]:
        return [u for _, u in self.weather] + [u for _, u in self.static] + ["fraction"] * len(self.lulc_classes)

    def __len__(self) -> int:
        return len(self.names)

    def to_dict(self) -> dict:
        return {"weather": [list(x) for x in self.weather], "static": [list(x) for x in self.static], "lulc_classes": list(self.lulc_classes)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            weather=tuple(tuple(x) for x in d["weather"]),
            static=tuple(tuple(x) for x in d["static"]),
            lulc_classes=tuple(d["lulc_classes"]),
        )


@dataclass
class SplitSpec:
    train: Tuple[int, int] = (1984, 2010)
    validation: Tuple[int, int] = (2011, 2014)
    test: Tuple[int, int] = (2015, 2018)

    def __post_init__(self):
        self.train, self.validation, self.test = (tuple(int(y) for y in w) for w in (self.train, self.validation, self.test))
        for name, (lo, hi) in zip(SPLIT_NAMES, self.windows()):
            if lo > hi:
                raise ValueError(f"{name} window is empty: {lo}..{hi}")
        if not (self.train[1] + 1 == self.validation[0] and self.validation[1] + 1 == self.test[0]):
            raise ValueError("split windows must be disjoint, contiguous and ordered train < validation < test")

    def windows(self):
        return (self.train, self.validation, self.test)

    def to_dict(self) -> dict:
        return {"train": list(self.train), "validation": list(self.validation), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(train=tuple(d["train"]), validation=tuple(d["validation"]), test=tuple(d["test"]))


def derive_label(water_pixel_count) -> int:
    """1 if any water pixel was detected in the playa that month."""
    if water_pixel_count < 0:
        raise DataError(f"water pixel count must be >= 0, got {water_pixel_count}")
    return int(water_pixel_count >= 1)


def split_by_year(year: int, spec: SplitSpec) -> str:
    for name, (lo, hi) in zip(SPLIT_NAMES, spec.windows()):
        if lo <= year <= hi:
            return name
    raise DataError(f"year {year} falls outside every split window {spec.to_dict()}")


@dataclass
class DatasetVocab:
    playa: Dict[str, int]
    huc8: Dict[str, int]
    author: Dict[str, int]
    first_month: Tuple[int, int]
    last_month: Tuple[int, int]

    @property
    def sizes(self) -> Dict[str, int]:
        return {"playa": len(self.playa), "huc8": len(self.huc8), "author": len(self.author)}

    @property
    def n_months(self) -> int:
        (y0, m0), (y1, m1) = self.first_month, self.last_month
        return (y1 * 12 + m1) - (y0 * 12 + m0) + 1

    def to_dict(self) -> dict:
        return {
            "playa": self.playa,
            "huc8": self.huc8,
            "author": self.author,
            "first_month": list(self.first_month),
            "last_month": list(self.last_month),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetVocab":
        return cls(
            playa={str(k): int(v) for k, v in d["playa"].items()},
            huc8={str(k): int(v) for k, v in d["huc8"].items()},
            author={str(k): int(v) for k, v in d["author"].items()},
            first_month=tuple(d["first_month"]),
            last_month=tuple(d["last_month"]),
        )


@dataclass
class Dataset:
    vocab: DatasetVocab
    samples: List[SequenceSample]
    schema: FeatureSchema = field(default_factory=FeatureSchema)
    split: SplitSpec = field(default_factory=SplitSpec)


@dataclass
class StandardizerStats:
    names: List[str]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizerStats":
        return cls(list(d["names"]), np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


STD_FLOOR = 1e-12


def fit_standardizer(dataset: Union[Dataset, Sequence[SequenceSample]], splits=("train",), names=None) -> StandardizerStats:
    """Per-feature mean and population std over the months tagged ``splits``.

    Every playa-month counts once, so static and annual features are weighted
    by the number of months they appear in. A constant column gets std 0 and
    its mean set to the exact constant.
    """
    samples = dataset.samples if isinstance(dataset, Dataset) else dataset
    if names is None:
        names = dataset.schema.names if isinstance(dataset, Dataset) else [f"f{k}" for k in range(samples[0].features.shape[1])]
    codes = [split_code(s) for s in splits]
    rows = [s.features[np.isin(s.split, codes)] for s in samples]
    X = np.concatenate(rows, axis=0) if rows else np.empty((0, len(names)))
    if X.shape[0] == 0:
        raise DataError("cannot fit standardizer: train window is empty")
    if X.shape[1] != len(names):
        raise DataError(f"feature width {X.shape[1]} does not match schema ({len(names)} names)")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = np.all(X == X[0], axis=0)
    mean[constant] = X[0, constant]
    std[constant] = 0.0
    return StandardizerStats(list(names), mean, std)


def apply_standardizer(stats: StandardizerStats, features) -> np.ndarray:
    """``(x - mean) / max(std, 1e-12)`` along the last axis."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != len(stats.mean):
        raise DataError(f"feature width {features.shape[-1]} does not match standardizer ({len(stats.mean)})")
    return (features - stats.mean) / np.maximum(stats.std, STD_FLOOR)


def standardize_dataset(dataset: Dataset, stats: StandardizerStats) -> Dataset:
    if stats.names != dataset.schema.names:
        raise DataError("standardizer feature names do not match the dataset schema")
    samples = [
        SequenceSample(
            s.playa_id, s.playa_index, s.huc8_index, s.author_index,
            apply_standardizer(stats, s.features), s.labels, s.split, s.months,
        )
        for s in dataset.samples
    ]
    return Dataset(dataset.vocab, samples, dataset.schema, dataset.split)


def natural_key(value: str):
    try:
        return (0, int(value), value)
    except ValueError:
        return (1, 0, value)


def _read_table(source, name: str, required: Sequence[str], id_cols: Sequence[str]) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        df = source.copy()
        label = name
    else:
        label = str(source)
        try:
            df = pd.read_csv(source, dtype={c: str for c in id_cols}, encoding="utf-8", float_precision="round_trip")
        except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
            raise DataError(f"{label}: cannot parse ({exc})") from None
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"{label}: missing columns {missing}")
    for c in id_cols:
        df[c] = df[c].astype(str).str.strip()
    numeric = [c for c in required if c not in id_cols]
    for c in numeric:
        values = pd.to_numeric(df[c], errors="coerce")
        bad = values.isna()
        if bad.any():
            line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
            raise DataError(f"{label}, line {line}: column {c!r} is not numeric")
        df[c] = values
    df.attrs["label"] = label
    return df


def _line(df: pd.DataFrame, pos: int) -> str:
    return f"{df.attrs.get('label', 'table')}, line {pos + 2}"


def ingest_dataset(
    playas_table,
    monthly_table,
    lulc_table,
    spec: Optional[SplitSpec] = None,
    schema: Optional[FeatureSchema] = None,
    max_playas: Optional[int] = None,
) -> Dataset:
    """Assemble one SequenceSample per playa from the three input tables.

    Tables may be paths or DataFrames. Every playa must cover every month
    between the earliest and latest month in ``monthly``; rows referencing
    playas outside the (optionally truncated) playa list are rejected unless
    ``max_playas`` dropped them. Samples come out sorted by playa id.
    """
    spec = spec or SplitSpec()
    schema = schema or FeatureSchema()
    playas = _read_table(playas_table, "playas", ["playa_id", "huc8", "author", *schema.static_names], ["playa_id", "huc8", "author"])
    monthly = _read_table(monthly_table, "monthly", ["playa_id", "year", "month", *schema.weather_names, "water_pixels"], ["playa_id"])
    lulc = _read_table(lulc_table, "lulc", ["playa_id", "year", *schema.lulc_names], ["playa_id"])

    dup = playas["playa_id"].duplicated()
    if dup.any():
        pos = int(np.flatnonzero(dup.to_numpy())[0])
        raise DataError(f"{_line(playas, pos)}: duplicate playa_id {playas['playa_id'].iloc[pos]!r}")
    ids = sorted(playas["playa_id"], key=natural_key)
    all_ids = set(ids)
    if max_playas is not None:
        ids = ids[:max_playas]
    if not ids:
        raise DataError("no playas to ingest")
    keep = set(ids)

    for df in (monthly, lulc):
        unknown = ~df["playa_id"].isin(all_ids)
        if unknown.any():
            pos = int(np.flatnonzero(unknown.to_numpy())[0])
            raise DataError(f"{_line(df, pos)}: unknown playa_id {df['playa_id'].iloc[pos]!r}")
    playas = playas[playas["playa_id"].isin(keep)]
    monthly = monthly[monthly["playa_id"].isin(keep)]
    lulc = lulc[lulc["playa_id"].isin(keep)]

    bad_month = ~monthly["month"].between(1, 12)
    if bad_month.any():
        raise DataError(f"{_line(monthly, int(monthly.index[bad_month.to_numpy()][0]))}: month outside 1..12")
    neg = monthly["water_pixels"] < 0
    if neg.any():
        pos = int(monthly.index[neg.to_numpy()][0])
        raise DataError(f"{_line(monthly, pos)}: water pixel count must be >= 0")

    serial = (monthly["year"].astype(np.int64) * 12 + monthly["month"].astype(np.int64) - 1).to_numpy()
    s0, s1 = int(serial.min()), int(serial.max())
    T = s1 - s0 + 1
    first = (s0 // 12, s0 % 12 + 1)
    last = (s1 // 12, s1 % 12 + 1)
    months = np.array([((s0 + k) // 12, (s0 + k) % 12 + 1) for k in range(T)], dtype=np.int64)
    split = np.array([split_code(split_by_year(int(y), spec)) for y in months[:, 0]], dtype=np.int8)

    pindex = {pid: k for k, pid in enumerate(ids)}
    huc_values = sorted(set(playas["huc8"]), key=natural_key)
    author_values = sorted(set(playas["author"]), key=natural_key)
    vocab = DatasetVocab(
        playa=pindex,
        huc8={h: k for k, h in enumerate(huc_values)},
        author={a: k for k, a in enumerate(author_values)},
        first_month=first,
        last_month=last,
    )
    N = len(ids)

    m_idx = monthly["playa_id"].map(pindex).to_numpy()
    t_idx = serial - s0
    filled = np.zeros((N, T), dtype=bool)
    flat = m_idx * T + t_idx
    uniq, counts = np.unique(flat, return_counts=True)
    if np.any(counts > 1):
        k = uniq[counts > 1][0]
        raise DataError(f"monthly: duplicate row for playa {ids[k // T]!r} at {tuple(months[k % T])}")
    filled.reshape(-1)[flat] = True
    if not filled.all():
        p, t = np.argwhere(~filled)[0]
        y, m = months[t]
        raise DataError(f"monthly: playa {ids[p]!r} is missing month {y:04d}-{m:02d}")
    weather = np.empty((N, T, len(schema.weather)))
    weather[m_idx, t_idx] = monthly[schema.weather_names].to_numpy(dtype=np.float64)
    pixels = np.empty((N, T))
    pixels[m_idx, t_idx] = monthly["water_pixels"].to_numpy(dtype=np.float64)
    labels = (pixels >= 1).astype(np.int8)

    fr = lulc[schema.lulc_names].to_numpy(dtype=np.float64)
    out_of_range = (fr < 0) | (fr > 1) | ~np.isfinite(fr)
    if out_of_range.any():
        r, c = np.argwhere(out_of_range)[0]
        raise DataError(f"{_line(lulc, int(lulc.index[r]))}: {schema.lulc_names[c]} = {fr[r, c]} outside [0, 1]")
    over = fr.sum(axis=1) > 1 + 1e-9
    if over.any():
        r = int(np.flatnonzero(over)[0])
        raise DataError(f"{_line(lulc, int(lulc.index[r]))}: land-cover fractions sum to {fr[r].sum():.6f} > 1")
    years = np.arange(first[0], last[0] + 1)
    Y = len(years)
    l_idx = lulc["playa_id"].map(pindex).to_numpy()
    y_idx = lulc["year"].astype(np.int64).to_numpy() - first[0]
    in_span = (y_idx >= 0) & (y_idx < Y)
    annual = np.full((N, Y, len(schema.lulc_classes)), np.nan)
    annual[l_idx[in_span], y_idx[in_span]] = fr[in_span]
    missing = np.isnan(annual[:, :, 0])
    if missing.any():
        p, y = np.argwhere(missing)[0]
        raise DataError(f"lulc: playa {ids[p]!r} has no land-cover row for year {years[y]}")
    lulc_monthly = annual[:, months[:, 0] - first[0]]

    static_df = playas.set_index("playa_id").loc[ids]
    static = static_df[schema.static_names].to_numpy(dtype=np.float64)
    features = np.concatenate([weather, np.broadcast_to(static[:, None, :], (N, T, static.shape[1])), lulc_monthly], axis=2)

    samples = []
    for k, pid in enumerate(ids):
        row = static_df.iloc[k]
        samples.append(
            SequenceSample(
                playa_id=pid,
                playa_index=k,
                huc8_index=vocab.huc8[row["huc8"]],
                author_index=vocab.author[row["author"]],
                features=np.ascontiguousarray(features[k]),
                labels=labels[k].copy(),
                split=split.copy(),
                months=months.copy(),
            )
        )
    return Dataset(vocab, samples, schema, spec)


def read_playa_centroids(path) -> pd.DataFrame:
    df = _read_table(path, "playas", ["playa_id", "centroid_x", "centroid_y"], ["playa_id"])
    return df[["playa_id", "centroid_x", "centroid_y"]]


def never_inundated_fraction(samples: Sequence[SequenceSample]) -> float:
    return float(np.mean([not np.any(s.labels) for s in samples]))


def split_report(dataset: Dataset) -> dict:
    """Month counts and label prevalence per split window."""
    labels = np.stack([s.labels for s in dataset.samples])
    split = dataset.samples[0].split
    report = {
        "n_playas": len(dataset.samples),
        "n_months": int(labels.shape[1]),
        "first_month": list(dataset.vocab.first_month),
        "last_month": list(dataset.vocab.last_month),
        "vocab_sizes": dataset.vocab.sizes,
        "never_inundated_fraction": never_inundated_fraction(dataset.samples),
        "features": dataset.schema.names,
        "splits": {},
    }
    for code, name in enumerate(SPLIT_NAMES):
        cols = split == code
        window = getattr(dataset.split, name)
        report["splits"][name] = {
            "years": list(window),
            "months": int(cols.sum()),
            "playa_months": int(cols.sum()) * labels.shape[0],
            "prevalence": float(labels[:, cols].mean()) if cols.any() else None,
        }
    return report


# ---------------------------------------------------------------------------
# synthetic fixture

def synth_split(n_years: int, last_year: int = 2018) -> SplitSpec:
    """Roughly 60/20/20 year split ending at ``last_year``."""
    n_eval = max(1, round(0.2 * n_years))
    first = last_year - n_years + 1
    train_end = last_year - 2 * n_eval
    return SplitSpec((first, train_end), (train_end + 1, train_end + n_eval), (train_end + n_eval + 1, last_year))


def synth_tables(n_playas: int, n_years: int, seed: int, schema: Optional[FeatureSchema] = None, threshold_range=(1.15, 1.6)):
    """Generate (playas, monthly, lulc) DataFrames and their SplitSpec.

    Precipitation is a seasonal sinusoid per playa with amplitude A_i and
    phase phi_i plus noise, clipped at zero. A month is wet iff this month's
    plus last month's precipitation exceeds theta_i = A_i * U(threshold_range).
    All other features are seeded noise.
    """
    if n_playas < 2 or n_years < 3:
        raise ValueError("synthetic data needs n_playas >= 2 and n_years >= 3")
    schema = schema or FeatureSchema()
    rng = np.random.default_rng(seed)
    spec = synth_split(n_years)
    first_year = spec.train[0]
    T = 12 * n_years
    year = first_year + np.arange(T) // 12
    month = np.arange(T) % 12 + 1

    amp = rng.uniform(20.0, 80.0, n_playas)
    phase = rng.uniform(0.0, 12.0, n_playas)
    theta = amp * rng.uniform(*threshold_range, n_playas)
    noise = rng.normal(0.0, 0.25, (n_playas, T)) * amp[:, None]
    precip = np.maximum(0.0, amp[:, None] * np.sin(2 * np.pi * (month[None, :] - phase[:, None]) / 12.0) + noise)
    prev = np.concatenate([np.zeros((n_playas, 1)), precip[:, :-1]], axis=1)
    wet = (precip + prev) > theta[:, None]
    pixels = np.where(wet, rng.integers(1, 40, (n_playas, T)), 0)

    split = np.array([split_code(split_by_year(int(y), spec)) for y in year])
    for code in (TRAIN, VALIDATION, TEST):
        window = wet[:, split == code]
        if not window.any() or window.all():
            raise ValueError(
                f"synthetic labels in the {SPLIT_NAMES[code]} window are single-class; adjust n_playas/n_years/thresholds"
            )

    ids = [str(k) for k in range(n_playas)]
    n_huc = max(2, n_playas // 10)
    hucs = [f"110{k:05d}" for k in range(n_huc)]
    authors = [f"author_{k}" for k in range(min(5, n_playas))]
    farmed = rng.random(n_playas) < 0.6
    modified = rng.random(n_playas) < 0.2
    playas = pd.DataFrame(
        {
            "playa_id": ids,
            "huc8": [hucs[k] for k in rng.integers(0, n_huc, n_playas)],
            "author": [authors[k] for k in rng.integers(0, len(authors), n_playas)],
            "area_acres": rng.lognormal(1.0, 0.8, n_playas),
            "wet_freq": rng.uniform(0.0, 0.3, n_playas),
            "road_dist_ft": rng.uniform(100.0, 5000.0, n_playas),
            "sat_thickness": rng.uniform(0.0, 150.0, n_playas),
            "healthy": (~farmed & ~modified).astype(int),
            "farmed": farmed.astype(int),
            "modified": modified.astype(int),
            "cluster": (rng.random(n_playas) < 0.3).astype(int),
            "centroid_x": rng.uniform(0.0, 1e5, n_playas),
            "centroid_y": rng.uniform(0.0, 1e5, n_playas),
        }
    )
    temp = 12.0 + 12.0 * np.sin(2 * np.pi * (month[None, :] - 4.0) / 12.0) + rng.normal(0.0, 2.0, (n_playas, T))
    vpd = np.maximum(0.0, 10.0 + 0.6 * temp + rng.normal(0.0, 2.0, (n_playas, T)))
    weather = {"temp_c": temp, "precip_mm": precip, "vpd": vpd}
    monthly = pd.DataFrame(
        {
            "playa_id": np.repeat(ids, T),
            "year": np.tile(year, n_playas),
            "month": np.tile(month, n_playas),
            **{name: weather[name].reshape(-1) if name in weather else rng.normal(size=n_playas * T) for name in schema.weather_names},
            "water_pixels": pixels.reshape(-1),
        }
    )
    years = np.arange(first_year, first_year + n_years)
    k = len(schema.lulc_classes)
    fr = rng.dirichlet(np.ones(k), (n_playas, n_years)) * rng.uniform(0.9, 1.0, (n_playas, n_years, 1))
    lulc = pd.DataFrame({"playa_id": np.repeat(ids, n_years), "year": np.tile(years, n_playas)})
    for j, name in enumerate(schema.lulc_names):
        lulc[name] = fr[:, :, j].reshape(-1)
    return playas, monthly, lulc, spec


def synth_generate(n_playas: int, n_years: int, seed: int, **kwargs) -> Dataset:
    """Deterministic learnable fixture, ingested through :func:`ingest_dataset`."""
    schema = kwargs.get("schema")
    playas, monthly, lulc, spec = synth_tables(n_playas, n_years, seed, **kwargs)
    return ingest_dataset(playas, monthly, lulc, spec, schema)


def write_tables(directory: Union[str, Path], playas: pd.DataFrame, monthly: pd.DataFrame, lulc: pd.DataFrame) -> Dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"playas": directory / "playas.csv", "monthly": directory / "monthly.csv", "lulc": directory / "lulc.csv"}
    playas.to_csv(paths["playas"], index=False)
    monthly.to_csv(paths["monthly"], index=False)
    lulc.to_csv(paths["lulc"], index=False)
    return paths

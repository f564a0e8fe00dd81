"""Dataset schema, CSV ingestion, scaling, windowing and synthetic scenarios.

CSV schema (one row per hour, header required)::

    timestamp,load_mw,temp_0,...,temp_{S-1},cond

``timestamp`` is ``YYYY-MM-DDTHH:00`` (UTC, hourly), ``load_mw`` is positive,
temperatures are degrees Fahrenheit and ``cond`` is one of clear, cloudy, rain.
Calendar one-hots are derived from the timestamp at ingestion.
"""
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import (
    ConfigError,
    ConstantFeature,
    DataError,
    EmptySplit,
    InsufficientHistory,
    MalformedRow,
    NonPositiveLoad,
    TimestampGap,
    UnknownFeature,
)
from .fileio import atomic_write_text

logger = logging.getLogger(__name__)

CONDITIONS = ("clear", "cloudy", "rain")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"
EPOCH = pd.Timestamp("1970-01-01T00:00")
HOURS_PER_DAY = 24

N_HOURS = 24
N_WEEKDAYS = 7
N_SEASONS = 4
N_CONDITIONS = len(CONDITIONS)


def hours_since_epoch(stamp):
    return int((pd.Timestamp(stamp) - EPOCH) // pd.Timedelta(hours=1))


def format_hours(hours):
    stamps = EPOCH + pd.to_timedelta(np.asarray(hours, dtype=np.int64), unit="h")
    return list(stamps.strftime(TIMESTAMP_FORMAT))


def hour_of_day(hours):
    return np.asarray(hours, dtype=np.int64) % HOURS_PER_DAY


def day_of_week(hours):
    # Hour 0 is a Thursday; Monday = 0.
    return (np.asarray(hours, dtype=np.int64) // HOURS_PER_DAY + 3) % 7


def season_of(hours):
    # Meteorological seasons: DJF=0, MAM=1, JJA=2, SON=3.
    months = pd.to_datetime(np.asarray(hours, dtype=np.int64), unit="h").month.to_numpy()
    return (months % 12) // 3


@dataclass(frozen=True)
class FeatureRecord:
    timestamp: int
    load: float
    temperatures: tuple
    condition: str

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise MalformedRow(f"unknown weather condition {self.condition!r}", timestamp=self.timestamp)
        if not np.all(np.isfinite(self.temperatures)):
            raise MalformedRow("temperatures must be finite", timestamp=self.timestamp)
        if not self.load > 0:
            raise NonPositiveLoad(f"load must be positive, got {self.load}", timestamp=self.timestamp)

    @property
    def indicators(self):
        hour = np.zeros(N_HOURS)
        hour[hour_of_day(self.timestamp)] = 1.0
        weekday = np.zeros(N_WEEKDAYS)
        weekday[day_of_week(self.timestamp)] = 1.0
        season = np.zeros(N_SEASONS)
        season[season_of([self.timestamp])[0]] = 1.0
        condition = np.zeros(N_CONDITIONS)
        condition[CONDITIONS.index(self.condition)] = 1.0
        return {"hour": hour, "weekday": weekday, "season": season, "condition": condition}


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable hourly series: timestamps, load (MW), station temperatures, condition codes."""

    timestamps: np.ndarray
    load: np.ndarray
    temperatures: np.ndarray
    conditions: np.ndarray

    def __post_init__(self):
        timestamps = _frozen(self.timestamps, np.int64)
        load = _frozen(self.load, np.float64)
        temperatures = _frozen(self.temperatures, np.float64)
        conditions = _frozen(self.conditions, np.int64)
        n = len(timestamps)
        if temperatures.ndim != 2 or temperatures.shape[0] != n or load.shape != (n,) or conditions.shape != (n,):
            raise DataError("dataset columns have inconsistent lengths")
        if temperatures.shape[1] < 1:
            raise DataError("at least one weather station is required")
        if not np.all(np.isfinite(temperatures)):
            raise MalformedRow("temperatures must be finite")
        if np.any((conditions < 0) | (conditions >= N_CONDITIONS)):
            raise MalformedRow("weather condition code out of range")
        bad = np.flatnonzero(~(load > 0))
        if bad.size:
            raise NonPositiveLoad(f"load must be positive, got {load[bad[0]]}", timestamp=int(timestamps[bad[0]]))
        steps = np.diff(timestamps)
        if np.any(steps != 1):
            at = int(np.flatnonzero(steps != 1)[0])
            raise TimestampGap(
                f"hours {format_hours([timestamps[at]])[0]} and {format_hours([timestamps[at + 1]])[0]} are not consecutive",
                after=int(timestamps[at]),
                before=int(timestamps[at + 1]),
            )
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "temperatures", temperatures)
        object.__setattr__(self, "conditions", conditions)

    def __len__(self):
        return len(self.timestamps)

    @property
    def n_stations(self):
        return self.temperatures.shape[1]

    @property
    def load_range(self):
        return float(self.load.min()), float(self.load.max())

    def record(self, i):
        return FeatureRecord(
            timestamp=int(self.timestamps[i]),
            load=float(self.load[i]),
            temperatures=tuple(float(v) for v in self.temperatures[i]),
            condition=CONDITIONS[int(self.conditions[i])],
        )

    def records(self):
        for i in range(len(self)):
            yield self.record(i)

    def index_of(self, hour):
        i = int(hour) - int(self.timestamps[0])
        if not 0 <= i < len(self):
            raise DataError(f"hour {hour} is outside the dataset", hour=int(hour))
        return i

    def slice(self, start, stop):
        return Dataset(
            self.timestamps[start:stop], self.load[start:stop], self.temperatures[start:stop], self.conditions[start:stop]
        )

    def with_load(self, load):
        return Dataset(self.timestamps, load, self.temperatures, self.conditions)

    def to_frame(self):
        frame = pd.DataFrame({"timestamp": format_hours(self.timestamps), "load_mw": self.load})
        for s in range(self.n_stations):
            frame[f"temp_{s}"] = self.temperatures[:, s]
        frame["cond"] = [CONDITIONS[c] for c in self.conditions]
        return frame


def _expected_header(n_stations):
    return ["timestamp", "load_mw"] + [f"temp_{s}" for s in range(n_stations)] + ["cond"]


def load_csv(path):
    """Read a dataset file, sorting rows by time and rejecting gaps."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise MalformedRow("file has no header row", path=str(path)) from exc
    except pd.errors.ParserError as exc:
        raise MalformedRow(f"bad field count: {exc}", path=str(path)) from exc

    columns = [c.strip() for c in frame.columns]
    n_stations = len(columns) - 3
    if n_stations < 1 or columns != _expected_header(n_stations):
        raise MalformedRow(f"unexpected header {columns}", path=str(path))
    frame.columns = columns
    if frame.empty:
        raise MalformedRow("file has no data rows", path=str(path))

    empty = (frame == "").any(axis=1).to_numpy()
    if empty.any():
        raise MalformedRow("missing field", path=str(path), line=int(np.flatnonzero(empty)[0]) + 2)

    stamps = pd.to_datetime(frame["timestamp"], format=TIMESTAMP_FORMAT, errors="coerce")
    bad = stamps.isna() | (stamps.dt.minute != 0)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise MalformedRow(f"cannot parse timestamp {frame['timestamp'].iloc[line - 2]!r}", path=str(path), line=line)
    hours = ((stamps - EPOCH) // pd.Timedelta(hours=1)).to_numpy(dtype=np.int64)

    numeric_columns = ["load_mw"] + [f"temp_{s}" for s in range(n_stations)]
    numeric = frame[numeric_columns].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(numeric).all(axis=1)
    if bad.any():
        raise MalformedRow("cannot parse numeric field", path=str(path), line=int(np.flatnonzero(bad)[0]) + 2)

    conditions = frame["cond"].str.strip().str.lower()
    unknown = ~conditions.isin(CONDITIONS)
    if unknown.any():
        line = int(np.flatnonzero(unknown.to_numpy())[0]) + 2
        raise MalformedRow(f"unknown weather condition {frame['cond'].iloc[line - 2]!r}", path=str(path), line=line)
    codes = conditions.map({name: i for i, name in enumerate(CONDITIONS)}).to_numpy(dtype=np.int64)

    order = np.argsort(hours, kind="stable")
    hours = hours[order]
    duplicate = np.flatnonzero(np.diff(hours) == 0)
    if duplicate.size:
        raise MalformedRow(f"duplicate timestamp {format_hours([hours[duplicate[0]]])[0]}", path=str(path))

    dataset = Dataset(hours, numeric[order, 0], numeric[order, 1:], codes[order])
    logger.debug("Loaded %d hourly records with %d stations from %s", len(dataset), n_stations, path)
    return dataset


def write_csv(ds, path):
    buffer = io.StringIO()
    ds.to_frame().to_csv(buffer, index=False, float_format="%.6f", lineterminator="\n")
    return atomic_write_text(path, buffer.getvalue())


@dataclass(frozen=True)
class ScalingParams:
    """Per-feature min-max bounds for load (MW) and each station temperature."""

    features: tuple
    minimum: tuple
    maximum: tuple

    def __post_init__(self):
        if not (len(self.features) == len(self.minimum) == len(self.maximum)):
            raise DataError("scaling bounds have inconsistent lengths")
        for name, lo, hi in zip(self.features, self.minimum, self.maximum):
            if not hi > lo:
                raise ConstantFeature(f"feature {name} has max <= min", feature=name, value=lo)

    @property
    def n_stations(self):
        return len(self.features) - 1

    def bounds(self, feature):
        try:
            i = self.features.index(feature)
        except ValueError:
            raise UnknownFeature(f"no scaling fitted for {feature!r}", feature=feature) from None
        return self.minimum[i], self.maximum[i]

    def span(self, feature):
        lo, hi = self.bounds(feature)
        return hi - lo

    def to_dict(self):
        return {"features": list(self.features), "minimum": list(self.minimum), "maximum": list(self.maximum)}

    @classmethod
    def from_dict(cls, payload):
        return cls(
            tuple(payload["features"]),
            tuple(float(v) for v in payload["minimum"]),
            tuple(float(v) for v in payload["maximum"]),
        )


def fit_scaling(ds):
    if len(ds) == 0:
        raise EmptySplit("cannot fit scaling on an empty dataset")
    names = ["load"] + [f"temp_{s}" for s in range(ds.n_stations)]
    columns = np.column_stack([ds.load, ds.temperatures])
    lo = columns.min(axis=0)
    hi = columns.max(axis=0)
    for name, a, b in zip(names, lo, hi):
        if not b > a:
            raise ConstantFeature(f"feature {name} is constant ({a})", feature=name, value=float(a))
    return ScalingParams(tuple(names), tuple(float(v) for v in lo), tuple(float(v) for v in hi))


def _scale(values, lo, hi):
    scaled = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    clipped = (scaled < 0.0) | (scaled > 1.0)
    return np.clip(scaled, 0.0, 1.0), clipped


@dataclass(frozen=True)
class FeatureLayout:
    """Column positions of one window row: load, temperatures, then the four one-hot groups."""

    n_stations: int

    @property
    def load(self):
        return 0

    @property
    def temperatures(self):
        return slice(1, 1 + self.n_stations)

    @property
    def hour(self):
        start = 1 + self.n_stations
        return slice(start, start + N_HOURS)

    @property
    def weekday(self):
        start = self.hour.stop
        return slice(start, start + N_WEEKDAYS)

    @property
    def season(self):
        start = self.weekday.stop
        return slice(start, start + N_SEASONS)

    @property
    def condition(self):
        start = self.season.stop
        return slice(start, start + N_CONDITIONS)

    @property
    def width(self):
        return self.condition.stop

    def encode(self, load, temperatures, hours, conditions):
        hours = np.asarray(hours, dtype=np.int64)
        rows = np.zeros((len(hours), self.width))
        rows[:, self.load] = load
        rows[:, self.temperatures] = temperatures
        index = np.arange(len(hours))
        rows[index, self.hour.start + hour_of_day(hours)] = 1.0
        rows[index, self.weekday.start + day_of_week(hours)] = 1.0
        rows[index, self.season.start + season_of(hours)] = 1.0
        rows[index, self.condition.start + np.asarray(conditions, dtype=np.int64)] = 1.0
        return rows

    def spans(self, params):
        spans = np.ones(self.width)
        spans[self.load] = params.span("load")
        for s in range(self.n_stations):
            spans[self.temperatures.start + s] = params.span(f"temp_{s}")
        return spans

    def temperature_mask(self, n_rows):
        mask = np.zeros((n_rows, self.width), dtype=bool)
        mask[:, self.temperatures] = True
        return mask


@dataclass(frozen=True)
class ScaledRecord:
    values: np.ndarray
    clipped: tuple


def apply_scaling(params, record):
    """Scale one FeatureRecord into a full feature row (continuous features plus one-hots)."""
    if len(record.temperatures) != params.n_stations:
        raise UnknownFeature(
            f"record has {len(record.temperatures)} stations, scaling covers {params.n_stations}",
            feature=f"temp_{min(len(record.temperatures), params.n_stations)}",
        )
    continuous = np.array([record.load, *record.temperatures], dtype=np.float64)
    lo = np.array(params.minimum)
    hi = np.array(params.maximum)
    scaled, clipped = _scale(continuous, lo, hi)
    names = tuple(name for name, flag in zip(params.features, clipped) if flag)
    if names:
        logger.warning("Clipped out-of-range features %s at hour %d", ", ".join(names), record.timestamp)
    layout = FeatureLayout(params.n_stations)
    row = layout.encode(
        scaled[0], scaled[1:][None, :], [record.timestamp], [CONDITIONS.index(record.condition)]
    )[0]
    return ScaledRecord(row, names)


def invert_scaling(params, value, feature):
    lo, hi = params.bounds(feature)
    if np.ndim(value):
        return lo + np.asarray(value, dtype=np.float64) * (hi - lo)
    return lo + float(value) * (hi - lo)


@dataclass(frozen=True, eq=False)
class FeatureWindow:
    """One training/forecast example.

    ``values`` is the (H+1) x d scaled matrix; row ``i`` holds the load observed
    at ``history_hours[i]`` and the exogenous block valid at ``hours[i]``
    (``hours[i] = history_hours[i] + k``). ``target`` is the scaled load at
    ``target_hour``; ``mask`` selects the temperature coordinates and ``spans``
    gives the physical width of each column.
    """

    values: np.ndarray
    target: float
    mask: np.ndarray
    spans: np.ndarray
    hours: np.ndarray
    target_hour: int
    layout: FeatureLayout = field(repr=False, default=None)

    @property
    def shape(self):
        return self.values.shape

    @property
    def temperature_spans(self):
        return self.spans[self.layout.temperatures] if self.layout else self.spans[self.mask[0]]

    def with_values(self, values):
        values = np.array(values, dtype=np.float64, copy=True)
        values.setflags(write=False)
        return FeatureWindow(values, self.target, self.mask, self.spans, self.hours, self.target_hour, self.layout)


def make_windows(ds, H, k, params):
    """Slide an (H+1)-hour window over ``ds`` with forecast lead ``k``; returns T - H - k windows."""
    if H < 0 or k < 1:
        raise DataError(f"history must be >= 0 and lead >= 1, got H={H}, k={k}", H=H, k=k)
    T = len(ds)
    if T < H + k + 1:
        raise InsufficientHistory(f"{T} records cannot hold one window with H={H}, k={k}", T=T, H=H, k=k)
    if ds.n_stations != params.n_stations:
        raise UnknownFeature(
            f"dataset has {ds.n_stations} stations, scaling covers {params.n_stations}",
            feature=f"temp_{min(ds.n_stations, params.n_stations)}",
        )
    layout = FeatureLayout(ds.n_stations)
    load, load_clipped = _scale(ds.load, *params.bounds("load"))
    temperatures = np.empty_like(ds.temperatures)
    temp_clipped = np.zeros(ds.temperatures.shape, dtype=bool)
    for s in range(ds.n_stations):
        temperatures[:, s], temp_clipped[:, s] = _scale(ds.temperatures[:, s], *params.bounds(f"temp_{s}"))
    n_clipped = int(load_clipped.sum() + temp_clipped.sum())
    if n_clipped:
        logger.warning("Clipped %d out-of-range values to [0, 1] while windowing %d records", n_clipped, T)

    rows = layout.encode(load, temperatures, ds.timestamps, ds.conditions)
    spans = layout.spans(params)
    spans.setflags(write=False)
    mask = layout.temperature_mask(H + 1)
    mask.setflags(write=False)

    windows = []
    for i in range(T - H - k):
        values = rows[i + k:i + H + k + 1].copy()
        values[:, layout.load] = load[i:i + H + 1]
        values.setflags(write=False)
        hours = ds.timestamps[i + k:i + H + k + 1].copy()
        hours.setflags(write=False)
        windows.append(
            FeatureWindow(values, float(load[i + H + k]), mask, spans, hours, int(ds.timestamps[i + H + k]), layout)
        )
    return windows


def split(ds, train_fraction):
    """Chronological split; the training part comes first."""
    if not 0.0 < train_fraction < 1.0:
        raise EmptySplit(f"train fraction must lie in (0, 1), got {train_fraction}", fraction=train_fraction)
    n_train = int(round(train_fraction * len(ds)))
    if n_train < 1 or n_train >= len(ds):
        raise EmptySplit(
            f"fraction {train_fraction} of {len(ds)} records leaves an empty side",
            fraction=train_fraction,
            records=len(ds),
        )
    return ds.slice(0, n_train), ds.slice(n_train, len(ds))


def windows_for_day(windows, day_start):
    day_start = int(day_start)
    return [w for w in windows if day_start <= w.target_hour < day_start + HOURS_PER_DAY]


def complete_days(windows, first_hour=None):
    """Start hours of the days whose 24 forecast targets are all covered by ``windows``."""
    targets = {w.target_hour for w in windows}
    starts = sorted({t - t % HOURS_PER_DAY for t in targets})
    days = []
    for start in starts:
        if first_hour is not None and start < first_hour:
            continue
        if all(start + h in targets for h in range(HOURS_PER_DAY)):
            days.append(start)
    return days


DEFAULT_START_HOUR = hours_since_epoch("2015-10-01T00:00")
NOISE_CLIP = 3.0  # load noise is truncated at this many standard deviations


@dataclass(frozen=True)
class SynthConfig:
    days: int
    stations: int
    seed: int
    noise: float = 0.01
    shares: tuple = ((1, 1.0),)
    start_hour: int = DEFAULT_START_HOUR
    base_load_mw: float = 6500.0
    comfort_temp: float = 60.0
    temp_sensitivity: float = 55.0

    def __post_init__(self):
        if self.days < 1 or self.stations < 1:
            raise ConfigError("synthetic data needs at least one day and one station", days=self.days, stations=self.stations)
        if not 0.0 <= self.noise <= 0.2:
            raise ConfigError(f"noise level must lie in [0, 0.2], got {self.noise}", noise=self.noise)
        weights = np.array([w for _, w in self.shares], dtype=np.float64)
        if weights.size == 0 or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ConfigError("nodal shares must be non-negative and sum to 1", shares=[list(s) for s in self.shares])
        if self.start_hour % HOURS_PER_DAY:
            raise ConfigError("synthetic series must start at midnight", start_hour=self.start_hour)


def _ar1(rng, n, phi, sigma, columns=None):
    shape = (n,) if columns is None else (n, columns)
    shocks = rng.normal(0.0, sigma, size=shape)
    series = np.empty(shape)
    series[0] = shocks[0]
    for t in range(1, n):
        series[t] = phi * series[t - 1] + shocks[t]
    return series


def load_profile(hours, temperatures, conditions, cfg):
    """Deterministic aggregate load (MW) for the given weather; the generator adds noise on top."""
    hours = np.asarray(hours, dtype=np.int64)
    hod = hour_of_day(hours)
    weekend = day_of_week(hours) >= 5
    deviation = np.asarray(temperatures, dtype=np.float64).mean(axis=1) - cfg.comfort_temp
    response = cfg.temp_sensitivity * np.sqrt(deviation ** 2 + 1.0)
    shape = 0.6 * np.exp(-(((hod - 8.0) / 2.5) ** 2)) + np.exp(-(((hod - 19.0) / 3.0) ** 2)) - 0.35
    conditions = np.asarray(conditions)
    weather = np.where(conditions == 2, 0.01, np.where(conditions == 1, 0.005, 0.0))
    return cfg.base_load_mw * (1.0 + 0.06 * shape - 0.04 * weekend + weather) + response


def synth_generate(cfg):
    """Generate an aggregate series and the per-bus share series, a pure function of ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    T = cfg.days * HOURS_PER_DAY
    hours = cfg.start_hour + np.arange(T, dtype=np.int64)
    hod = hour_of_day(hours)
    day_of_year = pd.to_datetime(hours, unit="h").dayofyear.to_numpy()

    day_conditions = rng.choice(N_CONDITIONS, size=cfg.days, p=[0.5, 0.3, 0.2])
    conditions = np.repeat(day_conditions, HOURS_PER_DAY)
    seasonal = 52.0 + 22.0 * np.sin(2.0 * np.pi * (day_of_year - 105) / 365.0)
    diurnal = 7.0 * np.sin(2.0 * np.pi * (hod - 9) / 24.0)
    synoptic = _ar1(rng, T, 0.97, 0.6)
    offsets = rng.normal(0.0, 2.0, size=cfg.stations)
    local = _ar1(rng, T, 0.9, 0.4, columns=cfg.stations)
    cooling = np.where(conditions == 2, -3.0, np.where(conditions == 1, -1.0, 0.0))
    temperatures = (seasonal + diurnal + synoptic + cooling)[:, None] + offsets[None, :] + local

    load = load_profile(hours, temperatures, conditions, cfg)
    if cfg.noise > 0:
        sigma = cfg.noise * cfg.base_load_mw
        load = load + np.clip(rng.normal(0.0, sigma, size=T), -NOISE_CLIP * sigma, NOISE_CLIP * sigma)
        load = np.maximum(load, 0.05 * cfg.base_load_mw)

    aggregate = Dataset(hours, load, temperatures, conditions)
    nodes = {int(bus): aggregate.with_load(share * load) for bus, share in cfg.shares if share > 0}
    logger.info(
        "Generated %d days of synthetic data (%d stations, %.0f-%.0f MW)", cfg.days, cfg.stations, *aggregate.load_range
    )
    return aggregate, nodes

"""Labeled synthetic buildings for exercising the whole pipeline.

Each point follows one statistical archetype (continuous sensor, scheduled
setpoint, binary command, ...) driven by a per-building occupancy schedule
and outdoor temperature. Signal distributions are shared across buildings;
point naming conventions differ per building.

Archetype parameters (all overridable through ``ARCHETYPES``):

==================  ==========================================  ===========
archetype           signal                                      noise sd
==================  ==========================================  ===========
zone_temp_sensor    first-order lag toward occupied/setback     0.12 degC
temp_setpoint       two-level daily schedule (cooling/heating)  none
fan_cmd             0/1, on while occupied, night cycling       none
damper_pos          % open, minimum position + economizer       2.0 %
humidity_sensor     daily sinusoid + slow random walk           0.7 %RH
min_sp / max_sp     constant limit, rare operator changes       none
==================  ==========================================  ===========
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import SynthError
from .ingest import DAY, Corpus, PointRecord, SeriesBundle

START = 1614556800  # 2021-03-01T00:00:00Z, a Monday
STEP = 300
SPARSE_STEP = 900


@dataclass(frozen=True)
class Variant:
    """A sub-behavior of an archetype with its own tags and name token."""

    name: str
    add: frozenset[str] = frozenset()
    remove: frozenset[str] = frozenset()
    weight: float = 1.0


@dataclass(frozen=True)
class Archetype:
    name: str
    tags: frozenset[str]
    units: str
    object_type: str
    noise_sd: float = 0.0
    variants: tuple[Variant, ...] = ()

    def tags_for(self, variant: Variant | None) -> set[str]:
        if variant is None:
            return set(self.tags)
        return (set(self.tags) - variant.remove) | variant.add


_F = frozenset
# unoccupied zone cooling limits instead of discharge-air limits
_UNOCC_ADD, _UNOCC_DROP = _F({"unocc", "cooling", "zone"}), _F({"discharge"})

ARCHETYPES: dict[str, Archetype] = {
    "zone_temp_sensor": Archetype(
        "zone_temp_sensor", _F({"sensor", "temp", "air", "zone", "point", "his"}), "degC", "analog-input", 0.12
    ),
    "temp_setpoint": Archetype(
        "temp_setpoint",
        _F({"sp", "temp", "air", "zone", "point", "his"}),
        "degC",
        "analog-value",
        variants=(
            Variant("cooling", _F({"cooling"}), weight=2.0),
            Variant("heating", _F({"heating"}), weight=2.0),
            Variant("occ_cooling", _F({"occ", "cooling"})),
            Variant("unocc_cooling", _F({"unocc", "cooling"})),
            Variant("occ_heating", _F({"occ", "heating"})),
            Variant("unocc_heating", _F({"unocc", "heating"})),
        ),
    ),
    "fan_cmd": Archetype(
        "fan_cmd",
        _F({"cmd", "fan", "point", "his"}),
        "",
        "binary-output",
        variants=(Variant("fan_cmd", weight=3.0), Variant("exhaust_fan", _F({"exhaust"}))),
    ),
    "damper_pos": Archetype(
        "damper_pos", _F({"cmd", "damper", "outside", "air", "point", "his"}), "%", "analog-output", 2.0
    ),
    "humidity_sensor": Archetype(
        "humidity_sensor", _F({"sensor", "humidity", "air", "zone", "point", "his"}), "%RH", "analog-input", 0.7
    ),
    "min_sp": Archetype(
        "min_sp",
        _F({"sp", "min", "temp", "air", "discharge", "point", "his"}),
        "degC",
        "analog-value",
        variants=(Variant("min_sp", weight=0.7), Variant("unocc_cooling_min", _UNOCC_ADD, _UNOCC_DROP, 0.3)),
    ),
    "max_sp": Archetype(
        "max_sp",
        _F({"sp", "max", "temp", "air", "discharge", "point", "his"}),
        "degC",
        "analog-value",
        variants=(Variant("max_sp", weight=0.7), Variant("unocc_cooling_max", _UNOCC_ADD, _UNOCC_DROP, 0.3)),
    ),
}

DEFAULT_MIX: dict[str, float] = {
    "zone_temp_sensor": 0.20,
    "temp_setpoint": 0.24,
    "fan_cmd": 0.14,
    "damper_pos": 0.14,
    "humidity_sensor": 0.12,
    "min_sp": 0.08,
    "max_sp": 0.08,
}

# token spellings per point kind, one dictionary per naming style
ABBREVIATIONS = (
    {
        "zone_temp_sensor": "ZN_T", "cooling": "CLG_SP", "heating": "HTG_SP", "occ_cooling": "OCC_CLG_SP",
        "unocc_cooling": "UNOCC_CLG_SP", "occ_heating": "OCC_HTG_SP", "unocc_heating": "UNOCC_HTG_SP",
        "fan_cmd": "SF_CMD", "exhaust_fan": "EF_CMD", "damper_pos": "OA_DMPR", "humidity_sensor": "ZN_RH",
        "min_sp": "DAT_MIN_SP", "max_sp": "DAT_MAX_SP", "unocc_cooling_min": "UNOCC_CLG_SP_MIN",
        "unocc_cooling_max": "UNOCC_CLG_SP_MAX",
    },
    {
        "zone_temp_sensor": "ZoneTemp", "cooling": "CoolSetpt", "heating": "HeatSetpt", "occ_cooling": "OccCoolSetpt",
        "unocc_cooling": "UnoccCoolSetpt", "occ_heating": "OccHeatSetpt", "unocc_heating": "UnoccHeatSetpt",
        "fan_cmd": "SupFanCmd", "exhaust_fan": "ExhFanCmd", "damper_pos": "OADamperPos",
        "humidity_sensor": "ZoneHumidity", "min_sp": "DischTempMin", "max_sp": "DischTempMax",
        "unocc_cooling_min": "UnoccCoolSetptMin", "unocc_cooling_max": "UnoccCoolSetptMax",
    },
    {
        "zone_temp_sensor": "Zone Temp", "cooling": "Cool SP", "heating": "Heat SP", "occ_cooling": "Occ Cool SP",
        "unocc_cooling": "Unocc Cool SP", "occ_heating": "Occ Heat SP", "unocc_heating": "Unocc Heat SP",
        "fan_cmd": "Fan Start Stop", "exhaust_fan": "Exhaust Fan SS", "damper_pos": "OA Damper",
        "humidity_sensor": "Space RH", "min_sp": "SAT Min Limit", "max_sp": "SAT Max Limit",
        "unocc_cooling_min": "Unocc Cool SP Min", "unocc_cooling_max": "Unocc Cool SP Max",
    },
)
EQUIP_STYLES = ("RTU{n}", "AHU-{n:02d}", "RTU {n}")
DELIMITERS = ("_", ".", " ", "-", ":")
ORDERS = ("equip_token", "token_equip", "building_equip_token")


@dataclass(frozen=True)
class NamingConvention:
    order: str = "equip_token"
    abbreviations: int = 0
    delimiter: str = "_"
    equip_style: int = 0

    def key(self) -> tuple:
        return (self.order, self.abbreviations, self.delimiter, self.equip_style)

    def name(self, building_id: str, equip_no: int, kind: str, room: int) -> str:
        token = ABBREVIATIONS[self.abbreviations][kind]
        equip = EQUIP_STYLES[self.equip_style].format(n=equip_no)
        d = self.delimiter
        if self.order == "token_equip":
            return f"{token}{d}{equip}{d}RM{room}"
        if self.order == "building_equip_token":
            return f"{building_id}{d}{equip}{d}{token}"
        return f"{equip}{d}{token}"


CONVENTIONS = (
    NamingConvention("equip_token", 0, "_", 0),
    NamingConvention("building_equip_token", 1, ".", 1),
    NamingConvention("token_equip", 2, " ", 2),
)


@dataclass
class Building:
    building_id: str
    points: list[PointRecord]
    series: dict[str, SeriesBundle]
    labels: dict[str, set[str]]
    archetype_of: dict[str, str] = field(default_factory=dict)
    decoys: set[str] = field(default_factory=set)
    variant_of: dict[str, str | None] = field(default_factory=dict)

    def corpus(self) -> Corpus:
        return Corpus(self.points, self.series, self.labels)

    def write(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "points.csv").write_text(points_csv(self.points), encoding="utf-8")
        (d / "labels.csv").write_text(labels_csv(self.labels), encoding="utf-8")
        write_series_csv(self.series, d / "timeseries.csv")


def allocate(mix: Mapping[str, float], n: int) -> dict[str, int]:
    """Largest-remainder split of ``n`` points over the mix proportions."""
    if not mix or any(w < 0 for w in mix.values()) or sum(mix.values()) <= 0:
        raise SynthError("bad_mix", "mix weights must be nonnegative with a positive sum")
    unknown = set(mix) - set(ARCHETYPES)
    if unknown:
        raise SynthError("bad_mix", f"unknown archetype(s): {', '.join(sorted(unknown))}")
    total = sum(mix.values())
    names = sorted(mix)
    exact = {k: n * mix[k] / total for k in names}
    counts = {k: int(np.floor(v)) for k, v in exact.items()}
    rest = n - sum(counts.values())
    for k in sorted(names, key=lambda k: (-(exact[k] - counts[k]), k))[:rest]:
        counts[k] += 1
    return counts


def _schedule(rng: np.random.Generator):
    open_h = rng.choice([6.0, 7.0, 8.0])
    close_h = rng.choice([19.0, 20.0, 21.0])
    return open_h, close_h


def _occupied(t: np.ndarray, open_h: float, close_h: float) -> np.ndarray:
    hour = (t % DAY) / 3600.0
    dow = ((t - START) // DAY) % 7  # 0 = Monday
    sunday = dow == 6
    o = np.where(sunday, 10.0, open_h)
    c = np.where(sunday, 17.0, close_h)
    return (hour >= o) & (hour < c)


def _outdoor(t: np.ndarray, rng: np.random.Generator, days: int) -> np.ndarray:
    daily_mean = 10.0 + np.cumsum(rng.normal(0, 1.2, size=days + 1))
    day = (t - START) // DAY
    hour = (t % DAY) / 3600.0
    return daily_mean[day] + 6.0 * np.sin(2 * np.pi * (hour - 9.0) / 24.0)


def _lag(target: np.ndarray, x0: float, k: float, noise: np.ndarray) -> np.ndarray:
    out = np.empty_like(target)
    x = x0
    for i in range(len(target)):
        x = x + k * (target[i] - x) + noise[i]
        out[i] = x
    return out


@dataclass(frozen=True)
class Policy:
    """Building-wide operating habits shared by all of its points."""

    sp_shift: float = 0.0
    setback: bool = True
    noise_scale: float = 1.0


def _policy(rng: np.random.Generator) -> Policy:
    return Policy(float(rng.normal(0, 0.8)), bool(rng.random() < 0.75), float(rng.uniform(0.6, 1.6)))


def _stuck(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A failed sensor: frozen at one reading, with rare resets."""
    n = len(x)
    out = np.full(n, x[int(rng.integers(0, n))])
    for cut in np.sort(rng.integers(0, n, size=int(rng.integers(0, 3)))):
        out[cut:] = x[cut]
    return out


def _signal(kind: str, variant: str | None, t, occ, outdoor, rng, policy: Policy = Policy()) -> np.ndarray:
    n = len(t)
    sd = ARCHETYPES[kind].noise_sd * policy.noise_scale
    if kind == "zone_temp_sensor":
        occ_sp = 22.0 + policy.sp_shift + rng.normal(0, 0.6)
        if rng.random() < 0.2:  # unconditioned space, floats with the weather
            target = 0.5 * outdoor + 9.0 + rng.normal(0, 2.0)
            k = STEP / 14400.0
        else:
            setback = 17.5 + rng.normal(0, 0.8) if policy.setback else occ_sp
            target = np.where(occ, occ_sp, np.maximum(setback, outdoor * 0.3 + 14.0))
            k = STEP / 5400.0
        x = _lag(target, float(target[0]), k, rng.normal(0, 0.02, size=n))
        x = x + rng.normal(0, sd, size=n)
        return _stuck(x, rng) if rng.random() < 0.05 else x
    if kind == "temp_setpoint":
        if variant.endswith("cooling"):
            occ_v, unocc_v = 23.5 + rng.normal(0, 0.7), 26.5 + rng.normal(0, 0.8)
        else:
            occ_v, unocc_v = 21.0 + rng.normal(0, 0.7), 16.5 + rng.normal(0, 0.8)
        occ_v += policy.sp_shift
        if variant.startswith(("occ", "unocc")):  # configured value, not the live schedule
            x = np.full(n, occ_v if variant.startswith("occ") else unocc_v)
            if rng.random() < 0.2:
                x[rng.integers(0, n) :] += rng.choice([-0.5, 0.5])
            return np.round(x * 2) / 2
        if not policy.setback or rng.random() < 0.2:
            unocc_v = occ_v
        x = np.where(occ, occ_v, unocc_v)
        if rng.random() < 0.3:
            day = (t - START) // DAY
            bump = rng.choice([-0.5, 0.0, 0.5], size=day.max() + 1)
            x = x + bump[day]
        return np.round(x * 2) / 2
    if kind == "fan_cmd":
        if rng.random() < 0.15:  # runs around the clock, off for rare service stops
            on = np.ones(n, dtype=bool)
            for cut in rng.integers(0, n, size=int(rng.integers(0, 3))):
                on[cut : cut + int(rng.integers(3, 24))] = False
            return on.astype(np.float64)
        lead_steps = int(rng.integers(0, 13))  # start up to an hour early
        on = occ | np.roll(occ, -lead_steps)
        if rng.random() < 0.5:
            period = int(rng.integers(18, 30))
            duty = int(rng.integers(2, 5))
            phase = int(rng.integers(0, period))
            cyc = ((np.arange(n) + phase) % period) < duty
            on = on | (cyc & ~occ)
        return on.astype(np.float64)
    if kind == "damper_pos":
        if rng.random() < 0.3:  # two-position damper
            return np.where(occ, rng.choice([20.0, 100.0]), 0.0)
        min_pos = rng.uniform(15, 25)
        econ = np.clip((18.0 - np.abs(outdoor - 14.0)) / 6.0, 0.0, 1.0) * rng.uniform(30, 60)
        x = np.where(occ, min_pos + econ, 0.0)
        x = x + np.where(occ, rng.normal(0, sd, size=n), 0.0)
        return np.clip(x, 0.0, 100.0)
    if kind == "humidity_sensor":
        base = rng.uniform(30, 55)
        hour = (t % DAY) / 3600.0
        drift = np.cumsum(rng.normal(0, 0.05, size=n))
        x = base + rng.uniform(1.0, 6.0) * np.sin(2 * np.pi * (hour - 14.0) / 24.0) + drift
        x = np.clip(x + rng.normal(0, sd, size=n), 10.0, 90.0)
        return _stuck(x, rng) if rng.random() < 0.05 else x
    if kind in ("min_sp", "max_sp"):
        if variant and variant.startswith("unocc"):
            level = rng.uniform(24.0, 26.0) if kind == "min_sp" else rng.uniform(28.0, 30.0)
        else:
            level = rng.uniform(10.0, 15.0) if kind == "min_sp" else rng.uniform(16.0, 26.0)
        x = np.full(n, level + policy.sp_shift)
        if rng.random() < 0.2:
            x[rng.integers(0, n) :] += rng.choice([-1.0, 1.0])
        return np.round(x * 2) / 2
    raise SynthError("bad_mix", f"unknown archetype {kind!r}")


def generate_building(
    mix: Mapping[str, float] | None = None,
    n_points: int = 50,
    convention: NamingConvention | None = None,
    seed: int = 0,
    days: int = 28,
    building_id: str = "B1",
    sparse_fraction: float = 0.0,
    dropout: float = 0.02,
) -> Building:
    """Generate one labeled building.

    ``sparse_fraction`` of the points (rounded) are decoys sampled every 15
    minutes, which can never reach five samples in an hour.
    """
    if n_points < 1:
        raise SynthError("bad_size", "n_points must be >= 1")
    if days < 21:
        raise SynthError("bad_size", "days must be >= 21 so a three-week window exists")
    if not 0.0 <= sparse_fraction <= 1.0:
        raise SynthError("bad_mix", "sparse_fraction must be in [0, 1]")
    mix = dict(DEFAULT_MIX if mix is None else mix)
    convention = convention or CONVENTIONS[0]
    counts = allocate(mix, n_points)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    open_h, close_h = _schedule(rng)
    policy = _policy(rng)

    t_all = np.arange(START, START + days * DAY, STEP, dtype=np.int64)
    outdoor_all = _outdoor(t_all, rng, days)
    occ_all = _occupied(t_all, open_h, close_h)

    kinds = [k for k in sorted(counts) for _ in range(counts[k])]
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]
    n_decoys = int(round(sparse_fraction * n_points))
    decoy_idx = set(rng.choice(n_points, size=n_decoys, replace=False).tolist()) if n_decoys else set()
    n_equip = max(1, int(np.ceil(n_points / 8)))

    points, series, labels, arche, decoys, variants = [], {}, {}, {}, set(), {}
    used_names: set[str] = set()
    for i, kind in enumerate(kinds):
        pid = f"{building_id}-p{i:03d}"
        a = ARCHETYPES[kind]
        vr = None
        if a.variants:
            w = np.array([x.weight for x in a.variants])
            vr = a.variants[int(rng.choice(len(w), p=w / w.sum()))]
        tags = a.tags_for(vr)
        variant = vr.name if vr else None
        equip = int(rng.integers(1, n_equip + 1))
        room = int(rng.integers(100, 400))
        name = convention.name(building_id, equip, variant or kind, room)
        while name in used_names:
            equip += n_equip
            name = convention.name(building_id, equip, variant or kind, room)
        used_names.add(name)

        v = _signal(kind, variant, t_all, occ_all, outdoor_all, rng, policy)
        keep = rng.random(len(t_all)) >= dropout
        if i in decoy_idx:
            keep &= (t_all - START) % SPARSE_STEP == 0
            decoys.add(pid)
        points.append(PointRecord(pid, building_id, name, a.units or None, a.object_type))
        series[pid] = SeriesBundle(pid, t_all[keep], np.round(v[keep], 3))
        labels[pid] = tags
        arche[pid] = kind
        variants[pid] = variant
    return Building(building_id, points, series, labels, arche, decoys, variants)


def distinct_conventions(n: int, rng: np.random.Generator) -> list[NamingConvention]:
    """The three built-in conventions first, then random distinct ones."""
    out = list(CONVENTIONS[:n])
    seen = {c.key() for c in out}
    while len(out) < n:
        c = NamingConvention(
            ORDERS[int(rng.integers(len(ORDERS)))],
            int(rng.integers(len(ABBREVIATIONS))),
            DELIMITERS[int(rng.integers(len(DELIMITERS)))],
            int(rng.integers(len(EQUIP_STYLES))),
        )
        if c.key() not in seen:
            seen.add(c.key())
            out.append(c)
    return out


def generate_fleet(
    n_buildings: int = 3,
    mix: Mapping[str, float] | None = None,
    seed: int = 0,
    n_points: int = 50,
    days: int = 28,
    sparse_fraction: float = 0.0,
) -> list[Building]:
    """Buildings sharing archetype distributions but not naming conventions."""
    if n_buildings < 2:
        raise SynthError("bad_size", "a fleet needs at least two buildings")
    root = np.random.SeedSequence(seed)
    conv_rng = np.random.default_rng(root.spawn(1)[0])
    conventions = distinct_conventions(n_buildings, conv_rng)
    seeds = root.spawn(n_buildings + 1)[1:]
    out = []
    for b in range(n_buildings):
        bid = chr(ord("A") + b) if b < 26 else f"B{b:02d}"
        child_seed = int(seeds[b].generate_state(1)[0])
        out.append(
            generate_building(mix, n_points, conventions[b], child_seed, days, bid, sparse_fraction)
        )
    return out


def write_fleet(buildings, directory: str | Path) -> list[Path]:
    root = Path(directory)
    paths = []
    for b in buildings:
        p = root / b.building_id
        b.write(p)
        paths.append(p)
    return paths


def points_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", "building_id", "raw_name", "units", "object_type"])
    for p in points:
        w.writerow([p.point_id, p.building_id, p.raw_name, p.units or "", p.object_type or ""])
    return buf.getvalue()


def labels_csv(labels: Mapping[str, set]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", "tag"])
    for pid in sorted(labels):
        for tag in sorted(labels[pid]):
            w.writerow([pid, tag])
    return buf.getvalue()


def write_series_csv(series: Mapping[str, SeriesBundle], path: str | Path) -> None:
    frames = []
    for pid in sorted(series):
        b = series[pid]
        frames.append(pd.DataFrame({"point_id": pid, "t": b.times, "value": b.values}))
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["point_id", "t", "value"])
    # format each distinct instant once; points share the sampling grid
    codes, uniq = pd.factorize(df["t"].astype("int64"))
    text = pd.to_datetime(uniq, unit="s", utc=True).strftime("%Y-%m-%dT%H:%M:%SZ")
    stamps = np.asarray(text, dtype=object)[codes]
    out = pd.DataFrame({"point_id": df["point_id"], "timestamp": stamps, "value": df["value"].map(repr)})
    out.to_csv(path, index=False, lineterminator="\n")

"""Seeded synthetic pavement histories.

Every section carries three latent damage states (roughness, surface,
structural). Starting at zero in the construction year, each grows by a
section-specific yearly rate::

    D_g(t) = D_g(t-1) + rate_g        rate_g = damage_rate_g * r * j_g

with ``r ~ LogNormal(0, rate_sigma)`` shared by the section and
``j_g ~ LogNormal(0, group_rate_sigma)`` per group. In the treatment year the
state is knocked back by the work type's effectiveness ``e_g``::

    D_g(tau) <- (1 - e_g) * D_g(tau)

Indicators are fixed functions of the damage states:

* IRI (average) = new + slope * D_roughness, so a treatment maps it through
  :func:`reset_value`. Left/right IRI carry a per-section side bias; the
  recorded average is the mean of the noisy sides.
* Ride score = 5 * exp(-decay * (IRI - new)).
* Rut depths = new + slope * D_structural, with a side bias.
* Distress percentages and counts follow a normalized logistic ramp
  ``amplitude * ramp(D_group; onset, width)`` that is 0 for a new pavement.
* Raveling / flushing levels = clip(1 + floor((D_surface + eps) / step), 1, 4)
  with eps redrawn each year.
* Distress score = 100 - sum(weight * distress), condition score =
  distress score * min(1, ride / reference) ** 0.5.

Gaussian measurement noise is added to the continuous indicators, then values
are rounded and clamped to their published ranges. All constants live in
``synthetic_default.json``.
"""

from dataclasses import dataclass
from importlib import resources
import copy
import json

import numpy as np

from ..tensor import make_rng
from .schema import (
    FIRST_YEAR,
    INDICATORS,
    N_INDICATORS,
    N_WORK_TYPES,
    TARGET_YEAR,
    YEARS,
    DO_NOTHING,
    SectionHistory,
    indicator,
)

GROUPS = ("roughness", "surface", "structural")


def default_config():
    text = resources.files(__package__).joinpath("synthetic_default.json").read_text()
    return json.loads(text)


def load_config(path=None, overrides=None):
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            _merge(cfg, json.load(fh))
    if overrides:
        _merge(cfg, overrides)
    return cfg


def _merge(base, extra):
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)


def reset_value(before, new_value, effectiveness):
    """Indicator value right after a treatment that removes ``effectiveness`` of the damage."""
    return before - effectiveness * (before - new_value)


def ramp(damage, onset, width):
    """Logistic growth curve rescaled so ramp(0) = 0 and ramp(inf) = 1."""
    base = 1.0 / (1.0 + np.exp(onset / width))
    s = 1.0 / (1.0 + np.exp(-(np.asarray(damage) - onset) / width))
    return (s - base) / (1.0 - base)


@dataclass
class SyntheticData:
    """Generated sections plus the latent quantities behind them."""

    sections: list
    construction_year: np.ndarray
    work_row: np.ndarray
    treatment_year: np.ndarray  # -1 for "Do Nothing"
    rates: np.ndarray  # (n, 3) yearly damage rates per group
    damage: np.ndarray  # (n, years, 3)
    clean: dict  # indicator name -> (n, years) noise-free values
    config: dict


def _effectiveness(cfg):
    eff = np.zeros((N_WORK_TYPES + 1, len(GROUPS)))
    for row, groups in cfg["effectiveness"].items():
        eff[int(row)] = [groups[g] for g in GROUPS]
    return eff


def simulate(n_sections, rng=0, config=None):
    """Draw ``n_sections`` histories; returns :class:`SyntheticData`."""
    if n_sections < 1:
        raise ValueError(f"need at least one section, got {n_sections}")
    cfg = default_config() if config is None else config
    rng = make_rng(rng)
    n = int(n_sections)
    years = np.array(YEARS)

    c_lo, c_hi = cfg["construction_year_range"]
    built = rng.integers(c_lo, c_hi + 1, size=n)
    weights = np.asarray(cfg["work_type_weights"], dtype=np.float64)
    work = rng.choice(N_WORK_TYPES, size=n, p=weights / weights.sum()) + 1
    t_lo, t_hi = cfg["treatment_year_range"]
    earliest = np.maximum(built + cfg["min_age_at_treatment"], t_lo)
    u = rng.random(n)
    tau = earliest + np.floor(u * (t_hi - earliest + 1)).astype(np.int64)
    tau = np.where(work == DO_NOTHING, -1, tau)

    r = rng.lognormal(0.0, cfg["rate_sigma"], size=n)
    jitter = rng.lognormal(0.0, cfg["group_rate_sigma"], size=(n, len(GROUPS)))
    base = np.array([cfg["damage_rate"][g] for g in GROUPS])
    rates = base * r[:, None] * jitter

    eff = _effectiveness(cfg)[work]
    damage = np.zeros((n, len(years), len(GROUPS)))
    d = np.zeros((n, len(GROUPS)))
    for year in range(int(built.min()), TARGET_YEAR + 1):
        active = year > built
        d[active] += rates[active]
        treated = tau == year
        d[treated] *= 1.0 - eff[treated]
        if year >= FIRST_YEAR:
            damage[:, year - FIRST_YEAR] = d
    rough, surf, struct = damage[..., 0], damage[..., 1], damage[..., 2]
    group = {"roughness": rough, "surface": surf, "structural": struct}

    shape = rough.shape
    clean = {}
    noisy = {}

    iri = cfg["iri"]
    iri_clean = iri["new"] + iri["slope"] * rough
    bias = rng.normal(0.0, iri["side_bias_sd"], size=n)[:, None]
    clean["TX_IRI_LEFT_SCORE"] = iri_clean * (1.0 + bias)
    clean["TX_IRI_RIGHT_SCORE"] = iri_clean * (1.0 - bias)
    clean["TX_IRI_AVERAGE_SCORE"] = iri_clean
    noisy["TX_IRI_LEFT_SCORE"] = clean["TX_IRI_LEFT_SCORE"] + rng.normal(0.0, iri["noise_sd"], shape)
    noisy["TX_IRI_RIGHT_SCORE"] = clean["TX_IRI_RIGHT_SCORE"] + rng.normal(0.0, iri["noise_sd"], shape)
    noisy["TX_IRI_AVERAGE_SCORE"] = 0.5 * (noisy["TX_IRI_LEFT_SCORE"] + noisy["TX_IRI_RIGHT_SCORE"])

    ride = cfg["ride"]
    clean["TX_RIDE_SCORE"] = np.clip(5.0 * np.exp(-ride["decay"] * (iri_clean - iri["new"])), 0.1, 5.0)
    noisy["TX_RIDE_SCORE"] = clean["TX_RIDE_SCORE"] + rng.normal(0.0, ride["noise_sd"], shape)

    rut = cfg["rut_depth"]
    depth = rut["new"] + rut["slope"] * struct
    bias = rng.normal(0.0, rut["side_bias_sd"], size=n)[:, None]
    clean["TX_ACP_RUT_LFT_WP_DPTH_MEAS"] = depth * (1.0 + bias)
    clean["TX_ACP_RUT_RIT_WP_DPTH_MEAS"] = depth * (1.0 - bias)
    clean["TX_ACP_RUT_AVG_WP_DEPTH_MEAS"] = depth
    noisy["TX_ACP_RUT_LFT_WP_DPTH_MEAS"] = clean["TX_ACP_RUT_LFT_WP_DPTH_MEAS"] + rng.normal(0.0, rut["noise_sd"], shape)
    noisy["TX_ACP_RUT_RIT_WP_DPTH_MEAS"] = clean["TX_ACP_RUT_RIT_WP_DPTH_MEAS"] + rng.normal(0.0, rut["noise_sd"], shape)
    noisy["TX_ACP_RUT_AVG_WP_DEPTH_MEAS"] = 0.5 * (noisy["TX_ACP_RUT_LFT_WP_DPTH_MEAS"]
                                                   + noisy["TX_ACP_RUT_RIT_WP_DPTH_MEAS"])

    for name, k in cfg["ramps"].items():
        clean[name] = k["amplitude"] * ramp(group[k["group"]], k["onset"], k["width"])
        noisy[name] = clean[name] + rng.normal(0.0, k["noise_sd"], shape)

    for name, k in cfg["levels"].items():
        eps = rng.normal(0.0, k["noise_sd"], shape)
        clean[name] = np.clip(1.0 + np.floor(surf / k["step"]), 1.0, 4.0)
        noisy[name] = np.clip(1.0 + np.floor((surf + eps) / k["step"]), 1.0, 4.0)

    distress = 100.0 - sum(w * clean[name] for name, w in cfg["distress_weights"].items())
    clean["TX_DISTRESS_SCORE"] = np.clip(distress, 1.0, 100.0)
    ride_factor = np.minimum(1.0, clean["TX_RIDE_SCORE"] / cfg["condition_ride_reference"]) ** 0.5
    clean["TX_CONDITION_SCORE"] = np.clip(clean["TX_DISTRESS_SCORE"] * ride_factor, 1.0, 100.0)
    for name in ("TX_DISTRESS_SCORE", "TX_CONDITION_SCORE"):
        noisy[name] = clean[name] + rng.normal(0.0, cfg["score_noise_sd"], shape)

    values = np.empty((n, len(years), N_INDICATORS))
    for j, ind in enumerate(INDICATORS):
        decimals = ride["decimals"] if ind.name == "TX_RIDE_SCORE" else cfg["decimals"]
        v = np.round(noisy[ind.name], 0 if ind.discrete else decimals)
        lo, hi = ind.bounds
        values[..., j] = np.clip(v, lo, hi) + 0.0  # + 0.0 turns -0.0 into 0.0

    last_year = np.where(work == DO_NOTHING, built, tau)
    sections = [
        SectionHistory(f"S{i:06d}", values[i], int(work[i]), int(last_year[i]))
        for i in range(n)
    ]
    return SyntheticData(sections, built, work, tau, rates, damage, clean, cfg)


def generate_synthetic(n_sections, rng=0, config=None):
    """``n_sections`` complete, range-valid :class:`SectionHistory` records."""
    return simulate(n_sections, rng, config).sections


def with_constant_target(sections, name, level, jitter=0.0, rng=0):
    """Copy ``sections`` with the 2018 value of ``name`` pinned near ``level``.

    Used to reproduce targets that barely vary across sections.
    """
    ind = indicator(name)
    j = ind.index - 1
    rng = make_rng(rng)
    lo, hi = ind.bounds
    out = []
    for s in sections:
        values = s.values.copy()
        values[-1, j] = np.clip(level + jitter * rng.standard_normal(), lo, hi)
        out.append(SectionHistory(s.section_id, values, s.last_work, s.last_work_year))
    return out

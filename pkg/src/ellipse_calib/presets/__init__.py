"""Named parameter sets from the published measurement tables."""

from __future__ import annotations

import math
from functools import lru_cache
from importlib import resources

import yaml

from ..errors import DomainError
from ..fading import FadingParams, FresnelConfig, NoiseKind, NoiseModel


@lru_cache(maxsize=None)
def tables() -> dict:
    text = resources.files(__package__).joinpath("tables.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _lookup(section: str, name: str):
    try:
        return tables()[section][name]
    except KeyError:
        known = ", ".join(sorted(tables()[section]))
        raise DomainError(f"unknown {section} preset {name!r} (known: {known})") from None


def fading_preset(name: str) -> FadingParams:
    """Table entries are magnitudes; the stored ``phi`` is negated (attenuation)."""
    row = _lookup("fading", name)
    return FadingParams(-row["phi_magnitude_db"], row["kappa_m"], row["user_type"])


def noise_preset(name: str, kind: NoiseKind | str = NoiseKind.LOCATION_DEPENDENT) -> NoiseModel:
    row = _lookup("noise", name)
    if NoiseKind(kind) is NoiseKind.UNIFORM:
        return NoiseModel.uniform(row["sigma_bar_db"])
    return NoiseModel.location_dependent(row["sigma1_db"], row["sigma2_db"], row["xi_th_m"])


def wavelength_preset(name: str) -> float:
    return float(_lookup("wavelength_m", name))


def fresnel_preset(name: str, zone_number: int = 3) -> FresnelConfig:
    return FresnelConfig(wavelength_preset(name), zone_number)


def eta_preset(name: str, circumference: float) -> float:
    """Dimensionless concentration for an ellipse of the given circumference."""
    var = float(_lookup("eta_variance_m2", name))
    return (circumference / (2.0 * math.pi)) ** 2 / var

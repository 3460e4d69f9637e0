"""Scenario files: YAML documents with line-precise schema errors.

Layout (lengths in metres, delays in nanoseconds, powers in dB)::

    seed: 7
    wavelength_m: 0.0577          # or a preset name, e.g. setup2
    nodes:
      tx: [0.0, 0.0]
      rx: [31.37, 0.0]
    surfaces:
      - [[1.0, 13.0], [9.0, 8.0]]
    mpcs:
      - {tx: tx, rx: rx, delay_ns: 129.0}      # or path_length_m: 38.673
    trajectory:
      speed_mps: 1.0
      update_time_s: 0.01
      waypoints: [[3.0, 7.2], [20.0, 7.2]]
    fading: {preset: setup2_filter}            # or {phi_db: -2.5, kappa_m: 0.015}
    noise: {preset: setup2}                    # or explicit sigmas, see below
    filter: {dx_m: 0.05, eta: setupII, gate_m: auto}

Links are the distinct ``(tx, rx)`` pairs of the ``mpcs`` list, numbered in
order of first appearance; MPCs are numbered per link in file order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import DomainError, SchemaError
from .fading import FadingParams, FresnelConfig, NoiseKind, NoiseModel, fresnel_threshold
from .geometry import Mpc, NetworkLink, Surface
from .inference import DEFAULT_WAVELENGTH
from .presets import fading_preset, tables, wavelength_preset
from .scenario import Scenario, Trajectory


class _Map(dict):
    line: int = 0
    key_lines: dict


class _Seq(list):
    line: int = 0
    item_lines: list


def _build(loader: yaml.SafeLoader, node: yaml.Node):
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = _Map()
        out.line, out.key_lines = line, {}
        for k_node, v_node in node.value:
            key = loader.construct_object(k_node)
            out[key] = _build(loader, v_node)
            out.key_lines[key] = v_node.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        out = _Seq(_build(loader, v) for v in node.value)
        out.line = line
        out.item_lines = [v.start_mark.line + 1 for v in node.value]
        return out
    return loader.construct_object(node)


def load_yaml(text: str, path: str = "<string>"):
    """Parse ``text`` into dicts and lists that remember their source lines."""
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            raise SchemaError("empty document", path, 1)
        return _build(loader, node)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise SchemaError(f"invalid YAML: {exc.problem}", path, mark.line + 1 if mark else 0) from None
    finally:
        loader.dispose()


class _Reader:
    """Typed access to a parsed document, raising :class:`SchemaError` with line numbers."""

    def __init__(self, path: str):
        self.path = path

    def fail(self, msg: str, line: int) -> SchemaError:
        return SchemaError(msg, self.path, line)

    def section(self, parent: _Map, key: str, required: bool = True):
        if key not in parent:
            if required:
                raise self.fail(f"missing section '{key}'", parent.line)
            return None
        return parent[key]

    def mapping(self, parent: _Map, key: str, required: bool = True) -> _Map | None:
        v = self.section(parent, key, required)
        if v is not None and not isinstance(v, _Map):
            raise self.fail(f"'{key}' must be a mapping", parent.key_lines[key])
        return v

    def number(self, parent: _Map, key: str, default: Any = ..., positive: bool = False) -> float:
        if key not in parent:
            if default is ...:
                raise self.fail(f"missing key '{key}'", parent.line)
            return default
        v = parent[key]
        line = parent.key_lines[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise self.fail(f"'{key}' must be a finite number, got {v!r}", line)
        if positive and not v > 0:
            raise self.fail(f"'{key}' must be positive", line)
        return float(v)

    def point(self, v, line: int, what: str) -> tuple[float, float]:
        if not (isinstance(v, list) and len(v) == 2
                and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                        and math.isfinite(c) for c in v)):
            raise self.fail(f"{what} must be a pair of finite numbers [x, y]", line)
        return float(v[0]), float(v[1])


def _wavelength(r: _Reader, doc: _Map) -> float:
    if "wavelength_m" not in doc:
        return DEFAULT_WAVELENGTH
    v = doc["wavelength_m"]
    if isinstance(v, str):
        try:
            return wavelength_preset(v)
        except DomainError as exc:
            raise r.fail(str(exc), doc.key_lines["wavelength_m"]) from None
    return r.number(doc, "wavelength_m", positive=True)


def _fading(r: _Reader, doc: _Map) -> FadingParams:
    sec = r.mapping(doc, "fading")
    try:
        if "preset" in sec:
            return fading_preset(str(sec["preset"]))
        return FadingParams(r.number(sec, "phi_db"), r.number(sec, "kappa_m", positive=True),
                            sec.get("user_type", "custom"))
    except (DomainError, ValueError) as exc:
        raise r.fail(f"fading: {exc}", sec.line) from None


@dataclass(frozen=True)
class NoiseSpec:
    """Every noise parameter the file supplies; models are built on demand."""

    default_kind: NoiseKind
    sigma_bar: float | None
    sigma1: float | None
    sigma2: float | None
    xi_th: float | None
    line: int
    path: str

    def model(self, kind: NoiseKind | str | None = None) -> NoiseModel:
        kind = self.default_kind if kind is None else NoiseKind(kind)
        try:
            if kind is NoiseKind.UNIFORM:
                if self.sigma_bar is None:
                    raise DomainError("uniform noise needs sigma_bar_db")
                return NoiseModel.uniform(self.sigma_bar)
            return NoiseModel.location_dependent(self.sigma1, self.sigma2, self.xi_th)
        except DomainError as exc:
            raise SchemaError(f"noise: {exc}", self.path, self.line) from None


def _noise(r: _Reader, doc: _Map, wavelength: float) -> NoiseSpec:
    sec = r.mapping(doc, "noise")
    vals = dict(sigma_bar=None, sigma1=None, sigma2=None, xi_th=None)
    if "preset" in sec:
        name = str(sec["preset"])
        row = tables()["noise"].get(name)
        if row is None:
            raise r.fail(f"unknown noise preset {name!r}", sec.key_lines["preset"])
        vals.update(sigma_bar=row["sigma_bar_db"], sigma1=row["sigma1_db"],
                    sigma2=row["sigma2_db"], xi_th=row["xi_th_m"])
    for key, field in (("sigma_bar_db", "sigma_bar"), ("sigma1_db", "sigma1"),
                       ("sigma2_db", "sigma2"), ("xi_th_m", "xi_th")):
        if key in sec:
            vals[field] = r.number(sec, key, positive=True)
    if vals["xi_th"] is None:
        zone = int(r.number(sec, "fresnel_zone", 3, positive=True))
        vals["xi_th"] = fresnel_threshold(FresnelConfig(wavelength, zone))
    kind = sec.get("kind", "location_dependent")
    kind = {"split": "location_dependent"}.get(kind, kind)
    try:
        kind = NoiseKind(kind)
    except ValueError:
        raise r.fail(f"noise kind must be uniform or split, got {kind!r}",
                     sec.key_lines.get("kind", sec.line)) from None
    spec = NoiseSpec(kind, line=sec.line, path=r.path, **vals)
    spec.model()  # validate the default kind eagerly
    return spec


def _trajectory(r: _Reader, doc: _Map) -> Trajectory:
    sec = r.mapping(doc, "trajectory")
    wps = r.section(sec, "waypoints")
    if not isinstance(wps, _Seq) or len(wps) < 2:
        raise r.fail("trajectory needs a list of at least two waypoints", sec.key_lines["waypoints"])
    pts = [r.point(p, ln, "waypoint") for p, ln in zip(wps, wps.item_lines)]
    try:
        return Trajectory(tuple(pts), r.number(sec, "speed_mps", positive=True),
                          r.number(sec, "update_time_s", positive=True))
    except DomainError as exc:
        raise r.fail(f"trajectory: {exc}", sec.line) from None


@dataclass(frozen=True)
class FilterDefaults:
    dx: float = 0.05
    eta: str | float = "setupII"
    gate: str | float = "auto"


def _filter(r: _Reader, doc: _Map) -> FilterDefaults:
    sec = r.mapping(doc, "filter", required=False)
    if sec is None:
        return FilterDefaults()
    out = FilterDefaults(dx=r.number(sec, "dx_m", 0.05, positive=True))
    for key, attr in (("eta", "eta"), ("gate_m", "gate")):
        if key in sec:
            v = sec[key]
            if not isinstance(v, str):
                v = r.number(sec, key)
                if v < 0:
                    raise r.fail(f"'{key}' must be non-negative", sec.key_lines[key])
            out = FilterDefaults(**{**out.__dict__, attr: v})
    return out


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    noise: NoiseSpec
    filter: FilterDefaults
    node_names: tuple[tuple[str, str], ...]   # (tx, rx) names per link


def parse_scenario(text: str, path: str = "<string>") -> ScenarioFile:
    doc = load_yaml(text, path)
    r = _Reader(path)
    if not isinstance(doc, _Map):
        raise r.fail("scenario must be a mapping", 1)

    nodes_sec = r.mapping(doc, "nodes")
    nodes = {str(k): r.point(v, nodes_sec.key_lines[k], f"node '{k}'") for k, v in nodes_sec.items()}

    surfaces = []
    surf_sec = r.section(doc, "surfaces", required=False) or _Seq()
    if not isinstance(surf_sec, _Seq):
        raise r.fail("'surfaces' must be a list", doc.key_lines["surfaces"])
    for item, line in zip(surf_sec, surf_sec.item_lines):
        if not (isinstance(item, list) and len(item) == 2):
            raise r.fail("surface must be [[x0, y0], [x1, y1]]", line)
        try:
            surfaces.append(Surface(r.point(item[0], line, "surface end"),
                                    r.point(item[1], line, "surface end")))
        except DomainError as exc:
            raise r.fail(f"surface: {exc}", line) from None

    mpc_sec = r.section(doc, "mpcs")
    if not isinstance(mpc_sec, _Seq) or not mpc_sec:
        raise r.fail("'mpcs' must be a non-empty list", doc.key_lines["mpcs"])
    pairs: list[tuple[str, str]] = []
    groups: list[list[Mpc]] = []
    for item, line in zip(mpc_sec, mpc_sec.item_lines):
        if not isinstance(item, _Map):
            raise r.fail("MPC entry must be a mapping", line)
        names = []
        for role in ("tx", "rx"):
            name = str(r.section(item, role))
            if name not in nodes:
                raise r.fail(f"unknown node '{name}'", item.key_lines[role])
            names.append(name)
        if ("delay_ns" in item) == ("path_length_m" in item):
            raise r.fail("give exactly one of delay_ns and path_length_m", line)
        if "delay_ns" in item:
            mpc = Mpc.from_delay(r.number(item, "delay_ns", positive=True) * 1e-9)
        else:
            mpc = Mpc(r.number(item, "path_length_m", positive=True))
        key = (names[0], names[1])
        if key not in pairs:
            pairs.append(key)
            groups.append([])
        groups[pairs.index(key)].append(mpc)

    try:
        links = tuple(NetworkLink(nodes[t], nodes[x]) for t, x in pairs)
    except DomainError as exc:
        raise r.fail(f"link: {exc}", mpc_sec.line) from None
    for link, group, key in zip(links, groups, pairs):
        for mpc in group:
            if not mpc.path_length > link.los_distance:
                raise r.fail(f"MPC path {mpc.path_length:.6g} m on link {key[0]}-{key[1]} does not "
                             f"exceed the LoS distance {link.los_distance:.6g} m", mpc_sec.line)

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise r.fail("'seed' must be a non-negative integer", doc.key_lines.get("seed", doc.line))
    wavelength = _wavelength(r, doc)
    noise = _noise(r, doc, wavelength)
    direct = doc.get("direct_scatter", False)
    if not isinstance(direct, bool):
        raise r.fail("'direct_scatter' must be true or false", doc.key_lines["direct_scatter"])
    sc = Scenario(links, tuple(surfaces), tuple(tuple(g) for g in groups), _trajectory(r, doc),
                  _fading(r, doc), noise.model(), seed, wavelength, direct)
    return ScenarioFile(sc, noise, _filter(r, doc), tuple(pairs))


def load_scenario(path: str | Path) -> ScenarioFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read scenario: {exc.strerror}", str(p), 0) from None
    return parse_scenario(text, str(p))


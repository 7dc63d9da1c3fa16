"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Unknown sections or keys are rejected so that typos do not silently fall
back to defaults.  ``dump_config(parse_config(text))`` is a normal form:
applying it twice gives the same text.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .coefficients import (ConfigurationError, PiecewiseModulation, default_air_constants, make_channel_data,
                           make_law)
from .fixed_point import Numerics, Setup, relation_r
from .mesh import build_rectangle_channel, load_mesh
from .momentum import dual_exponent

LAW_SECTIONS = {
    "viscosity": "mu",
    "bulk": "lam",
    "friction": "gamma",
    "conductivity": "k",
    "heat_wall": "h_wall",
    "heat_outlet": "h_out",
}
ROLES = {"mu": "mu", "lam": "lambda", "gamma": "gamma", "k": "k", "h_wall": "h_wall", "h_out": "h_out"}

AIR = default_air_constants()

DEFAULTS = {
    "geometry": {"kind": "channel", "length": "1.0", "height": "0.25", "nx": "32", "ny": "8", "mesh": ""},
    "viscosity": {"kind": "affine", "value": "1e5", "slope": "100", "theta_ref": "300", "lower": "5e4",
                  "upper": "2e5", "breaks": "", "factors": ""},
    "bulk": {"kind": "affine", "value": "-1e4", "slope": "-10", "theta_ref": "300", "lower": "-2e4",
             "upper": "-5e3", "breaks": "", "factors": ""},
    "friction": {"kind": "constant", "value": "1e5", "lower": "5e4", "upper": "2e5"},
    "conductivity": {"kind": "power", "value": "50", "exponent": "0.8", "theta_ref": "300", "lower": "25",
                     "upper": "100"},
    "heat_wall": {"kind": "constant", "value": "100", "lower": "50", "upper": "200"},
    "heat_outlet": {"kind": "constant", "value": "10", "lower": "0", "upper": "20"},
    "boundary": {"inlet_profile": "parabolic", "inlet_velocity": "1.0", "outlet_profile": "uniform",
                 "outlet_velocity": "balanced", "rho_inf": repr(AIR["rho0"]), "theta_in": "300",
                 "theta_w": "350", "theta_out": "300", "lifting": "harmonic", "rho0": repr(AIR["rho0"]),
                 "R_specific": repr(AIR["R_specific"]), "c_v": repr(AIR["c_v"])},
    "numerics": {"q": "3", "r": "10", "p": "", "M": repr(10 * AIR["rho0"]), "M_list": "", "alpha": "0.5",
                 "tol": "1e-8", "max_iter": "100", "solver": "direct", "scheme": "centered", "eps_stag": "",
                 "eps_align": "1e-8", "strict": "false"},
    "output": {"directory": "nsf-out", "fields": "fields.vtk", "report": "report.csv", "verbosity": "info"},
}
LAW_KEYS = {"kind", "value", "slope", "theta_ref", "exponent", "lower", "upper", "breaks", "factors"}


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def number(self, section: str, key: str) -> float:
        try:
            return float(self.get(section, key))
        except ValueError:
            raise ConfigurationError(f"[{section}] {key} must be a number, got {self.get(section, key)!r}") from None

    # exponents -------------------------------------------------------
    def exponents(self) -> tuple:
        q = self.number("numerics", "q")
        r = self.number("numerics", "r")
        if not q > 2:
            raise ConfigurationError("[numerics] q must exceed 2")
        p_text = self.get("numerics", "p")
        if p_text:
            p = float(p_text)
            if abs(1 / p - (0.5 - 1 / q)) > 1e-12:
                raise ConfigurationError(f"[numerics] p = {p} violates 1/p = 1/2 - 1/q for q = {q}")
            if not p > 4 or abs(r - relation_r(p)) > 1e-12 * r:
                raise ConfigurationError(f"[numerics] r = {r} violates r = 2p/(p-4) for p = {p}")
        else:
            p = dual_exponent(q)
        return q, r, p

    def M_list(self) -> list:
        text = self.get("numerics", "M_list")
        rho0 = self.number("boundary", "rho0")
        return list(_floats(text)) if text else [2 * rho0, 10 * rho0, 100 * rho0]

    def numerics(self, M: float | None = None) -> Numerics:
        q, r, _ = self.exponents()
        eps = self.get("numerics", "eps_stag")
        solver = self.get("numerics", "solver")
        if solver not in ("direct", "cg", "bicgstab"):
            raise ConfigurationError(f"[numerics] unknown solver {solver!r}")
        scheme = self.get("numerics", "scheme")
        if scheme not in ("centered", "upwind"):
            raise ConfigurationError(f"[numerics] unknown scheme {scheme!r}")
        try:
            return Numerics(q=q, r=r, M=self.number("numerics", "M") if M is None else M,
                            alpha=self.number("numerics", "alpha"), tol=self.number("numerics", "tol"),
                            max_iter=int(self.number("numerics", "max_iter")), solver=solver, scheme=scheme,
                            eps_stag=float(eps) if eps else None, eps_align=self.number("numerics", "eps_align"))
        except ValueError as exc:
            raise ConfigurationError(f"[numerics] {exc}") from None

    def law(self, section: str):
        sec = self.sections[section]
        params = {k: float(sec[k]) for k in ("value", "slope", "theta_ref", "exponent") if sec.get(k)}
        modulation = None
        if sec.get("factors"):
            modulation = PiecewiseModulation(_floats(sec.get("breaks", "")), _floats(sec["factors"]))
        strict = self.get("numerics", "strict").lower() in ("1", "true", "yes", "on")
        return make_law(sec["kind"], params, (float(sec["lower"]), float(sec["upper"])), modulation,
                        role=ROLES[LAW_SECTIONS[section]], strict=strict)

    def mesh(self):
        geo = self.sections["geometry"]
        if geo["mesh"]:
            path = Path(geo["mesh"])
            path = path if path.is_absolute() else self.base_dir / path
            with open(path) as fh:
                return load_mesh(fh)
        if geo["kind"] != "channel":
            raise ConfigurationError(f"[geometry] unknown kind {geo['kind']!r}")
        try:
            return build_rectangle_channel(float(geo["length"]), float(geo["height"]), int(geo["nx"]),
                                           int(geo["ny"]))
        except ValueError as exc:
            raise ConfigurationError(f"[geometry] {exc}") from None

    def setup(self, M: float | None = None, mesh=None) -> Setup:
        numerics = self.numerics(M)
        mesh = mesh if mesh is not None else self.mesh()
        b = self.sections["boundary"]
        out_v = None if b["outlet_velocity"] == "balanced" else float(b["outlet_velocity"])
        data = make_channel_data(
            mesh, b["inlet_profile"], float(b["inlet_velocity"]), b["outlet_profile"], out_v,
            rho_inf=float(b["rho_inf"]), theta_in=float(b["theta_in"]), theta_w=float(b["theta_w"]),
            theta_out=float(b["theta_out"]), lifting=b["lifting"], rho0=float(b["rho0"]),
            R_specific=float(b["R_specific"]), c_v=float(b["c_v"]), M=numerics.M)
        laws = {LAW_SECTIONS[s]: self.law(s) for s in LAW_SECTIONS}
        return Setup(mesh, data, numerics=numerics, **laws)

    def output_path(self, key: str) -> Path:
        directory = Path(self.get("output", "directory"))
        directory = directory if directory.is_absolute() else self.base_dir / directory
        return directory / self.get("output", key)


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from None
    sections = {name: dict(values) for name, values in DEFAULTS.items()}
    for name in parser.sections():
        if name not in DEFAULTS:
            raise ConfigurationError(f"unknown section [{name}]")
        allowed = LAW_KEYS if name in LAW_SECTIONS else set(DEFAULTS[name])
        for key, value in parser.items(name):
            if key not in allowed:
                raise ConfigurationError(f"unknown key {key!r} in [{name}]")
            sections[name][key] = value.strip()
    cfg = RunConfig(sections, base_dir or Path.cwd())
    cfg.exponents()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text, path.parent)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in DEFAULTS:
        lines.append(f"[{name}]")
        for key in sorted(cfg.sections[name]):
            lines.append(f"{key} = {cfg.sections[name][key]}")
        lines.append("")
    return "\n".join(lines)

"""Run configuration: a validated INI document with explicit units in keys.

Every physical quantity carries its unit as a key suffix (``_mhz``, ``_mt``,
``_deg``, ``_ghz``, ``_k``, ``_nm``, ``_ps``, ``_invcm``); dimensionless
numbers carry none.  Multi-valued keys hold space-separated numbers.  The
parser validates the whole document and reports every violation at once,
and the canonical emitter is idempotent: parsing what it writes yields the
same configuration.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from . import kinetics as kin
from . import polarization as pol
from . import spectra as sp
from . import spincore

SCHEMA_VERSION = 1
MODELS = ("quartet-dimer", "triplet", "cw-doublet")
SCHEME_KINDS = ("powder", "parallel", "perpendicular", "single")


class ConfigError(ValueError):
    """Invalid configuration; carries the full list of violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


@dataclass(frozen=True)
class Key:
    """Schema entry for one config key."""

    name: str
    kind: str  # float | int | bool | str | floats | tokens
    required: bool = False
    count: int | None = None          # exact element count for "floats"
    choices: tuple[str, ...] | None = None
    positive: bool = False
    message: str = ""                 # overrides the default complaint


def _keys(*entries: Key) -> dict[str, Key]:
    return {k.name: k for k in entries}


_META = _keys(
    Key("schema_version", "int", required=True),
    Key("model", "str", required=True, choices=MODELS),
)

_SYSTEM = {
    "quartet-dimer": _keys(
        Key("exchange_invcm", "float", required=True),
        Key("dipolar_mhz", "float", required=True),
        Key("zfs_d_mhz", "float", required=True),
        Key("zfs_e_mhz", "float", required=True),
        Key("g_fp", "float", required=True, positive=True),
        Key("g_vo", "floats", required=True, count=3),
        Key("a_vo_mhz", "floats", required=True, count=3),
        Key("alpha_deg", "float", required=True),
        Key("beta_deg", "float", required=True),
        Key("quartet_x_axis", "floats", count=3),
    ),
    "triplet": _keys(
        Key("g", "float", required=True, positive=True),
        Key("zfs_d_mhz", "float", required=True),
        Key("zfs_e_mhz", "float", required=True),
    ),
    "cw-doublet": _keys(
        Key("g", "floats", required=True, count=3),
        Key("a_mhz", "floats", required=True, count=3),
    ),
}

_POLARIZATION = {
    "quartet-dimer": _keys(
        Key("kind", "str", choices=("photo", "thermal")),
        Key("a", "floats", count=3),
        Key("r", "floats", count=3),
        Key("rho_n", "floats", count=8),
        Key("doublet_populations", "floats", count=2),
        Key("temperature_k", "float", positive=True),
    ),
    "triplet": _keys(
        Key("populations", "floats", required=True, count=3),
    ),
    "cw-doublet": _keys(
        Key("temperature_k", "float", positive=True),
    ),
}

_SWEEP = _keys(
    Key("mw_frequency_ghz", "float", required=True, positive=True),
    Key("field_start_mt", "float", required=True),
    Key("field_stop_mt", "float", required=True),
    Key("n_points", "int"),
    Key("lineshape", "str", choices=sp.LINESHAPES),
    Key("linewidth_mt", "float", positive=True, message="linewidth must be > 0"),
    Key("search_points", "int"),
    Key("slope_floor_ghz_per_mt", "float", positive=True),
    Key("pad_linewidths", "float"),
)

_SCHEME = _keys(
    Key("kind", "str", required=True, choices=SCHEME_KINDS),
    Key("grid_size", "int"),
    Key("sigma_deg", "float"),
    Key("n_samples", "int"),
    Key("tilt_nodes", "int"),
    Key("transverse_nodes", "int"),
    Key("theta_deg", "float"),
    Key("phi_deg", "float"),
)

_FIT = _keys(
    Key("free", "tokens", required=True, choices=tuple(sorted(("a1", "a2", "a3", "r1", "r2", "r3", "rho_n")))),
    Key("schemes", "tokens", choices=SCHEME_KINDS),
    Key("weights", "floats"),
    Key("n_starts", "int"),
    Key("max_iterations", "int"),
    Key("tolerance", "float", positive=True),
    Key("seed", "int"),
    Key("start_spread", "float", positive=True),
    Key("bound_lo", "float"),
    Key("bound_hi", "float"),
)

_KINETICS = _keys(
    Key("lifetimes_ps", "floats", required=True),
    Key("irf_fwhm_ps", "float"),
    Key("t0_ps", "float"),
    Key("fit_t0", "bool"),
    Key("fit_irf", "bool"),
    Key("n_starts", "int"),
    Key("max_iterations", "int"),
    Key("tolerance", "float", positive=True),
    Key("seed", "int"),
    Key("log10_spread", "float", positive=True),
)

_OUTPUT = _keys(
    Key("directory", "str"),
    Key("prefix", "str"),
    Key("plot_script", "bool"),
)

# Section order is also the canonical emission order.
_SECTIONS = ("meta", "system", "polarization", "sweep", "scheme", "fit", "kinetics", "output")

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _schema_for(model: str, section: str) -> dict[str, Key] | None:
    if section == "meta":
        return _META
    if section == "system":
        return _SYSTEM.get(model)
    if section == "polarization":
        return _POLARIZATION.get(model)
    return {
        "sweep": _SWEEP,
        "scheme": _SCHEME,
        "fit": _FIT,
        "kinetics": _KINETICS,
        "output": _OUTPUT,
    }.get(section)


def _parse_value(section: str, key: Key, raw: str, errors: list[str]):
    where = f"[{section}] {key.name}"

    def complain(default: str):
        errors.append(f"{where}: {key.message or default}")

    if key.kind == "str":
        value = raw.strip()
        if key.choices and value not in key.choices:
            complain(f"must be one of {', '.join(key.choices)}; got {value!r}")
            return None
        return value
    if key.kind == "bool":
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            complain(f"must be a boolean (true/false); got {raw!r}")
            return None
        return _BOOL_WORDS[word]
    if key.kind == "int":
        try:
            value = int(raw.strip())
        except ValueError:
            complain(f"must be an integer; got {raw!r}")
            return None
        if key.positive and value <= 0:
            complain("must be > 0")
            return None
        return value
    if key.kind == "float":
        try:
            value = float(raw.strip())
        except ValueError:
            complain(f"must be a number; got {raw!r}")
            return None
        if not math.isfinite(value):
            complain("must be finite")
            return None
        if key.positive and value <= 0:
            complain(key.message or "must be > 0")
            return None
        return value
    if key.kind == "floats":
        parts = raw.split()
        try:
            values = tuple(float(p) for p in parts)
        except ValueError:
            complain(f"must be space-separated numbers; got {raw!r}")
            return None
        if key.count is not None and len(values) != key.count:
            complain(f"expects {key.count} numbers, got {len(values)}")
            return None
        if not all(math.isfinite(v) for v in values):
            complain("entries must be finite")
            return None
        return values
    if key.kind == "tokens":
        tokens = tuple(raw.split())
        if not tokens:
            complain("must not be empty")
            return None
        if key.choices:
            bad = [t for t in tokens if t not in key.choices]
            if bad:
                complain(f"unknown entries {bad}; allowed: {', '.join(key.choices)}")
                return None
        return tokens
    raise AssertionError(f"unhandled key kind {key.kind}")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration document."""

    model: str
    sections: dict

    def has(self, section: str) -> bool:
        return section in self.sections

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    # ------------------------------------------------------------ builders

    def build_system(self) -> spincore.SpinSystemSpec:
        s = self.sections["system"]
        if self.model != "quartet-dimer":
            raise ConfigError([f"[system]: model {self.model!r} has no coupled-dimer description"])
        return spincore.SpinSystemSpec.from_parameters(
            exchange_cm=s["exchange_invcm"],
            dipolar_mhz=s["dipolar_mhz"],
            zfs_d_mhz=s["zfs_d_mhz"],
            zfs_e_mhz=s["zfs_e_mhz"],
            g_fp=s["g_fp"],
            g_vo=s["g_vo"],
            a_vo_mhz=s["a_vo_mhz"],
            alpha_deg=s["alpha_deg"],
            beta_deg=s["beta_deg"],
            quartet_x_axis=s.get("quartet_x_axis"),
        )

    def build_polarization(self) -> pol.PolarizationModel:
        p = self.sections.get("polarization", {})
        kind = p.get("kind", "photo")
        if kind == "thermal":
            return pol.ThermalPolarization(p["temperature_k"])
        return pol.PhotoQuartetPolarization(
            params=pol.QuartetPolarizationParams(a=p["a"], r=p["r"]),
            nuclear=pol.NuclearPopulations(p["rho_n"]),
            doublet_populations=p.get("doublet_populations"),
        )

    def build_sweep(self) -> sp.FieldSweepConfig:
        s = self.sections["sweep"]
        kwargs = dict(
            mw_frequency_ghz=s["mw_frequency_ghz"],
            field_start_mt=s["field_start_mt"],
            field_stop_mt=s["field_stop_mt"],
        )
        for name in ("n_points", "lineshape", "linewidth_mt", "search_points",
                     "slope_floor_ghz_per_mt", "pad_linewidths"):
            if name in s:
                kwargs[name] = s[name]
        return sp.FieldSweepConfig(**kwargs)

    def build_scheme(self, kind: str | None = None) -> sp.OrientationScheme:
        s = self.sections.get("scheme", {})
        kind = kind or s["kind"]
        if kind == "powder":
            return sp.PowderScheme(s.get("grid_size", 256))
        if kind in ("parallel", "perpendicular"):
            kwargs = {}
            for name in ("sigma_deg", "n_samples", "tilt_nodes", "transverse_nodes"):
                if name in s:
                    kwargs[name] = s[name]
            return sp.AlignedScheme(kind, **kwargs)
        if "theta_deg" not in s:
            raise ConfigError(["[scheme] theta_deg: required for kind = single"])
        return sp.SingleOrientationScheme(
            math.radians(s["theta_deg"]), math.radians(s.get("phi_deg", 0.0))
        )

    def build_kinetic_model(self) -> kin.SequentialModel:
        k = self.sections["kinetics"]
        return kin.SequentialModel(
            lifetimes=k["lifetimes_ps"],
            irf_fwhm=k.get("irf_fwhm_ps", 0.0),
            t0=k.get("t0_ps", 0.0),
        )

    def kinetic_settings(self) -> kin.KineticFitSettings:
        k = self.sections.get("kinetics", {})
        kwargs = {n: k[n] for n in ("max_iterations", "n_starts", "tolerance", "seed", "log10_spread") if n in k}
        return kin.KineticFitSettings(**kwargs)

    def output_paths(self) -> tuple[str, str, bool]:
        o = self.sections.get("output", {})
        return o.get("directory", "."), o.get("prefix", "quartetsim"), o.get("plot_script", False)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a configuration document.

    All schema violations are collected and raised together in one
    :class:`ConfigError`.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"not parseable as INI: {exc}"]) from exc

    errors: list[str] = []
    if not parser.has_section("meta"):
        raise ConfigError(["missing required section [meta]"])

    meta_raw = dict(parser.items("meta"))
    model = meta_raw.get("model", "")
    if model not in MODELS:
        errors.append(f"[meta] model: must be one of {', '.join(MODELS)}; got {model!r}")
        raise ConfigError(errors)

    sections: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        schema = _schema_for(model, section)
        if schema is None:
            errors.append(f"section [{section}] is not valid for model {model}")
            continue
        values = {}
        raw_items = dict(parser.items(section))
        for name in raw_items:
            if name not in schema:
                errors.append(f"[{section}] {name}: unknown key")
        for key in schema.values():
            if key.name not in raw_items:
                if key.required:
                    errors.append(f"[{section}] {key.name}: required key missing")
                continue
            parsed = _parse_value(section, key, raw_items[key.name], errors)
            if parsed is not None:
                values[key.name] = parsed
        sections[section] = values

    _cross_checks(model, sections, errors)
    if errors:
        raise ConfigError(errors)
    return RunConfig(model=model, sections=sections)


def _cross_checks(model: str, sections: dict, errors: list[str]) -> None:
    meta = sections.get("meta", {})
    if meta.get("schema_version") not in (None, SCHEMA_VERSION):
        errors.append(f"[meta] schema_version: supported version is {SCHEMA_VERSION}")

    sweep = sections.get("sweep")
    if sweep and "field_start_mt" in sweep and "field_stop_mt" in sweep:
        if not sweep["field_stop_mt"] > sweep["field_start_mt"] >= 0:
            errors.append("[sweep] field_start_mt/field_stop_mt: need 0 <= start < stop")

    polar = sections.get("polarization")
    if polar is not None and model == "quartet-dimer":
        kind = polar.get("kind", "photo")
        if kind == "photo":
            for name in ("a", "r", "rho_n"):
                if name not in polar:
                    errors.append(f"[polarization] {name}: required for kind = photo")
            if "rho_n" in polar:
                total = sum(polar["rho_n"])
                if abs(total - 1.0) > pol.NUCLEAR_SUM_TOL:
                    errors.append(f"[polarization] rho_n: must sum to 1, got {total:.6g}")
                if min(polar["rho_n"]) < 0:
                    errors.append("[polarization] rho_n: entries must be non-negative")
        elif "temperature_k" not in polar:
            errors.append("[polarization] temperature_k: required for kind = thermal")

    if model in ("triplet", "cw-doublet"):
        scheme = sections.get("scheme")
        if scheme and scheme.get("kind") not in (None, "powder"):
            errors.append(f"[scheme] kind: model {model} supports only powder averaging")

    fit_sec = sections.get("fit")
    if fit_sec:
        lo = fit_sec.get("bound_lo", -1.0)
        hi = fit_sec.get("bound_hi", 1.0)
        if not lo < hi:
            errors.append("[fit] bound_lo/bound_hi: need lo < hi")
        if "weights" in fit_sec:
            if "schemes" not in fit_sec:
                errors.append("[fit] weights: requires schemes")
            elif len(fit_sec["weights"]) != len(fit_sec["schemes"]):
                errors.append("[fit] weights: length must match schemes")
            if "weights" in fit_sec and any(w <= 0 for w in fit_sec["weights"]):
                errors.append("[fit] weights: must be > 0")

    kin_sec = sections.get("kinetics")
    if kin_sec and "lifetimes_ps" in kin_sec:
        taus = kin_sec["lifetimes_ps"]
        if not 1 <= len(taus) <= kin.MAX_COMPARTMENTS:
            errors.append(f"[kinetics] lifetimes_ps: 1..{kin.MAX_COMPARTMENTS} entries supported")
        if any(t <= 0 for t in taus):
            errors.append("[kinetics] lifetimes_ps: must be > 0")


def parse_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config: RunConfig) -> str:
    """Canonical text form: fixed section and key order, round-trip exact."""
    lines = []
    for section in _SECTIONS:
        if section not in config.sections:
            continue
        schema = _schema_for(config.model, section) or {}
        values = config.sections[section]
        lines.append(f"[{section}]")
        for name in schema:
            if name in values:
                lines.append(f"{name} = {_format_value(values[name])}")
        for name in values:  # pragma: no cover - schema covers all parsed keys
            if name not in schema:
                lines.append(f"{name} = {_format_value(values[name])}")
        lines.append("")
    return "\n".join(lines)


def require_sections(config: RunConfig, *names: str) -> None:
    missing = [f"missing required section [{n}]" for n in names if not config.has(n)]
    if missing:
        raise ConfigError(missing)

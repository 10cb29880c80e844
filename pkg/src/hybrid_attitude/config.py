"""YAML scenario files.

A file is a tree with the sections ``gnss``, ``fiveg``, ``attitude`` and
``search``; any key it omits keeps the value of the bundled ``defaults.yaml``.
Errors name the offending key and its line.
"""

from importlib import resources

import yaml

from .exceptions import ConfigurationError
from .fiveg_model import RadioConfig
from .frames import EulerAngles
from .simulation import ScenarioConfig
from .so3 import SearchControl

SCHEMA = {
    "gnss": {
        "n_satellites": int, "n_baselines": int, "baselines": list, "sigma_phase_m": float,
        "dd_correlation": str, "ambiguity_half_range": int, "constellation": object,
        "constellation_seed": int,
    },
    "fiveg": {
        "n_bs": int, "bs_offsets_m": object, "carrier_hz": float, "bandwidth_hz": float,
        "tx_power_dbm": float, "n_transmissions": int, "noise_psd_dbm_hz": float,
        "array": list, "noise_scale": float,
    },
    "attitude": {"truth": object},
    "search": {
        "initial_candidate_count": int, "expansion_factor": float, "max_candidates": int,
        "so3_tolerance": float, "so3_max_iterations": int,
    },
}


def defaults_text():
    return resources.files(__package__).joinpath("defaults.yaml").read_text(encoding="utf-8")


def _line_index(text):
    # "section.key" -> 1-based line of the key
    lines = {}
    root = yaml.compose(text)
    if not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        lines[knode.value] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[f"{knode.value}.{k2.value}"] = k2.start_mark.line + 1
    return lines


def _coerce(kind, value, name, line):
    if kind is object:
        return value
    try:
        if kind is int:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)  # also accepts "28e9", which YAML reads as a string
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ValueError
            return value
    except (TypeError, ValueError):
        pass
    raise ConfigurationError(f"expected {kind.__name__}, got {value!r}", field=name, line=line)


def parse_tree(text, lines=None):
    """Validate a YAML text against the schema; returns the nested dict."""
    try:
        tree = yaml.safe_load(text)
        lines = _line_index(text) if lines is None else lines
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigurationError(
            f"invalid YAML: {getattr(exc, 'problem', exc)}", field="<file>",
            line=mark.line + 1 if mark else None,
        ) from exc
    if tree is None:
        return {}
    if not isinstance(tree, dict):
        raise ConfigurationError("top level must be a mapping", field="<file>", line=1)
    out = {}
    for section, body in tree.items():
        if section not in SCHEMA:
            raise ConfigurationError("unknown section", field=str(section), line=lines.get(section))
        if not isinstance(body, dict):
            raise ConfigurationError("section must be a mapping", field=section, line=lines.get(section))
        out[section] = {}
        for key, value in body.items():
            name = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigurationError("unknown key", field=name, line=lines.get(name))
            out[section][key] = _coerce(SCHEMA[section][key], value, name, lines.get(name))
    return out


def _attitude(value, line):
    if value == "random":
        return "random"
    if isinstance(value, dict) and set(value) == {"yaw_deg", "pitch_deg", "roll_deg"}:
        try:
            return EulerAngles.from_degrees(
                float(value["yaw_deg"]), float(value["pitch_deg"]), float(value["roll_deg"])
            )
        except (TypeError, ValueError):
            pass
    raise ConfigurationError(
        "expected 'random' or yaw_deg/pitch_deg/roll_deg", field="attitude.truth", line=line
    )


def build_config(tree, lines=None):
    """ScenarioConfig from a validated tree, over the bundled defaults."""
    lines = lines or {}
    merged = parse_tree(defaults_text(), lines={})
    for section, body in tree.items():
        merged[section].update(body)
    g, f, a, s = merged["gnss"], merged["fiveg"], merged["attitude"], merged["search"]

    def build(fn, section):
        try:
            return fn()
        except ConfigurationError as exc:
            name = section
            if exc.field and "." in exc.field:
                name = section + "." + exc.field.split(".", 1)[1]
            raise ConfigurationError(exc.message, field=name, line=lines.get(name)) from None
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc), field=section, line=lines.get(section)) from None

    array = f["array"]
    if len(array) != 2:
        raise ConfigurationError("expected [rows, cols]", field="fiveg.array", line=lines.get("fiveg.array"))
    radio = build(lambda: RadioConfig(
        carrier_hz=f["carrier_hz"], bandwidth_hz=f["bandwidth_hz"], tx_power_dbm=f["tx_power_dbm"],
        n_transmissions=f["n_transmissions"], noise_psd_dbm_hz=f["noise_psd_dbm_hz"],
        array_rows=int(array[0]), array_cols=int(array[1]),
    ), "fiveg")
    search = build(lambda: SearchControl(**s), "search")
    truth = _attitude(a["truth"], lines.get("attitude.truth"))
    # ScenarioConfig names its fields after the model; map them back to file keys
    keys = {
        "n_satellites": "gnss.n_satellites", "n_baselines": "gnss.n_baselines",
        "baseline_matrix": "gnss.baselines", "sigma_phase": "gnss.sigma_phase_m",
        "dd_correlation": "gnss.dd_correlation", "n_bs": "fiveg.n_bs",
        "bs_offsets": "fiveg.bs_offsets_m", "fiveg_noise_scale": "fiveg.noise_scale",
        "attitude_truth": "attitude.truth", "constellation": "gnss.constellation",
        "ambiguity_half_range": "gnss.ambiguity_half_range",
    }
    F = None  # unless given, the first n_baselines unit vectors
    if "baselines" in tree.get("gnss", {}):
        try:
            F = tuple(tuple(float(x) for x in col) for col in zip(*g["baselines"]))
        except (TypeError, ValueError):
            raise ConfigurationError(
                "expected a list of 3-vectors", field="gnss.baselines",
                line=lines.get("gnss.baselines"),
            ) from None
    try:
        constellation = g["constellation"]
        if isinstance(constellation, list):
            constellation = tuple(tuple(float(x) for x in p) for p in constellation)
        offsets = f["bs_offsets_m"]
        if offsets is not None:
            offsets = tuple(tuple(float(x) for x in p) for p in offsets)
        return ScenarioConfig(
            n_satellites=g["n_satellites"], n_baselines=g["n_baselines"], baseline_matrix=F,
            sigma_phase=g["sigma_phase_m"], dd_correlation=g["dd_correlation"],
            n_bs=f["n_bs"], bs_offsets=offsets, radio=radio,
            fiveg_noise_scale=f["noise_scale"], attitude_truth=truth,
            constellation=constellation, constellation_seed=g["constellation_seed"],
            ambiguity_half_range=g["ambiguity_half_range"], search=search,
        )
    except ConfigurationError as exc:
        name = keys.get(exc.field, exc.field)
        raise ConfigurationError(exc.message, field=name, line=lines.get(name)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), field="<file>") from None


def load_config(path=None):
    """Read a scenario file; ``None`` gives the bundled defaults."""
    if path is None:
        return build_config({})
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", field="config") from None
    lines = _line_index_safe(text)
    return build_config(parse_tree(text, lines), lines)


def _line_index_safe(text):
    try:
        return _line_index(text)
    except yaml.YAMLError:
        return None

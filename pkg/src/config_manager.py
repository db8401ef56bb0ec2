import json
import os
import logging

#NOTE: logging_setup uses config, so the logging calls here are sent before logging is set up, using the default logging setup.

DEFAULT_SETTINGS = {
    "log_level": "none",
    "units": "natural",
    "M": 1.0,
    "hbar": 1.0,
    "seed": 0,
    "workers": 0,
    "worker_timeout": 300,
    "enable_worker_logging": False,
    "expose_resources_via_tools": False,
}

DEFAULT_SECTIONS = {
    "tolerances": {
        "round_trip": 1e-12,
        "jacobian": 1e-12,
        "bracket": 1e-12,
        "connection_spot": 1e-12,
        "connection_form": 1e-10,
        "pde": 1e-10,
        "ode": 1e-9,
        "hermiticity": 1e-14,
        "marginal": 1e-8,
        "positivity": 1e-12,
        "finite_difference": 1e-6,
        "floor": 1e-12,
        "delta_identity": 1e-8,
        "fourier_cos": 1e-8,
        "ledger": 1e-10,
        "jacobi_anger": 1e-10,
        "reconstruction": 1e-4,
    },
    "quadrature": {
        "abs_tol": 1e-12,
        "rel_tol": 1e-10,
        "max_subdivisions": 200,
        "singularity_substitution": True,
    },
    "truncation": {
        "max_grade": 8,
        "max_hbar": 3,
    },
    "grid": {
        "margin": 0.05,
        "L_max": 10.0,
        "nH": 21,
        "nL": 21,
        "nchi": 3,
    },
    "checks": {
        "moyal_pairs": 200,
        "random_points": 100,
        "hermiticity_points": 1000,
        "marginal_points": 200,
        "mmax": 40,
        "operators": "reference",
    },
}


def known_key(key):
    """True for top-level settings and dotted section.key names."""
    if key in DEFAULT_SETTINGS:
        return True
    section, _, name = key.partition(".")
    return section in DEFAULT_SECTIONS and name in DEFAULT_SECTIONS[section]


def _decode(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_key_value_file(path):
    """
    Parses `key = value` lines ('#' comments and blank lines skipped) into an ordered dict.
    Values are JSON-decoded when possible. Unknown keys raise ValueError.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ValueError(f"{path}:{number}: expected 'key = value', got '{raw.rstrip()}'")
            if not known_key(key):
                raise ValueError(f"{path}:{number}: unknown setting '{key}'")
            values[key] = _decode(value.strip())
    return values


def nest_settings(flat):
    """{'grid.margin': 0.1, 'M': 2} -> {'grid': {'margin': 0.1}, 'M': 2}."""
    nested = {}
    for key, value in flat.items():
        section, dot, name = key.partition(".")
        if dot:
            nested.setdefault(section, {})[name] = value
        else:
            nested[key] = value
    return nested


class ConfigManager:
    def __init__(self, config_path="config.json"):
        self.config_path = os.path.abspath(config_path)
        self.config_dir = os.path.dirname(self.config_path)
        self.config = {}
        self.load_config()

    def load_config(self):
        if not os.path.exists(self.config_path):
            # Fallback default if no config exists
            self.config = dict(DEFAULT_SETTINGS)
            logging.warning(f"Warning: {self.config_path} not found. Using default in-memory config.")
            return

        try:
            with open(self.config_path, "r") as f:
                self.config = json.load(f)
        except Exception as e:
            logging.error(f"Error loading config: {e}")
            self.config = dict(DEFAULT_SETTINGS)

    def resolve_path(self, path):
        """Resolves a path relative to the config file's directory if it's relative."""
        if not path:
            return path
        if os.path.isabs(path):
            return path
        return os.path.abspath(os.path.join(self.config_dir, path))

    def get_global_setting(self, key, default=None):
        """Returns a top-level setting from the config."""
        return self.config.get(key, DEFAULT_SETTINGS.get(key, default) if default is None else default)

    def get_section(self, name):
        """Returns a copy of a nested section merged over its built-in defaults."""
        merged = dict(DEFAULT_SECTIONS.get(name, {}))
        section = self.config.get(name, {})
        if not isinstance(section, dict):
            logging.error(f"Config section '{name}' is not an object; using defaults")
            return merged
        merged.update(section)
        return merged

    def settings(self):
        """All run settings: top-level values and every section, defaults filled in."""
        out = {key: self.get_global_setting(key) for key in DEFAULT_SETTINGS}
        for name in DEFAULT_SECTIONS:
            out[name] = self.get_section(name)
        return out

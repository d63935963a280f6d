"""Scenario configuration: JSON schema, parsing and construction of model objects."""

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .credit import IntensityModel, RecoverySpec
from .errors import ConfigError
from .paths import arithmetic_model, geometric_model, linear_model

RATE_NAMES = ("r", "r_B", "r_C", "q_C", "q_S", "gamma_S", "r_X", "r_TC", "r_FC", "r_K", "r_F")
CONVENTIONS = ("MV", "MVhat", "MVhat-approx")

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_curve = {"type": "array", "minItems": 1,
          "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}

RATE_SCHEMA = {
    "oneOf": [
        {"type": "object", "properties": {"constant": {"oneOf": [_num, _vec]}},
         "required": ["constant"], "additionalProperties": False},
        {"type": "object", "properties": {"curve": _curve},
         "required": ["curve"], "additionalProperties": False},
        {"type": "object", "additionalProperties": False, "required": ["linked"],
         "properties": {"linked": {
             "type": "object", "additionalProperties": False,
             "properties": {
                 "to": {"type": "string"},
                 "state": {"type": "integer", "minimum": 0},
                 "scale": _num,
                 "spread": _num,
             },
             "oneOf": [{"required": ["to"]}, {"required": ["state"]}],
         }}},
    ]
}

INTENSITY_SCHEMA = {
    "oneOf": [
        {"type": "object", "properties": {"constant": {"type": "number", "minimum": 0}},
         "required": ["constant"], "additionalProperties": False},
        {"type": "object", "properties": {"curve": _curve},
         "required": ["curve"], "additionalProperties": False},
        {"type": "object", "additionalProperties": False, "required": ["cir"],
         "properties": {"cir": {
             "type": "object", "additionalProperties": False,
             "required": ["initial", "kappa", "mean", "vol", "loading"],
             "properties": {"initial": _num, "kappa": _num, "mean": _num, "vol": _num,
                            "loading": _vec},
         }}},
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "grid", "mc", "netting"],
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object", "additionalProperties": False,
            "required": ["family", "s0"],
            "properties": {
                "family": {"enum": ["geometric", "linear", "arithmetic"]},
                "s0": {"oneOf": [_num, _vec]},
                "drift": {"oneOf": [_num, _vec]},
                "vol": {"oneOf": [_num, _vec]},
                "correlation": _mat,
                "A": _mat,
                "b": {"oneOf": [_num, _vec]},
                "sigma": _mat,
                "scheme": {"enum": ["euler", "milstein"]},
            },
        },
        "grid": {
            "type": "object", "additionalProperties": False, "required": ["T", "m"],
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                           "m": {"type": "integer", "minimum": 1}},
        },
        "mc": {
            "type": "object", "additionalProperties": False, "required": ["N", "seed"],
            "properties": {"N": {"type": "integer", "minimum": 2},
                           "seed": {"type": "integer", "minimum": 0}},
        },
        "deck": {"type": "object", "additionalProperties": False,
                 "properties": {k: RATE_SCHEMA for k in RATE_NAMES}},
        "credit": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "intensity_B": INTENSITY_SCHEMA,
                "intensity_C": INTENSITY_SCHEMA,
                "R_B": {"type": "number", "minimum": 0, "maximum": 1},
                "R_C": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "collateral": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "vm_fraction": _num,
                "im_posted": {"type": "number", "minimum": 0},
                "im_received": {"type": "number", "minimum": 0},
                "capital_fraction": {"type": "number", "minimum": 0},
            },
        },
        "netting": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {
                "kind": {"enum": ["forward", "call", "put", "basket_call", "basket_put"]},
                "strike": _num,
                "notional": _num,
                "weights": _vec,
                "asset": {"type": "integer", "minimum": 0},
            },
        },
        "convention": {"enum": list(CONVENTIONS)},
        "basis": {
            "type": "object", "additionalProperties": False,
            "properties": {"K": {"type": "integer", "minimum": 0},
                           "ridge": {"type": ["number", "null"], "minimum": 0}},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {"scheme": {"enum": ["explicit", "implicit"]},
                           "regression": {"enum": ["condition", "joint", "direct"]},
                           "riskless": {"enum": ["closed_form", "backward"]},
                           "adjustment": {"enum": ["closed_form", "backward"]}},
        },
        "factor": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "F": {"type": "integer", "minimum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "beta": _num,
                "sample_paths": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "name": "scenario",
    "deck": {},
    "credit": {"intensity_B": {"constant": 0.0}, "intensity_C": {"constant": 0.0},
               "R_B": 0.4, "R_C": 0.4},
    "collateral": {"vm_fraction": 0.0, "im_posted": 0.0, "im_received": 0.0,
                   "capital_fraction": 0.0},
    "convention": "MV",
    "basis": {"K": 4, "ridge": None},
    "solver": {"scheme": "explicit", "regression": "condition", "riskless": "backward",
               "adjustment": "backward"},
    "factor": {"enabled": False, "beta": 1.0, "sample_paths": 256},
}


def _merge(base, over):
    """Section-wise merge; entries inside a section are replaced whole."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(copy.deepcopy(v))
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_document(doc):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario document with defaults filled in."""

    doc: dict

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        validate_document(doc)
        full = _merge(DEFAULTS, doc)
        validate_document(full)
        cfg = cls(full)
        cfg._check_semantics()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dict(self):
        return copy.deepcopy(self.doc)

    def to_json(self):
        return json.dumps(self.doc, sort_keys=True, indent=2)

    def canonical(self):
        return json.dumps(self.doc, sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def with_overrides(self, **sections):
        return ScenarioConfig.from_dict(_merge(self.doc, sections))

    # accessors
    @property
    def seed(self):
        return int(self.doc["mc"]["seed"])

    @property
    def N(self):
        return int(self.doc["mc"]["N"])

    @property
    def T(self):
        return float(self.doc["grid"]["T"])

    @property
    def m(self):
        return int(self.doc["grid"]["m"])

    @property
    def convention(self):
        return self.doc["convention"]

    @property
    def dimension(self):
        return self.build_model().dimension

    def _check_semantics(self):
        model = self.build_model()
        n = model.dimension
        net = self.doc["netting"]
        if "weights" in net and len(net["weights"]) != n:
            raise ConfigError(f"netting/weights: expected {n} weights")
        if net.get("asset", 0) >= n:
            raise ConfigError("netting/asset: index out of range")
        fac = self.doc["factor"]
        if fac.get("enabled") and "F" in fac and fac["F"] > n:
            raise ConfigError(f"factor/F: at most {n}")
        for name, spec in self.doc["deck"].items():
            link = spec.get("linked")
            if link and "state" in link and link["state"] >= n:
                raise ConfigError(f"deck/{name}: state index out of range")
            if link and "to" in link and link["to"] not in RATE_NAMES + ("intensity_B", "intensity_C"):
                raise ConfigError(f"deck/{name}: unknown link target {link['to']!r}")
            if link and link.get("to") in RATE_NAMES and link["to"] not in self.doc["deck"]:
                raise ConfigError(f"deck/{name}: linked to unset rate {link['to']!r}")
        self._link_order()

    def _link_order(self):
        deck = self.doc["deck"]
        order, state = [], {}

        def visit(name, trail):
            if state.get(name) == "done":
                return
            if state.get(name) == "active":
                raise ConfigError("deck: cyclic rate links " + " -> ".join(trail + [name]))
            state[name] = "active"
            link = deck.get(name, {}).get("linked")
            if link and "to" in link and link["to"] in RATE_NAMES:
                visit(link["to"], trail + [name])
            state[name] = "done"
            order.append(name)

        for name in deck:
            visit(name, [])
        return order

    def build_model(self):
        md = self.doc["model"]
        fam = md["family"]
        try:
            if fam == "geometric":
                vol = np.atleast_1d(np.asarray(md.get("vol", 0.2), float))
                n = vol.size
                s0 = np.broadcast_to(np.asarray(md["s0"], float), (n,))
                return geometric_model(md.get("drift", 0.0), vol, s0, md.get("correlation"))
            if fam == "linear":
                if "A" not in md or "sigma" not in md:
                    raise ConfigError("model: linear family needs A and sigma")
                n = len(md["A"])
                s0 = np.broadcast_to(np.asarray(md["s0"], float), (n,))
                return linear_model(md["A"], md.get("b", 0.0), md["sigma"], s0)
            if "sigma" not in md:
                raise ConfigError("model: arithmetic family needs sigma")
            n = len(md["sigma"])
            s0 = np.broadcast_to(np.asarray(md["s0"], float), (n,))
            drift = np.broadcast_to(np.asarray(md.get("drift", 0.0), float), (n,))
            return arithmetic_model(drift, md["sigma"], s0)
        except ConfigError:
            raise
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise ConfigError(f"model: {exc}") from None

    def build_intensity(self, side):
        spec = self.doc["credit"][f"intensity_{side}"]
        if "constant" in spec:
            return IntensityModel.constant(spec["constant"])
        if "curve" in spec:
            return IntensityModel.curve(spec["curve"])
        c = spec["cir"]
        return IntensityModel.cir(c["initial"], c["kappa"], c["mean"], c["vol"], c["loading"])

    def build_recovery(self):
        c = self.doc["credit"]
        return RecoverySpec(c["R_B"], c["R_C"])

    def rate_values(self, grid, states, intensities=None):
        """Deck entries as scalars, ``(m+1,)`` profiles or ``(N, m+1)`` arrays."""
        deck = self.doc["deck"]
        out = {}
        for name in self._link_order():
            spec = deck[name]
            if "constant" in spec:
                out[name] = spec["constant"] if np.ndim(spec["constant"]) == 0 \
                    else np.asarray(spec["constant"], float)
            elif "curve" in spec:
                pts = np.asarray(spec["curve"], float)
                out[name] = np.interp(grid.nodes, pts[:, 0], pts[:, 1])
            else:
                link = spec["linked"]
                scale, spread = link.get("scale", 1.0), link.get("spread", 0.0)
                if "state" in link:
                    base = states[:, :, link["state"]]
                elif link["to"] in RATE_NAMES:
                    if link["to"] not in out:
                        raise ConfigError(f"deck/{name}: linked to unset rate {link['to']!r}")
                    base = np.asarray(out[link["to"]], float)
                else:
                    if intensities is None:
                        raise ConfigError(f"deck/{name}: intensity paths unavailable")
                    base = intensities[link["to"]]
                out[name] = scale * base + spread
        return out


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.load(path)

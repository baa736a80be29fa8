"""Scenario configuration (TOML) and construction of solver scenarios.

Every key has a documented default (``DEFAULTS``); a config file only lists
overrides plus the mandatory ``seed``. Lengths are in metres, sound speeds
in m/s, densities in kg/m^3 and absorption in dB/(MHz cm). Absorption is
converted to Np/m at the design frequency assuming a linear frequency
power law when the config is parsed.

Geometry along the propagation axis (axis 0)::

    absorber | source_gap cells | source plane | lens.gap cells | lens
    | extraction plane (lens.extraction_offset cells after the lens)
    | target.depth after the lens output face ... | back_margin | absorber

The domain ends ``grid.back_margin`` after the extraction plane unless an
aberrator has to fit; the target plane itself is reached by angular-spectrum
propagation. Transverse axes span the lens diameter plus
``grid.lateral_margin`` on each side plus the absorber.
"""
from __future__ import annotations

import copy
import difflib
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .grid import AmplitudeImage, Grid, GridError, Medium, disc_mask, homogeneous_medium, make_grid, SourcePlane
from .helmholtz import HelmholtzSettings
from .material import Material, MaterialPair
from .objective import LossConfig, TargetSpec, default_lambda
from .optim import AdamConfig
from .propagation import ASPlan
from .scenario import Scenario

NP_PER_DB = 1.0 / (20.0 / np.log(10.0))
BUILTIN_PREFIX = "builtin:"
DATA_DIR = Path(__file__).resolve().parent / "data"


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": None,
    "ndim": 3,
    "grid": {
        "dx": 1480.0 / 2e6 / 6,
        "absorber_width": 12,
        "lateral_margin": 2e-3,
        "source_gap": 2,
        "back_margin": 4,
    },
    "background": {"c": 1480.0, "rho": 1000.0, "alpha_db": 0.0},
    "source": {"diameter": 25.4e-3, "frequency": 2e6, "amplitude": 1.0, "phase": 0.0},
    "lens": {"thickness": 6e-3, "diameter": 50e-3, "gap": 1, "extraction_offset": 1},
    "target": {
        "image": "builtin:dove.pgm",
        "width": 50e-3,
        "depth": 12e-3,
        "binarize": True,
        "threshold": 0.5,
        "row": 0.5,
        "spots": [],
        "spot_width": 0.4e-3,
    },
    "materials": {
        "label": "illustrative",
        "material0": {"name": "soft", "c": 2035.0, "rho": 1128.0, "alpha_db": 1.74},
        "material1": {"name": "rigid", "c": 2473.0, "rho": 1181.0, "alpha_db": 0.43},
    },
    "loss": {"kind": "correlation", "lambda_scale": 1.0},
    "optimizer": {
        "learning_rate": 0.4,
        "beta1": 0.9,
        "beta2": 0.9,
        "epsilon": 1e-8,
        "n_iterations": 500,
        "checkpoint_every": 10,
        "init_spread": 0.1,
    },
    "solver": {
        "max_iterations": 20000,
        "tolerance": 1e-8,
        "absorber_order": 2,
        "absorber_strength": 3.0,
        "method": "auto",
    },
    "thin_element": {"n_iter": 50, "lens_material": 1},
    "aberrator": {"file": "", "offset": 2e-3},
}

CHOICES = {
    ("ndim",): (2, 3),
    ("loss", "kind"): ("correlation", "focus"),
    ("solver", "method"): ("auto", "direct", "born", "gmres"),
    ("thin_element", "lens_material"): (0, 1),
}


def _merge(defaults: dict, overrides: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        where = ".".join(path + (key,))
        if key not in defaults:
            near = difflib.get_close_matches(key, list(defaults), n=1, cutoff=0.5)
            hint = f"; did you mean {'.'.join(path + (near[0],))!r}?" if near else ""
            raise ConfigError(f"unknown key {where!r}{hint}")
        default = defaults[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a table")
            out[key] = _merge(default, value, path + (key,))
        else:
            out[key] = _coerce(where, default, value)
    return out


def _coerce(where: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where!r} must be true or false")
        return value
    if isinstance(default, int) and default is not None and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where!r} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where!r} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where!r} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where!r} must be an array")
        return [float(v) for v in value]
    return value


def _positive(cfg: dict, *keys):
    for path in keys:
        node = cfg
        for p in path:
            node = node[p]
        if not node > 0:
            raise ConfigError(f"{'.'.join(path)!r} must be positive, got {node}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated configuration. ``values`` holds every key (defaults filled
    in); ``base_dir`` resolves relative file paths."""

    values: dict
    base_dir: Optional[Path] = None

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.values == other.values

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def frequency(self) -> float:
        return self.values["source"]["frequency"]

    def alpha_np(self, alpha_db: float) -> float:
        """dB/(MHz cm) to Np/m at the design frequency."""
        return alpha_db * (self.frequency / 1e6) * 100.0 * NP_PER_DB

    @property
    def background(self) -> Material:
        b = self.values["background"]
        return Material(b["c"], b["rho"], self.alpha_np(b["alpha_db"]))

    @property
    def pair(self) -> MaterialPair:
        m = self.values["materials"]
        return MaterialPair(*(Material(m[k]["c"], m[k]["rho"], self.alpha_np(m[k]["alpha_db"]))
                              for k in ("material0", "material1")))

    @property
    def settings(self) -> HelmholtzSettings:
        s = self.values["solver"]
        return HelmholtzSettings(max_iterations=s["max_iterations"], tolerance=s["tolerance"],
                                 absorber_order=s["absorber_order"],
                                 absorber_strength=s["absorber_strength"], method=s["method"])

    @property
    def adam(self) -> AdamConfig:
        o = self.values["optimizer"]
        return AdamConfig(o["learning_rate"], o["beta1"], o["beta2"], o["epsilon"], o["n_iterations"])

    def resolve(self, name: str):
        """Path for a file reference; ``builtin:`` names come from the
        package data."""
        if name.startswith(BUILTIN_PREFIX):
            return DATA_DIR / name[len(BUILTIN_PREFIX):]
        path = Path(name)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path


def parse_config(text: str, base_dir=None) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML: {err}") from err
    values = _merge(DEFAULTS, raw)
    if values["seed"] is None:
        raise ConfigError("missing required key 'seed'")
    if isinstance(values["seed"], bool) or not isinstance(values["seed"], int) or values["seed"] < 0:
        raise ConfigError("'seed' must be a nonnegative integer")
    for path, allowed in CHOICES.items():
        node = values
        for p in path:
            node = node[p]
        if node not in allowed:
            raise ConfigError(f"{'.'.join(path)!r} must be one of {allowed}, got {node!r}")
    _positive(values, ("grid", "dx"), ("background", "c"), ("background", "rho"),
              ("source", "diameter"), ("source", "frequency"), ("lens", "thickness"),
              ("lens", "diameter"), ("target", "width"), ("target", "depth"))
    for key in ("material0", "material1"):
        _positive(values, ("materials", key, "c"), ("materials", key, "rho"))
    for where, a in [("background", values["background"]["alpha_db"])] + [
            (f"materials.{k}", values["materials"][k]["alpha_db"]) for k in ("material0", "material1")]:
        if a < 0:
            raise ConfigError(f"{where}.alpha_db must be >= 0")
    cfg = ScenarioConfig(values, None if base_dir is None else Path(base_dir))
    _check_sizes(cfg)
    return cfg


def _check_sizes(cfg: ScenarioConfig) -> None:
    v = cfg.values
    dx = v["grid"]["dx"]
    if v["source"]["diameter"] > v["lens"]["diameter"] + 2 * v["grid"]["lateral_margin"]:
        raise ConfigError("source diameter exceeds the transverse extent of the domain")
    if v["target"]["width"] > v["lens"]["diameter"] + 2 * v["grid"]["lateral_margin"] + 1e-12:
        raise ConfigError("target width exceeds the transverse extent of the domain")
    if v["lens"]["thickness"] < 2 * dx:
        raise ConfigError("lens thickness must span at least 2 cells")
    if v["target"]["depth"] <= v["lens"]["extraction_offset"] * dx:
        raise ConfigError("target depth must lie beyond the extraction plane")
    if v["lens"]["extraction_offset"] < 1 or v["lens"]["gap"] < 1 or v["grid"]["source_gap"] < 0:
        raise ConfigError("lens.gap and lens.extraction_offset must be >= 1, grid.source_gap >= 0")
    try:
        cfg.settings
        cfg.adam
        cfg.pair
    except ValueError as err:
        raise ConfigError(str(err)) from err


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, path.parent)


def _strip_none(d):
    return {k: _strip_none(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}


def dump_config(cfg: ScenarioConfig) -> str:
    """Normalized TOML with every key present."""
    return tomli_w.dumps(_strip_none(cfg.values))


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


# -- scenario construction ----------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    """Cell indices of the scenario geometry along axis 0 and the transverse
    plane shape."""

    grid: Grid
    source_index: int
    lens_offset: tuple[int, ...]
    lens_shape: tuple[int, ...]
    extraction_index: int
    target_distance: float        # extraction plane to target plane, metres
    aberrator_index: Optional[int]


def _cells(length: float, dx: float) -> int:
    return max(int(round(length / dx)), 1)


def layout(cfg: ScenarioConfig, aberrator_depth: int = 0) -> Layout:
    v = cfg.values
    g = v["grid"]
    dx, w = g["dx"], g["absorber_width"]
    ndim = v["ndim"]
    n_lens_t = _cells(v["lens"]["diameter"], dx)
    n_t = n_lens_t + 2 * _cells(g["lateral_margin"], dx) + 2 * w
    n_lens_z = _cells(v["lens"]["thickness"], dx)
    src = w + g["source_gap"]
    l0 = src + v["lens"]["gap"]
    ext = l0 + n_lens_z + v["lens"]["extraction_offset"] - 1
    end = ext + 1 + g["back_margin"]
    ab_index = None
    if aberrator_depth:
        ab_index = l0 + n_lens_z + _cells(v["aberrator"]["offset"], dx)
        ext = max(ext, ab_index + aberrator_depth)
        end = ext + 1 + g["back_margin"]
    n_z = end + w
    shape = (n_z,) + (n_t,) * (ndim - 1)
    t0 = (n_t - n_lens_t) // 2
    try:
        grid = make_grid(shape, dx, w)
    except GridError as err:
        raise ConfigError(f"inconsistent geometry: {err}") from err
    depth_after_lens = v["target"]["depth"]
    distance = depth_after_lens - (ext - (l0 + n_lens_z) + 0.5) * dx
    if distance <= 0:
        raise ConfigError("target plane lies before the extraction plane")
    return Layout(grid, src, (l0,) + (t0,) * (ndim - 1), (n_lens_z,) + (n_lens_t,) * (ndim - 1),
                  ext, distance, ab_index)


def area_resample(image: np.ndarray, src_dx: float, out_shape, out_dx: float) -> np.ndarray:
    """Area-weighted average of ``image`` (pixel pitch ``src_dx``, centred)
    onto a centred grid of ``out_shape`` pixels of pitch ``out_dx``. Output
    pixels outside the image are zero."""
    image = np.asarray(image, dtype=float)
    out = image
    for axis, (n_in, n_out) in enumerate(zip(image.shape, out_shape)):
        edges_in = (np.arange(n_in + 1) - n_in / 2) * src_dx
        edges_out = (np.arange(n_out + 1) - n_out / 2) * out_dx
        lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
        hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
        weights = np.clip(hi - lo, 0, None) / out_dx
        out = np.moveaxis(np.tensordot(weights, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


def _spots_profile(v: dict, n: int, dx: float) -> np.ndarray:
    x = (np.arange(n) - (n - 1) / 2) * dx
    t = v["target"]
    prof = sum(np.exp(-((x - s) / t["spot_width"]) ** 2) for s in t["spots"])
    return np.asarray(prof, dtype=float)


def build_target(cfg: ScenarioConfig, plane_shape, dx: float, distance: float) -> TargetSpec:
    from .io import read_pgm

    v = cfg.values
    t = v["target"]
    if t["spots"]:
        if len(plane_shape) != 1:
            raise ConfigError("target.spots is only supported for 2D scenarios")
        q0 = _spots_profile(v, plane_shape[0], dx)
        mask = q0 > t["threshold"] * q0.max()
    else:
        try:
            img = read_pgm(cfg.resolve(t["image"]))
        except OSError as err:
            raise ConfigError(f"cannot read target image {t['image']}: {err}") from err
        pitch = t["width"] / max(img.shape)
        if len(plane_shape) == 1:
            row = min(int(t["row"] * img.shape[0]), img.shape[0] - 1)
            q0 = area_resample(img[row], pitch, plane_shape, dx)
        else:
            q0 = area_resample(img, pitch, plane_shape, dx)
        if t["binarize"]:
            q0 = (q0 > t["threshold"]).astype(float)
        mask = q0 > t["threshold"] * q0.max()
    if not np.any(q0):
        raise ConfigError("target image is empty after resampling")
    return TargetSpec(AmplitudeImage.from_array(q0, dx), mask, distance)


def load_aberrator(cfg: ScenarioConfig):
    from .io import read_voxels

    name = cfg.values["aberrator"]["file"]
    if not name:
        return None
    try:
        vox = read_voxels(cfg.resolve(name))
    except OSError as err:
        raise ConfigError(f"cannot read aberrator {name}: {err}") from err
    if vox.indices.ndim != cfg.values["ndim"]:
        raise ConfigError(f"aberrator has {vox.indices.ndim} axes, scenario has {cfg.values['ndim']}")
    if not np.isclose(vox.dx, cfg.values["grid"]["dx"], rtol=1e-9):
        raise ConfigError(f"aberrator dx {vox.dx} differs from grid dx {cfg.values['grid']['dx']}")
    return vox


def build_background(cfg: ScenarioConfig, lay: Layout, aberrator=None) -> Medium:
    bg = cfg.background
    medium = homogeneous_medium(lay.grid, bg.c, bg.rho, bg.alpha)
    if aberrator is None:
        return medium
    idx = aberrator.indices
    shape = lay.grid.shape
    offset = [lay.aberrator_index] + [(n - m) // 2 for n, m in zip(shape[1:], idx.shape[1:])]
    if any(m > n for n, m in zip(shape[1:], idx.shape[1:])):
        raise ConfigError("aberrator is wider than the domain")
    sl = tuple(slice(o, o + m) for o, m in zip(offset, idx.shape))
    arrays = {}
    for i, name in enumerate(("c", "rho", "alpha")):
        arr = np.array(getattr(medium, name))
        # index 0 keeps the background; index 1 is the aberrating tissue
        # (voxel footers store absorption in Np/m)
        arr[sl] = np.where(idx == 1, aberrator.pair.material1[i], arr[sl])
        arrays[name] = arr
    return Medium(lay.grid, **arrays)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    aberrator = load_aberrator(cfg)
    lay = layout(cfg, 0 if aberrator is None else aberrator.indices.shape[0])
    v = cfg.values
    grid = lay.grid
    background = build_background(cfg, lay, aberrator)
    s = v["source"]
    plane = grid.transverse_shape
    src = SourcePlane(0, lay.source_index, disc_mask(plane, grid.dx, s["diameter"]),
                      s["amplitude"], s["phase"], s["frequency"])
    target = build_target(cfg, plane, grid.dx, lay.target_distance)
    plan = ASPlan(plane, grid.dx, v["background"]["c"], s["frequency"])
    try:
        return Scenario(background, src, cfg.pair, lay.lens_offset, lay.lens_shape, lay.extraction_index,
                        target, plan, cfg.settings)
    except GridError as err:
        raise ConfigError(f"inconsistent scenario: {err}") from err


def loss_config(cfg: ScenarioConfig, scenario: Scenario) -> LossConfig:
    lo = cfg.values["loss"]
    return LossConfig(lam=lo["lambda_scale"] * default_lambda(scenario.target.q0), kind=lo["kind"])

"""One TOML document configures the whole pipeline.

Sections map onto the per-module config dataclasses: [scene], [fov],
[quant], [window], [model], [train] and [report]. Every key is
optional; the defaults are the reference operating point (460 samples
at 10 Hz, field of view -pi/6..pi, 216 angle bins, 500 distance levels
of 0.034 m, 16-scan observations, dropout 0.2, 1000 epochs). Unknown
sections or keys are hard errors so a typo cannot silently fall back
to a default.

The top-level `seed` feeds every stage that does not pin its own:
sequence i of a simulation run uses scene seed `seed + i`, the model
seed defaults to `seed`, and the train/test split is drawn from `seed`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from .dataset import WindowConfig
from .model import ModelConfig
from .preproc import FovConfig, QuantConfig
from .scene import NoiseConfig, SceneConfig

TRAIN_KEYS = ("epochs", "batch_size", "learning_rate")

# scene keys settable from TOML; the street geometry lists stay in code
_SCENE_TUPLES = {"tx_position": 2, "rx_position": 2, "blocker_speed_range": 2}


@dataclass
class ReportConfig:
    """Latency picks plus optional externally measured baselines.

    A baseline row injects a (variant, t_p, top1) point into the
    accuracy curve before the latency table is computed, so externally
    sourced numbers can sit next to the trained models in the figures.
    """

    picks: tuple[int, ...] = (1, 5, 10)
    baselines: list[tuple[str, int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.picks = tuple(int(p) for p in self.picks)
        if not self.picks or any(p < 1 for p in self.picks):
            raise ValueError("picks must be positive horizons")
        norm = []
        for row in self.baselines:
            if len(row) != 3:
                raise ValueError(f"baseline row {row!r} is not "
                                 "(variant, t_p, top1)")
            variant, t_p, top1 = row
            if not 0.0 <= float(top1) <= 1.0:
                raise ValueError(f"baseline top1 {top1} outside [0, 1]")
            norm.append((str(variant), int(t_p), float(top1)))
        self.baselines = norm


@dataclass
class PipelineConfig:
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    fov: FovConfig = field(default_factory=FovConfig)
    quant: QuantConfig = field(default_factory=QuantConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    test_fraction: float = 0.2
    dictionary_scans: int = 5000        # scans consumed by a dictionary build

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.dictionary_scans < 1:
            raise ValueError("dictionary_scans must be >= 1")
        if self.window.variant != self.model.variant:
            raise ValueError("window and model variants diverge; set "
                             "variant once under [model]")


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ValueError(f"unknown key(s) {unknown} in [{section}]; "
                         f"valid keys: {sorted(allowed)}")


def _build_scene(raw: dict, seed: int) -> SceneConfig:
    raw = dict(raw)
    noise_raw = raw.pop("noise", {})
    allowed = {f.name for f in fields(SceneConfig)} - {"noise"}
    blocked = {"static_objects", "lanes"}
    _check_keys("scene", raw, allowed - blocked)
    for key, n in _SCENE_TUPLES.items():
        if key in raw:
            if len(raw[key]) != n:
                raise ValueError(f"[scene] {key} needs {n} numbers")
            raw[key] = tuple(float(v) for v in raw[key])
    if "blocker_size_range" in raw:
        raw["blocker_size_range"] = tuple(
            tuple(float(v) for v in pair) for pair in raw["blocker_size_range"])

    _check_keys("scene.noise", noise_raw, {f.name for f in fields(NoiseConfig)})
    if "spurious_static_points" in noise_raw:
        noise_raw = dict(noise_raw)
        noise_raw["spurious_static_points"] = [
            (float(a), float(d)) for a, d in noise_raw["spurious_static_points"]]
    raw.setdefault("seed", seed)
    return SceneConfig(noise=NoiseConfig(**noise_raw), **raw)


def from_dict(doc: dict) -> PipelineConfig:
    """Validate a parsed TOML document into a PipelineConfig."""
    doc = dict(doc)
    _check_keys("top level", doc,
                {"seed", "scene", "fov", "quant", "window", "model",
                 "train", "report"})
    seed = int(doc.get("seed", 0))

    scene = _build_scene(doc.get("scene", {}), seed)

    fov_raw = doc.get("fov", {})
    _check_keys("fov", fov_raw, {f.name for f in fields(FovConfig)})
    fov = FovConfig(**fov_raw)

    quant_raw = dict(doc.get("quant", {}))
    dict_scans = int(quant_raw.pop("dictionary_scans", 5000))
    _check_keys("quant", quant_raw, {f.name for f in fields(QuantConfig)})
    quant = QuantConfig(**quant_raw)

    window_raw = dict(doc.get("window", {}))
    test_fraction = float(window_raw.pop("test_fraction", 0.2))
    _check_keys("window", window_raw,
                {f.name for f in fields(WindowConfig)} - {"variant"})

    model_raw = dict(doc.get("model", {}))
    _check_keys("model", model_raw,
                {f.name for f in fields(ModelConfig)} - set(TRAIN_KEYS))
    train_raw = doc.get("train", {})
    _check_keys("train", train_raw, TRAIN_KEYS)
    model_raw.update(train_raw)
    model_raw.setdefault("seed", seed)
    model = ModelConfig(**model_raw)

    window = WindowConfig(variant=model.variant, **window_raw)

    report_raw = dict(doc.get("report", {}))
    _check_keys("report", report_raw, {"picks", "baselines"})
    if "baselines" in report_raw:
        report_raw["baselines"] = [tuple(r) for r in report_raw["baselines"]]
    if "picks" in report_raw:
        report_raw["picks"] = tuple(report_raw["picks"])
    report = ReportConfig(**report_raw)

    return PipelineConfig(seed=seed, scene=scene, fov=fov, quant=quant,
                          window=window, model=model, report=report,
                          test_fraction=test_fraction,
                          dictionary_scans=dict_scans)


def load_config(path=None) -> PipelineConfig:
    """Parse a pipeline TOML file; None gives the built-in defaults."""
    if path is None:
        return PipelineConfig()
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return from_dict(doc)

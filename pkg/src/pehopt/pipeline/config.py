"""Campaign configuration (validated JSON document)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..cluster import ClusterConfig
from ..errors import ConfigError
from ..excitation import BridgeModel, TrafficSpec
from ..femodel import ModelSettings
from ..materials import load_materials
from ..optimizer import PsoConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Location(_Strict):
    id: str = Field(min_length=1)
    position: Optional[float] = None            # metres along the span
    mode_shape: Optional[list[float]] = None    # overrides the sine ordinates
    csv: list[str] = Field(default_factory=list)

    @field_validator("id")
    @classmethod
    def _no_separator(cls, v):
        if "/" in v or "\\" in v:
            raise ValueError("location ids may not contain path separators")
        return v


class WindowPlan(_Strict):
    count: int = Field(default=24, ge=1)
    duration: float = Field(default=3600.0, gt=0)
    rate: float = Field(default=100.0, gt=0)
    source: Literal["synthetic", "csv"] = "synthetic"


class TrafficPlan(_Strict):
    base: dict = Field(default_factory=dict)
    # per-window arrival rates [veh/h], cycled over the windows
    rates_per_hour: Optional[list[float]] = None


class ModelPlan(_Strict):
    degrees: tuple[int, int] = (3, 3)
    elements: tuple[int, int] = (8, 8)
    n_modes: int = Field(default=5, ge=1)
    R_l: float = Field(default=1000.0, gt=0)
    coupling_z_weight: Literal["first_moment", "z_squared"] = "first_moment"
    interface_continuity: int = Field(default=1, ge=0)
    residual_vectors: bool = True
    R: float = Field(default=1.0, gt=0)
    h: float = Field(default=1e-3, gt=0)
    materials: str | dict = "bronze_pzt5a"


class EvaluationPlan(_Strict):
    rtol: float = Field(default=1e-6, gt=0)
    atol: float = Field(default=1e-9, gt=0)


class CampaignConfig(_Strict):
    name: str = "campaign"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    locations: list[Location] = Field(min_length=1)
    windows: WindowPlan = WindowPlan()
    bridge: dict | str = Field(default_factory=dict)
    traffic: TrafficPlan = TrafficPlan()
    pso: dict = Field(default_factory=dict)
    clustering: dict = Field(default_factory=dict)
    model: ModelPlan = ModelPlan()
    evaluation: EvaluationPlan = EvaluationPlan()
    output_dir: str = "campaign_out"
    threads: int = Field(default=1, ge=1)
    plots: bool = True

    @model_validator(mode="after")
    def _check(self):
        ids = [loc.id for loc in self.locations]
        if len(set(ids)) != len(ids):
            raise ValueError("location ids must be unique")
        if self.windows.source == "csv":
            for loc in self.locations:
                if not loc.csv:
                    raise ValueError(f"location {loc.id} has no csv files")
                for p in loc.csv:
                    if not Path(p).is_file():
                        raise ValueError(f"csv file not found: {p}")
        if isinstance(self.bridge, str) and not Path(self.bridge).is_file():
            raise ValueError(f"bridge file not found: {self.bridge}")
        # building the typed objects validates their contents
        self.bridge_model()
        self.traffic_spec()
        self.pso_config()
        self.cluster_config()
        self.model_settings()
        return self

    # typed views ----------------------------------------------------------

    def bridge_model(self) -> BridgeModel:
        doc = self.bridge
        if isinstance(doc, str):
            doc = json.loads(Path(doc).read_text())
        doc = dict(doc)
        sensors = dict(doc.get("sensors", BridgeModel().sensors))
        table = dict(doc.get("mode_table", {}))
        for loc in self.locations:
            if loc.position is not None:
                sensors[loc.id] = loc.position
            if loc.mode_shape is not None:
                table[loc.id] = list(loc.mode_shape)
        doc["sensors"] = sensors
        doc["mode_table"] = table
        bridge = BridgeModel.from_dict(doc)
        if self.windows.source == "synthetic":
            for loc in self.locations:
                bridge.sensor_shape(loc.id)
        return bridge

    def traffic_spec(self) -> TrafficSpec:
        return TrafficSpec.from_dict(self.traffic.base)

    def window_rate(self, index: int) -> float:
        rates = self.traffic.rates_per_hour
        if not rates:
            return self.traffic_spec().rate_per_hour
        return float(rates[index % len(rates)])

    def pso_config(self) -> PsoConfig:
        doc = {"seed": self.seed, **self.pso}
        try:
            return PsoConfig.from_dict(doc)
        except TypeError as exc:
            raise ConfigError(f"bad pso section: {exc}") from exc

    def cluster_config(self) -> ClusterConfig:
        try:
            return ClusterConfig.from_dict(self.clustering)
        except TypeError as exc:
            raise ConfigError(f"bad clustering section: {exc}") from exc

    def model_settings(self) -> ModelSettings:
        m = self.model
        return ModelSettings(
            degrees=tuple(m.degrees), elements=tuple(m.elements), n_modes=m.n_modes, R_l=m.R_l,
            coupling_z_weight=m.coupling_z_weight, interface_continuity=m.interface_continuity,
            residual_vectors=m.residual_vectors, R=m.R, h=m.h, materials=load_materials(m.materials),
        )

    def with_overrides(self, seed=None, threads=None, output_dir=None) -> "CampaignConfig":
        upd = {}
        if seed is not None:
            upd["seed"] = int(seed)
        if threads is not None:
            upd["threads"] = int(threads)
        if output_dir is not None:
            upd["output_dir"] = str(output_dir)
        return load_config({**self.model_dump(mode="json"), **upd}) if upd else self

    def canonical_json(self) -> str:
        doc = self.model_dump(mode="json")
        doc.pop("output_dir")
        doc.pop("threads")
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def load_config(source) -> CampaignConfig:
    """Validate a dict or a JSON file path; raises :class:`ConfigError`."""
    if isinstance(source, CampaignConfig):
        return source
    if not isinstance(source, dict):
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            source = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return CampaignConfig.model_validate(source)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

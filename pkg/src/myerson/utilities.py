from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dist_core import DistributionFile, distribution_to_dict
from dist_core.utilities import format_validation_error, parse_json
from helpers import DistributionError, InstanceError
from .instance import AuctionInstance, FeasibilityConstraint, KUnit, MatroidOracle, Partition, PositionAuction


class KUnitFile(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["kunit"]
    H: int = Field(ge=1)


class PartitionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    groups: List[List[int]]
    caps: List[int]


class PartitionFile(PartitionSpec):
    kind: Literal["partition"]


class PositionFile(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["position"]
    alphas: Optional[List[float]] = None


class MatroidFile(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["matroid"]
    partition: PartitionSpec


FeasibilityFile = Annotated[
    Union[KUnitFile, PartitionFile, PositionFile, MatroidFile], Field(discriminator="kind")
]


class InstanceFile(BaseModel):
    """
    Schema of an instance JSON document.

    ``{"bidders": [dist, ...], "feasibility": {"kind": "kunit", "H": 2}}``; a
    position auction may give its click-through-rates either inside the
    feasibility block or as a top-level ``"alphas"`` list.
    """
    model_config = ConfigDict(extra="forbid")

    bidders: List[DistributionFile] = Field(min_length=1)
    feasibility: FeasibilityFile = Field(default_factory=lambda: KUnitFile(kind="kunit", H=1))
    alphas: Optional[List[float]] = None

    @model_validator(mode="after")
    def _alphas_for_positions(self) -> "InstanceFile":
        if isinstance(self.feasibility, PositionFile):
            if self.feasibility.alphas is None and self.alphas is None:
                raise ValueError("position feasibility needs alphas")
        elif self.alphas is not None:
            raise ValueError("alphas are only allowed with position feasibility")
        return self

    def build(self, prefix: str = "") -> AuctionInstance:
        bidders = tuple(b.build(prefix=f"{prefix}bidders.{i}.") for i, b in enumerate(self.bidders))
        f = self.feasibility
        if isinstance(f, KUnitFile):
            feasibility: FeasibilityConstraint = KUnit(f.H)
        elif isinstance(f, PartitionFile):
            feasibility = Partition(tuple(tuple(g) for g in f.groups), tuple(f.caps))
        elif isinstance(f, PositionFile):
            feasibility = PositionAuction(tuple(f.alphas if f.alphas is not None else self.alphas))
        else:
            feasibility = MatroidOracle.partition(f.partition.groups, f.partition.caps)
        try:
            return AuctionInstance(bidders, feasibility)
        except InstanceError as e:
            raise InstanceError(f"{prefix}{e}") from None


def instance_from_dict(data: Dict[str, Any], prefix: str = "") -> AuctionInstance:
    try:
        schema = InstanceFile.model_validate(data)
    except ValidationError as e:
        raise InstanceError(format_validation_error(e, prefix)) from None
    return schema.build(prefix)


def load_instance(path: Union[str, Path]) -> AuctionInstance:
    """Reads and validates an instance file; errors name the file and the offending field or line."""
    path = Path(path)
    try:
        data = parse_json(path.read_text(), str(path))
    except DistributionError as e:
        raise InstanceError(str(e)) from None
    return instance_from_dict(data, prefix=f"{path}: ")


def instance_to_dict(instance: AuctionInstance) -> Dict[str, Any]:
    f = instance.feasibility
    if isinstance(f, KUnit):
        feasibility: Dict[str, Any] = {"kind": "kunit", "H": f.H}
    elif isinstance(f, Partition):
        feasibility = {"kind": "partition", "groups": [list(g) for g in f.groups], "caps": list(f.caps)}
    elif isinstance(f, PositionAuction):
        feasibility = {"kind": "position", "alphas": list(f.alphas)}
    elif f.name == "partition":
        feasibility = {"kind": "matroid", "partition": f.spec}
    else:
        raise InstanceError(f"oracle {f.name!r} has no file representation")
    return {"bidders": [distribution_to_dict(d) for d in instance.bidders], "feasibility": feasibility}

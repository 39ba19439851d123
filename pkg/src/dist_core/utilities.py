import json
from pathlib import Path
from typing import Any, Dict, List, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from helpers import DistributionError
from .distribution import DiscreteDistribution


class DistributionFile(BaseModel):
    """Schema of a distribution JSON document: ``{"support": [...], "probs": [...]}``."""
    model_config = ConfigDict(extra="forbid")

    support: List[float]
    probs: List[float]

    def build(self, prefix: str = "") -> DiscreteDistribution:
        try:
            return DiscreteDistribution(tuple(self.support), tuple(self.probs))
        except DistributionError as e:
            raise DistributionError(f"{prefix}{e}") from None


def format_validation_error(error: ValidationError, prefix: str = "") -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"{prefix}{location}: {first['msg']}"


def parse_json(text: str, source: str = "<string>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DistributionError(f"{source}: line {e.lineno} column {e.colno}: {e.msg}") from None


def distribution_from_dict(data: Dict[str, Any], prefix: str = "") -> DiscreteDistribution:
    try:
        schema = DistributionFile.model_validate(data)
    except ValidationError as e:
        raise DistributionError(format_validation_error(e, prefix)) from None
    return schema.build(prefix)


def load_distribution(path: Union[str, Path]) -> DiscreteDistribution:
    path = Path(path)
    return distribution_from_dict(parse_json(path.read_text(), str(path)), prefix=f"{path}: ")


def distribution_to_dict(dist: DiscreteDistribution) -> Dict[str, List[float]]:
    return {"support": list(dist.support), "probs": list(dist.probs)}

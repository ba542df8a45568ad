"""Instance, field and ontology file loading."""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from src.core.errors import ArgumentError, ValidationError
from src.domains.ctp import CtpInstance
from src.domains.guesswho import ONTOLOGY_FILE, Ontology
from src.domains.rocksample import RockField
from src.utils.helpers import header_lines

logger = logging.getLogger(__name__)


def _read_yaml(file_path: str) -> Dict[str, Any]:
    path = Path(file_path)
    if not path.exists():
        raise ValidationError(f"File not found: {file_path}")
    with open(path, 'r') as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError(f"Cannot parse {file_path}: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"{file_path} must hold a mapping")
    return data


def _write_yaml(data: Dict[str, Any], file_path: str, header: Optional[Dict[str, Any]] = None):
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w') as f:
        f.write(header_lines(header))
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=None)


def instance_to_dict(instance: CtpInstance) -> Dict[str, Any]:
    return {
        "domain": "ctp",
        "start": instance.start,
        "goal": instance.goal,
        "nodes": [{"id": i, "x": x, "y": y} for i, (x, y) in enumerate(instance.coords)],
        "edges": [
            {"u": u, "v": v, "distance": d, "open_prob": p}
            for (u, v), d, p in zip(instance.edges, instance.distances, instance.open_probs)
        ],
    }


def instance_from_dict(data: Dict[str, Any]) -> CtpInstance:
    """
    Build a CTP instance from its file mapping.

    Node ids must be 0 .. n-1; they may be listed in any order.

    Args:
        data: Mapping with nodes (id, x, y), edges (u, v, distance, open_prob),
            start and goal

    Returns:
        CtpInstance
    """
    try:
        edges = data["edges"]
        nodes = {int(node["id"]): (float(node["x"]), float(node["y"])) for node in data["nodes"]}
        if sorted(nodes) != list(range(len(data["nodes"]))):
            raise ValueError("node ids must be 0 .. n-1 without repeats")
        return CtpInstance(
            coords=tuple(nodes[i] for i in range(len(nodes))),
            edges=tuple((int(e["u"]), int(e["v"])) for e in edges),
            distances=tuple(float(e["distance"]) for e in edges),
            open_probs=tuple(float(e["open_prob"]) for e in edges),
            start=int(data["start"]),
            goal=int(data["goal"]),
        )
    except (KeyError, TypeError, ValueError, ArgumentError) as e:
        raise ValidationError(f"Invalid CTP instance: {e}") from e


def load_instance(file_path: str) -> CtpInstance:
    """Load a CTP instance file."""
    instance = instance_from_dict(_read_yaml(file_path))
    logger.info(
        f"Loaded CTP instance from {file_path}: {instance.n_nodes} nodes, "
        f"{len(instance.edges)} edges"
    )
    return instance


def save_instance(instance: CtpInstance, file_path: str, header: Optional[Dict[str, Any]] = None):
    """
    Save a CTP instance as YAML.

    Args:
        instance: Instance to save
        file_path: Path to save the file
        header: Key/value pairs written as leading comment lines
    """
    _write_yaml(instance_to_dict(instance), file_path, header)
    logger.info(f"CTP instance saved to {file_path}")


def field_to_dict(field: RockField) -> Dict[str, Any]:
    data = {
        "domain": "rocksample",
        "size": field.size,
        "d0": field.d0,
        "rocks": [[x, y] for x, y in field.rocks],
    }
    if field.qualities is not None:
        data["qualities"] = ["good" if q else "bad" for q in field.qualities]
    return data


def field_from_dict(data: Dict[str, Any]) -> RockField:
    try:
        qualities = data.get("qualities")
        if qualities is not None:
            if any(q not in ("good", "bad") for q in qualities):
                raise ValueError("qualities must be 'good' or 'bad'")
            qualities = tuple(q == "good" for q in qualities)
        d0 = data.get("d0")
        return RockField(
            size=int(data["size"]),
            rocks=tuple((int(x), int(y)) for x, y in data["rocks"]),
            d0=None if d0 is None else float(d0),
            qualities=qualities,
        )
    except (KeyError, TypeError, ValueError, ArgumentError) as e:
        raise ValidationError(f"Invalid RockSample field: {e}") from e


def load_field(file_path: str) -> RockField:
    """Load a RockSample field file."""
    field = field_from_dict(_read_yaml(file_path))
    logger.info(f"Loaded {field.size}x{field.size} field with {field.n_rocks} rocks from {file_path}")
    return field


def save_field(field: RockField, file_path: str, header: Optional[Dict[str, Any]] = None):
    _write_yaml(field_to_dict(field), file_path, header)
    logger.info(f"RockSample field saved to {file_path}")


def load_ontology(file_path: Optional[str] = None) -> Ontology:
    """
    Load and validate the Guess Who ontology.

    Args:
        file_path: Ontology CSV (the bundled table by default)

    Returns:
        Ontology with 24 individuals and 19 questions
    """
    file_path = file_path or ONTOLOGY_FILE
    if not Path(file_path).exists():
        raise ValidationError(f"Ontology file not found: {file_path}")
    return Ontology.load(file_path)

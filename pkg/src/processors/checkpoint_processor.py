"""
Model checkpoints: JSON with architecture, flat parameters, optimizer state
and training metadata.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .base_processor import BaseProcessor
from ..FileRead import SCHEMA_VERSION, read_json, write_json
from ..model.augmented_node import AugmentedNodeModel
from ..numerics.nn import AdamState


@dataclass
class Checkpoint:
    model: AugmentedNodeModel
    optimizer: Optional[AdamState] = None
    training: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        payload = {'schema_version': SCHEMA_VERSION, 'kind': 'checkpoint'}
        payload.update(self.model.to_dict())
        payload['optimizer'] = None if self.optimizer is None else self.optimizer.to_dict()
        payload['training'] = self.training
        return payload


class CheckpointProcessor(BaseProcessor):
    kind = "checkpoint"

    def extract_data(self, file_path: str) -> Dict[str, Any]:
        return {'path': file_path, 'payload': read_json(file_path)}

    def validate(self, data: Dict[str, Any]) -> Dict[str, Any]:
        path = data['path']
        payload = data['payload']
        self.check_header(payload, path)
        for name in ('architecture', 'signal_spec', 'signal_scale', 'params'):
            if name not in payload:
                raise ValueError(f"{path}: checkpoint is missing {name}")
        for net in ('encoder', 'dynamics', 'decoder'):
            if net not in payload['params']:
                raise ValueError(f"{path}: checkpoint has no {net} parameters")
        return data

    def transform(self, data: Dict[str, Any]) -> Checkpoint:
        payload = data['payload']
        try:
            model = AugmentedNodeModel.from_dict(payload)
        except (KeyError, ValueError) as e:
            raise ValueError(f"{data['path']}: inconsistent checkpoint: {str(e)}") from e
        optimizer = payload.get('optimizer')
        return Checkpoint(model=model,
                          optimizer=None if optimizer is None else AdamState.from_dict(optimizer),
                          training=payload.get('training', {}))

    def write(self, file_path: str, checkpoint: Checkpoint) -> str:
        write_json(file_path, checkpoint.to_dict())
        self.log(f"Saved checkpoint to {file_path}")
        return file_path

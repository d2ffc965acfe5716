"""
Dataset files: one JSON header line followed by one JSON record per trajectory.
"""
from typing import Any, Dict

import numpy as np

from .base_processor import BaseProcessor
from ..FileRead import SCHEMA_VERSION, iter_ndjson, write_ndjson
from ..domain.qubit.entities import BLOCH_TOL, Dataset, Trajectory
from ..numerics.integrate import TimeGrid

SERIES_FIELDS = ('t', 'x', 'y', 'z', 'delta', 'gamma', 'dy', 'ux', 'uy')
RECORD_FIELDS = ('params', 'y0') + SERIES_FIELDS


class DatasetProcessor(BaseProcessor):
    kind = "dataset"

    def extract_data(self, file_path: str) -> Dict[str, Any]:
        records = iter_ndjson(file_path)
        header = next(records, None)
        if header is None:
            raise ValueError(f"Dataset {file_path} is empty")
        return {'path': file_path, 'header': header, 'records': list(records)}

    def validate(self, data: Dict[str, Any]) -> Dict[str, Any]:
        path = data['path']
        header = data['header']
        self.check_header(header, path)
        grid = TimeGrid.from_dict(header['grid'])
        records = data['records']
        if header.get('count') != len(records):
            raise ValueError(f"{path}: header declares {header.get('count')} records, found {len(records)}")
        for index, record in enumerate(records):
            missing = [name for name in RECORD_FIELDS if name not in record]
            if missing:
                raise ValueError(f"{path}: record {index} is missing fields {missing}")
            for name in SERIES_FIELDS:
                if len(record[name]) != grid.n_points:
                    raise ValueError(f"{path}: record {index} field {name} has {len(record[name])} samples, "
                                     f"grid has {grid.n_points}")
            norm = np.sqrt(np.square(record['x']) + np.square(record['y']) + np.square(record['z'])).max()
            if norm > 1.0 + BLOCH_TOL:
                self.log(f"Warning: {path} record {index} leaves the Bloch ball (norm {norm:.8f})")
        data['grid'] = grid
        return data

    def transform(self, data: Dict[str, Any]) -> Dataset:
        grid = data['grid']
        trajectories = [Trajectory.from_record(record, grid) for record in data['records']]
        self.log(f"Loaded {len(trajectories)} trajectories on {grid.n_points} grid points")
        return Dataset(dict(data['header']), trajectories)

    def write(self, file_path: str, dataset: Dataset) -> str:
        header = dict(dataset.header)
        header.update({'schema_version': SCHEMA_VERSION, 'kind': self.kind, 'count': len(dataset)})
        write_ndjson(file_path, header, (traj.to_record() for traj in dataset.trajectories))
        self.log(f"Wrote {len(dataset)} trajectories to {file_path}")
        return file_path

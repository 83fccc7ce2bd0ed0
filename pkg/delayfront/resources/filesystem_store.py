import json
import os
from typing import List, Any, Union, Dict
from logging import Logger

import numpy as np

from ..engine.base import BaseMetadataStore, BaseResource
from ..fronts.profile import Profile, read_profile, write_profile



class RunDirectory(BaseResource):
    """
    Append-only run directory: config copy, JSON reports, profile CSVs with JSON sidecars and
    DNS snapshot CSVs. An existing file is never overwritten; a numeric suffix is added instead.
    """
    def __init__(
        self, name: str, resource_path: str, metadata_store: BaseMetadataStore = None,
        loggers: Union[Logger, List[Logger]] = None
    ) -> None:
        # note: the resource_path must be a path for a directory.
        self.path = os.path.abspath(resource_path)
        super().__init__(name=name, resource_path=resource_path, metadata_store=metadata_store, loggers=loggers)

    @BaseResource.resource_accessor
    def setup(self) -> None:
        self.log(f"Setting up run directory '{self.name}' at {self.path}")
        if os.path.exists(self.path) is False:
            os.makedirs(self.path, exist_ok=True)
        self.log(f"Run directory '{self.name}' setup complete.")

    def _free_path(self, filename: str, *companions: str) -> str:
        """first of name, name_1, name_2, ... that is free (including its companion suffixes)."""
        stem, ext = os.path.splitext(filename)
        candidate, k = stem, 0
        while True:
            paths = [os.path.join(self.path, candidate + suffix) for suffix in (ext,) + companions]
            if not any(os.path.exists(p) for p in paths):
                return paths[0]
            k += 1
            candidate = f"{stem}_{k}"

    @BaseResource.resource_accessor
    def save_json(self, filename: str, content: Dict[str, Any], kind: str = "report") -> str:
        path = self._free_path(filename)
        with open(path, "x") as f:
            f.write(json.dumps(content, sort_keys=True, indent=2, default=str))
        self.record_artifact(path, kind)
        return path

    @BaseResource.resource_accessor
    def save_profile(self, filename: str, profile: Profile) -> str:
        path = self._free_path(filename, ".json")
        write_profile(profile, path)
        self.record_artifact(path, "profile")
        return path

    @BaseResource.resource_accessor
    def save_snapshot(self, filename: str, x: np.ndarray, u: np.ndarray) -> str:
        path = self._free_path(filename)
        with open(path, "x") as f:
            np.savetxt(f, np.column_stack([x, u]), delimiter=",", header="x,u", comments="", fmt="%.17g")
        self.record_artifact(path, "snapshot")
        return path

    @BaseResource.resource_accessor
    def list_artifacts(self, pattern: str = "") -> List[str]:
        if os.path.exists(self.path) is False:
            return []
        return sorted(os.path.join(self.path, f) for f in os.listdir(self.path) if f.startswith(pattern))

    @BaseResource.resource_accessor
    def load_artifact(self, artifact_path: str) -> Any:
        if artifact_path.endswith(".csv") and os.path.exists(os.path.splitext(artifact_path)[0] + ".json"):
            return read_profile(artifact_path)
        with open(artifact_path, "r") as f:
            content = f.read()
        if artifact_path.endswith(".json"):
            return json.loads(content)
        return content

    def load_profiles(self, prefix: str = "front_c=") -> List[Profile]:
        return [self.load_artifact(p) for p in self.list_artifacts(prefix) if p.endswith(".csv")]


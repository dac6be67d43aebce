"""
Procedural training/testing datasets with disjoint metal-mask families.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from tqdm import tqdm

from app.config import RunConfig, settings
from app.errors import DataError
from app.physics.phantoms import PhantomFamily, default_family_split, random_metal_mask, random_phantom
from app.physics.simulator import CONTENT_STREAM, CasePair, case_rng, simulate_case
from app.services.storage import load_case, read_json, save_case, write_json
from app.tomo.geometry import FanBeamGeometry, toy_geometry

logger = logging.getLogger(__name__)

INDEX_FILE = "dataset.json"


@dataclass
class DatasetIndex:
    root: Path
    doc: Dict[str, Any]

    @property
    def train_ids(self) -> List[str]:
        return list(self.doc["train"])

    @property
    def test_ids(self) -> List[str]:
        return list(self.doc["test"])

    @property
    def geometry(self) -> FanBeamGeometry:
        return FanBeamGeometry.from_dict(self.doc["geometry"])

    def case_dir(self, case_id: str) -> Path:
        return self.root / case_id

    def load(self, case_id: str) -> CasePair:
        directory = self.case_dir(case_id)
        if not directory.is_dir():
            raise DataError(f"Case {case_id} missing from {self.root}")
        return load_case(directory)


def case_id(index: int) -> str:
    return f"case_{index:05d}"


def make_case(index: int, seed: int, family_id: int, geom: FanBeamGeometry, config: RunConfig,
              phantom_family: PhantomFamily = "body") -> Tuple[CasePair, Dict[str, Any]]:
    '''
    Draw the phantom and mask of one case and simulate it.

    Args:
        index (int): Case index (selects the random streams with seed).
        seed (int): Dataset seed.
        family_id (int): Metal-mask family.
        geom (FanBeamGeometry): Acquisition geometry.
        config (RunConfig): Simulation settings.
        phantom_family (PhantomFamily): Anatomy family.
    Returns:
        Tuple[CasePair, Dict[str, Any]]: The case and its manifest.
    '''
    rng = case_rng(seed, index, CONTENT_STREAM)
    phantom = random_phantom(geom.grid, rng, phantom_family)
    mask, mask_params = random_metal_mask(geom.grid, rng, family_id)
    pair = simulate_case(phantom, mask, geom, seed, config.simulation, index=index)
    manifest = {
        **pair.meta,
        "case_id": case_id(index),
        "phantom_family": phantom_family,
        "mask_family": family_id,
        "mask": mask_params,
    }
    return pair, manifest


def generate_dataset(out_dir: Path, n_train: int, n_test: int, seed: int,
                     config: Optional[RunConfig] = None, workers: Optional[int] = None) -> DatasetIndex:
    '''
    Simulate a dataset: training cases use training mask families, test cases
    the held-out ones.

    Args:
        out_dir (Path): Dataset root.
        n_train (int): Number of training cases.
        n_test (int): Number of test cases.
        seed (int): Dataset seed.
        config (Optional[RunConfig]): Geometry and simulation settings.
        workers (Optional[int]): Parallel cases; results do not depend on it.
    Returns:
        DatasetIndex
    '''
    if n_train < 0 or n_test < 0:
        raise DataError("Case counts must be non-negative")
    config = config or RunConfig()
    workers = workers or settings.workers
    out_dir = Path(out_dir)
    _, geom = toy_geometry(config.geometry.n)
    train_families, test_families = default_family_split()
    jobs = [(i, train_families[i % len(train_families)]) for i in range(n_train)]
    jobs += [(n_train + j, test_families[j % len(test_families)]) for j in range(n_test)]

    def run(job):
        index, family = job
        pair, manifest = make_case(index, seed, family, geom, config)
        save_case(out_dir / case_id(index), pair, manifest)
        return index

    logger.info("Generating %d train + %d test cases in %s (%d workers)", n_train, n_test, out_dir, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(tqdm(pool.map(run, jobs), total=len(jobs), desc="gen-data"))
    else:
        for job in tqdm(jobs, desc="gen-data"):
            run(job)

    doc = {
        "seed": seed,
        "n_train": n_train,
        "n_test": n_test,
        "train": [case_id(i) for i in range(n_train)],
        "test": [case_id(n_train + j) for j in range(n_test)],
        "train_families": train_families,
        "test_families": test_families,
        "geometry": geom.to_dict(),
        "simulation": config.simulation.model_dump(),
    }
    write_json(out_dir / INDEX_FILE, doc)
    return DatasetIndex(out_dir, doc)


def open_dataset(root: Path) -> DatasetIndex:
    root = Path(root)
    return DatasetIndex(root, read_json(root / INDEX_FILE))

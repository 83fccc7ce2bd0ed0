import os
import sys
import json
import shutil
import logging
from typing import Any, Dict

import numpy as np
from dotenv import load_dotenv

sys.path.append('..')
from delayfront.fronts.profile import Profile, make_profile


# Make sure that the .env file is in the same directory as the tests
load_dotenv()

tests_path = os.path.dirname(os.path.abspath(__file__))
artifacts_root = os.path.join(tests_path, "testing_artifacts")

# desk-scale acceptance runs take minutes; enable with DELAYFRONT_SLOW=1 in the environment or in .env
SLOW = os.getenv("DELAYFRONT_SLOW", "0") == "1"
SEED = 1337


def artifacts_dir(name: str) -> str:
    """fresh testing_artifacts/<name> directory for one test module."""
    path = os.path.join(artifacts_root, name)
    if os.path.exists(path) is True:
        shutil.rmtree(path)
    os.makedirs(path)
    return path


def file_logger(path: str, name: str) -> logging.Logger:
    logging.basicConfig(
        level=logging.DEBUG,
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        filename=f"{path}/delayfront.log",
        filemode='a'
    )
    return logging.getLogger(name)


def rng() -> np.random.Generator:
    return np.random.default_rng(SEED)


def logistic_profile(kappa: float = 1.0, c: float = 2.0, h: float = 0.0, n: int = 801, span: float = 20.0) -> Profile:
    grid = np.linspace(-span, span, n)
    return make_profile(grid, kappa / (1.0 + np.exp(-grid)), c, h, kappa)


def write_config(path: str, content: Dict[str, Any]) -> str:
    with open(path, 'w') as f:
        f.write(json.dumps(content, indent=2))
    return path


KPP_SPEC = {"family": "RationalKPP", "params": {"p": 2.0}, "kappa": 1.0}

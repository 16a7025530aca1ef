"""Write a toy portrait dataset and two texture swatches for the studio
integration test. Usage: python3 make_fixtures.py <output-dir>"""

import sys
from pathlib import Path

import numpy as np
import torch

from fashiontex import load_backbones, synthesize_dataset
from fashiontex.backbones import BackbonesConfig
from fashiontex.imaging import save_image_file

root = Path(sys.argv[1])
backbones = load_backbones(BackbonesConfig())
synthesize_dataset(root / "data", 4, backbones, seed=0)
for name, channel in (("swatch_upper.png", 0), ("swatch_lower.png", 2)):
    arr = np.zeros((24, 24, 3), dtype=np.float32)
    arr[:, :, channel] = 0.85
    arr[::4, :, :] = 0.15
    save_image_file(torch.from_numpy(arr), root / name)
print("ok")

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=True)

sys.path.insert(0, str(Path(__file__).resolve().parents[2]))

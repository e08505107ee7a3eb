import sys
from pathlib import Path

# make the in-tree package importable without an install
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

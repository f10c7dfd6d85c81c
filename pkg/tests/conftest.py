import sys
from pathlib import Path

# make the shared oracle helper importable regardless of invocation dir
sys.path.insert(0, str(Path(__file__).parent))

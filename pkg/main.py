import sys
import warnings

# Suppress deprecation warnings
warnings.filterwarnings(
    "ignore", category=DeprecationWarning, message=".*PydanticDeprecatedSince20.*"
)

from src.api.cli import main

if __name__ == "__main__":
    sys.exit(main())

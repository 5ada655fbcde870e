# main.py
import os
import sys
import asyncio

# Add backend directory to Python path to enable imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "backend")))
sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from backend.src.cli.app import CliApp
from backend.src.cli.handlers import CommandHandlers


async def main(argv=None) -> int:
    """Application entry point: parse the command line and run the selected command."""
    app = CliApp()
    app.setup_commands(CommandHandlers())
    return await app.run(argv)


if __name__ == "__main__":
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        sys.exit(130)

"""AdaFL experiment entry point."""

from dotenv import load_dotenv

# Load environment variables (ADAFL_WORKERS, ADAFL_PROGRESS) from .env file
load_dotenv()

from src.adafl.cli import main

if __name__ == '__main__':
    main()

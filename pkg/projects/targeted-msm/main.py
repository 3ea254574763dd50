from dotenv import load_dotenv

from targetedmsm.cli.core import cli

load_dotenv()


if __name__ == "__main__":
    cli()

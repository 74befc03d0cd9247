import sys

from laguerre_ebd.cli.app import main as run_cli


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

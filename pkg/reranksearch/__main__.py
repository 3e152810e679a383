import sys

from reranksearch.cli import main

if __name__ == "__main__":
    sys.exit(main())

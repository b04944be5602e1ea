import sys

from harness.cli import main

if __name__ == '__main__':
    # e.g. python main.py pipeline --manifest scenarios/pipeline/toy_capa.yaml
    sys.exit(main(sys.argv[1:]))

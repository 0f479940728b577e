import sys

import pytest

if __name__ == "__main__":
    # extra arguments go to pytest, e.g. `python test.py -k "not reference"`
    sys.exit(pytest.main(["tests", "-vv", "--tb=short", *sys.argv[1:]]))

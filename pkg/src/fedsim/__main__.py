from fedsim.cli import main
import sys

sys.exit(main())

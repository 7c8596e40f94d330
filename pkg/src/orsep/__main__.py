from orsep.cli import main
import sys
sys.exit(main())

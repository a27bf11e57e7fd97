from spdc_calib.cli import main

raise SystemExit(main())

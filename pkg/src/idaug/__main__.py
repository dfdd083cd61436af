from idaug.cli import main

raise SystemExit(main())

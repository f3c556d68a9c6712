from macimmse.cli import main

raise SystemExit(main())

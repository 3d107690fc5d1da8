from nedstats.cli import main

main()

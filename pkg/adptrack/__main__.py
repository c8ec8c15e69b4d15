from adptrack.cli import main

main()

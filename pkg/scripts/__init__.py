# Command-line entry points

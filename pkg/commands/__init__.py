"""
FFCE Segmenter - Command Extensions
Each module registers its subcommands through a setup(subparsers) hook.
"""

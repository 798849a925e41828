"""Sub-command groups. Each module exposes ``register(subparsers)``."""

"""Co-contextual checking: constraints, class requirements, the tree checker and incremental rechecking."""

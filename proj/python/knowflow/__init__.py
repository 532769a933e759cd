"""Knowledge-flow orchestration engine (pybind11 bindings over the C++ core)."""

try:
    from ._core import (
        Graph,
        KnowflowError,
        apply_plan,
        new_graph,
        parse_graph,
        run_scripted,
    )
except ImportError:  # in-tree builds keep _core next to the package
    from _core import (
        Graph,
        KnowflowError,
        apply_plan,
        new_graph,
        parse_graph,
        run_scripted,
    )

__all__ = [
    "Graph",
    "KnowflowError",
    "apply_plan",
    "new_graph",
    "parse_graph",
    "run_scripted",
]
